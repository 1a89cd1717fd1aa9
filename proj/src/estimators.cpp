#include "dualac/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "dualac/errors.hpp"

namespace dualac {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<double> resolve_weights(std::span<const double> weights, std::size_t n, const char* what) {
  if (weights.empty()) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  if (weights.size() != n) throw InvalidArgument(std::string(what) + " must have one entry per path");
  return {weights.begin(), weights.end()};
}

void require_nonempty(std::span<const Trajectory> trajs) {
  if (trajs.empty()) throw InvalidArgument("estimator needs a nonempty batch");
}

int window_length(const Trajectory& traj, int k) {
  if (k < 0) throw InvalidArgument("k must be >= 0");
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(k) + 1, traj.length()));
}

std::vector<double> to_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_json_array(const nlohmann::json& j) {
  const auto xs = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

}  // namespace

void Trajectory::validate() const {
  if (actions.empty()) throw InvalidArgument("trajectory has no steps");
  if (states.size() != actions.size() + 1 || rewards.size() != actions.size()) {
    throw InvalidArgument("trajectory needs T+1 states, T actions and T rewards");
  }
  if (!(start_weight >= 0.0)) throw InvalidArgument("start_weight must be >= 0");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) + index);
}

std::vector<Trajectory> sample_trajectories(Environment& env, const Policy& policy, int m, int horizon,
                                            std::uint64_t seed) {
  if (m < 1) throw InvalidArgument("m must be >= 1");
  if (horizon < 1) throw InvalidArgument("horizon must be >= 1");
  std::vector<Trajectory> out(static_cast<std::size_t>(m));
  for (int l = 0; l < m; ++l) {
    auto& traj = out[static_cast<std::size_t>(l)];
    Rng action_rng(derive_seed(seed, 1, static_cast<std::uint64_t>(l)));
    traj.states.push_back(env.reset(derive_seed(seed, 0, static_cast<std::uint64_t>(l))));
    for (int t = 0; t < horizon; ++t) {
      Action a = policy.sample(traj.states.back(), action_rng);
      StepResult step = env.step(a);
      traj.actions.push_back(std::move(a));
      traj.rewards.push_back(step.reward);
      traj.states.push_back(std::move(step.observation));
      if (step.done) {
        traj.terminal = t + 1 < horizon;
        break;
      }
    }
  }
  return out;
}

double mc_return(const Trajectory& traj, double gamma, int k) {
  const std::size_t n = k < 0 ? traj.rewards.size()
                              : std::min<std::size_t>(static_cast<std::size_t>(k) + 1, traj.rewards.size());
  double acc = 0.0;
  double discount = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += discount * traj.rewards[i];
    discount *= gamma;
  }
  return acc;
}

double trajectory_delta(const Trajectory& traj, const LinearValue& v, double gamma, int k) {
  traj.validate();
  const int len = window_length(traj, k);
  return mc_return(traj, gamma, len - 1) + std::pow(gamma, len) * v.value(traj.states[static_cast<std::size_t>(len)]) -
         v.value(traj.states.front());
}

Vector grad_alpha_estimate(std::span<const Trajectory> trajs, const LinearValue& v, const SoftmaxDistribution& alpha,
                           double gamma, int k, std::span<const double> weights) {
  require_nonempty(trajs);
  const auto w = resolve_weights(weights, trajs.size(), "weights");
  Vector g = Vector::Zero(alpha.logits().size());
  for (std::size_t j = 0; j < trajs.size(); ++j) {
    const int s0 = as_index(trajs[j].states.front());
    if (s0 < 0 || s0 >= alpha.logits().size()) throw InvalidArgument("start state out of range for alpha");
    g += w[j] * trajectory_delta(trajs[j], v, gamma, k) * alpha.log_prob_grad(s0);
  }
  return g;
}

Vector grad_pi_estimate(std::span<const Trajectory> trajs, const LinearValue& v, const Policy& policy, double gamma,
                        int k, std::span<const double> weights) {
  require_nonempty(trajs);
  const auto w = resolve_weights(weights, trajs.size(), "weights");
  Vector g = Vector::Zero(policy.num_params());
  Vector score_sum(policy.num_params());
  Vector score(policy.num_params());
  for (std::size_t j = 0; j < trajs.size(); ++j) {
    const auto& traj = trajs[j];
    const double delta = trajectory_delta(traj, v, gamma, k);
    const double coef = w[j] * traj.start_weight * delta;
    if (coef == 0.0) continue;
    score_sum.setZero();
    const int len = window_length(traj, k);
    for (int i = 0; i < len; ++i) {
      policy.log_prob_and_grad(traj.states[static_cast<std::size_t>(i)], traj.actions[static_cast<std::size_t>(i)], score);
      score_sum += score;
    }
    g += coef * score_sum;
  }
  if (!g.allFinite()) throw NumericalError("policy gradient estimate is not finite");
  return g;
}

Vector grad_v_estimate(std::span<const Trajectory> trajs, std::span<const Trajectory> behavior, const LinearValue& v,
                       double gamma, int k, double eta_v, const GradVOptions& options) {
  require_nonempty(trajs);
  if (!(eta_v >= 0.0)) throw InvalidArgument("eta_v must be >= 0");
  const auto w = resolve_weights(options.weights, trajs.size(), "weights");
  Vector g = Vector::Zero(v.dim());

  const double gk = std::pow(gamma, k + 1);
  if (options.mu_states.empty()) {
    const auto mw = resolve_weights(options.mu_weights, trajs.size(), "mu_weights");
    for (std::size_t j = 0; j < trajs.size(); ++j) g += (1.0 - gk) * mw[j] * v.features(trajs[j].states.front());
  } else {
    const auto mw = resolve_weights(options.mu_weights, options.mu_states.size(), "mu_weights");
    for (std::size_t j = 0; j < options.mu_states.size(); ++j) g += (1.0 - gk) * mw[j] * v.features(options.mu_states[j]);
  }

  for (std::size_t j = 0; j < trajs.size(); ++j) {
    const auto& traj = trajs[j];
    traj.validate();
    const int len = window_length(traj, k);
    const double c = w[j] * traj.start_weight;
    g += c * (std::pow(gamma, len) * v.features(traj.states[static_cast<std::size_t>(len)]) - v.features(traj.states.front()));
  }

  if (eta_v > 0.0 && !behavior.empty()) {
    const auto bw = resolve_weights(options.behavior_weights, behavior.size(), "behavior_weights");
    for (std::size_t j = 0; j < behavior.size(); ++j) {
      const auto vg = v.value_and_grad(behavior[j].states.front());
      g -= 2.0 * eta_v * bw[j] * (mc_return(behavior[j], gamma) - vg.value) * vg.grad;
    }
  }
  return g;
}

std::vector<double> alpha_closed_form(std::span<const double> delta_means, double eta_alpha) {
  if (!(eta_alpha > 0.0)) throw InvalidArgument("eta_alpha must be > 0");
  std::vector<double> out(delta_means.size());
  std::transform(delta_means.begin(), delta_means.end(), out.begin(),
                 [eta_alpha](double d) { return std::max(0.0, d) / eta_alpha; });
  return out;
}

double alpha_objective(double tilde_alpha, double delta_mean, double eta_mu, double eta_alpha,
                       AlphaPenaltyConvention convention) {
  const double c = convention == AlphaPenaltyConvention::kHalf ? 0.5 : 1.0;
  return (tilde_alpha + eta_mu) * delta_mean - c * eta_alpha * tilde_alpha * tilde_alpha;
}

void write_trajectories(std::ostream& out, std::span<const Trajectory> trajs) {
  for (const auto& traj : trajs) {
    traj.validate();
    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t t = 0; t < traj.length(); ++t) {
      steps.push_back({{"state", to_vector(traj.states[t])}, {"action", to_vector(traj.actions[t])}, {"reward", traj.rewards[t]}});
    }
    const nlohmann::json line = {{"start_weight", traj.start_weight},
                                 {"terminal", traj.terminal},
                                 {"steps", std::move(steps)},
                                 {"final_state", to_vector(traj.states.back())}};
    out << line.dump() << '\n';
  }
}

std::vector<Trajectory> read_trajectories(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Trajectory traj;
      traj.start_weight = j.value("start_weight", 1.0);
      traj.terminal = j.value("terminal", false);
      for (const auto& step : j.at("steps")) {
        traj.states.push_back(from_json_array(step.at("state")));
        traj.actions.push_back(from_json_array(step.at("action")));
        traj.rewards.push_back(step.at("reward").get<double>());
      }
      traj.states.push_back(from_json_array(j.at("final_state")));
      traj.validate();
      out.push_back(std::move(traj));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(std::string("malformed trajectory line: ") + e.what());
    }
  }
  return out;
}

}  // namespace dualac

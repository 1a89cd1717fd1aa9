#include "dualac/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "dualac/errors.hpp"

namespace dualac {

using nlohmann::json;

// --- Config -----------------------------------------------------------------

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoMultistep: return "no_multistep";
    case Ablation::kNoPathreg: return "no_pathreg";
    case Ablation::kNoUnbiasedV: return "no_unbiased_v";
    case Ablation::kNaive: return "naive";
  }
  return "full";
}

Ablation ablation_from_string(const std::string& name) {
  for (Ablation a : {Ablation::kFull, Ablation::kNoMultistep, Ablation::kNoPathreg, Ablation::kNoUnbiasedV, Ablation::kNaive}) {
    if (to_string(a) == name) return a;
  }
  throw InvalidArgument("unknown ablation '" + name + "'");
}

void DualAcConfig::validate() const {
  if (k < 0) throw InvalidArgument("k must be >= 0");
  if (!(eta_v >= 0.0)) throw InvalidArgument("eta_v must be >= 0");
  if (!(eta_alpha > 0.0)) throw InvalidArgument("eta_alpha must be > 0");
  if (!(eta_mu > 0.0 && eta_mu <= 1.0)) throw InvalidArgument("eta_mu must lie in (0, 1]");
  schedule.validate();
  if (batch_m < 1) throw InvalidArgument("batch_m must be >= 1");
  if (gamma > 0.0 && !(gamma < 1.0)) throw InvalidArgument("gamma must lie in (0, 1)");
  if (inner_v.max_iters < 1) throw InvalidArgument("inner_v.max_iters must be >= 1");
  if (!(inner_v.grad_tol >= 0.0)) throw InvalidArgument("inner_v.grad_tol must be >= 0");
  if (!(inner_v.ridge > 0.0)) throw InvalidArgument("inner_v.ridge must be > 0");
  if (!(inner_v.lr > 0.0 && inner_v.lr <= 1.0)) throw InvalidArgument("inner_v.lr must lie in (0, 1]");
  if (inner_v.biased_steps < 1 || inner_v.fixed_steps < 0) throw InvalidArgument("inner_v step counts are invalid");
  if (cg.max_iters < 1 || !(cg.damping >= 0.0)) throw InvalidArgument("cg settings are invalid");
  if (iterations < 0) throw InvalidArgument("iterations must be >= 0");
  if (n_features < 1) throw InvalidArgument("n_features must be >= 1");
}

DualAcConfig DualAcConfig::effective() const {
  DualAcConfig c = *this;
  switch (ablation) {
    case Ablation::kFull: break;
    case Ablation::kNoMultistep:
      c.k = 0;
      c.eta_v = 0.0;
      break;
    case Ablation::kNoPathreg: c.eta_v = 0.0; break;
    case Ablation::kNoUnbiasedV: c.inner_v.fixed_steps = inner_v.biased_steps; break;
    case Ablation::kNaive:
      c.k = 0;
      c.eta_v = 0.0;
      c.inner_v.fixed_steps = 1;
      break;
  }
  return c;
}

json config_to_json(const DualAcConfig& cfg) {
  return {{"k", cfg.k},
          {"eta_v", cfg.eta_v},
          {"eta_alpha", cfg.eta_alpha},
          {"eta_mu", cfg.eta_mu},
          {"schedule", {{"c", cfg.schedule.c}, {"n0", cfg.schedule.n0}, {"beta", cfg.schedule.beta},
                        {"literal_mode", cfg.schedule.literal_mode}}},
          {"batch_m", cfg.batch_m},
          {"gamma", cfg.gamma},
          {"horizon", cfg.horizon},
          {"inner_v", {{"max_iters", cfg.inner_v.max_iters}, {"grad_tol", cfg.inner_v.grad_tol},
                       {"ridge", cfg.inner_v.ridge}, {"lr", cfg.inner_v.lr},
                       {"biased_steps", cfg.inner_v.biased_steps}, {"fixed_steps", cfg.inner_v.fixed_steps}}},
          {"cg", {{"max_iters", cfg.cg.max_iters}, {"damping", cfg.cg.damping}, {"residual_tol", cfg.cg.residual_tol}}},
          {"normalize", cfg.normalize},
          {"update", cfg.update == PolicyUpdate::kNatural ? "natural" : "exact_prox"},
          {"ablation", to_string(cfg.ablation)},
          {"seed", cfg.seed},
          {"iterations", cfg.iterations},
          {"n_features", cfg.n_features},
          {"initial_log_std", cfg.initial_log_std}};
}

namespace {

template <class T>
void read_field(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (known.count(key) == 0) throw InvalidArgument("unknown config field '" + where + key + "'");
  }
}

}  // namespace

DualAcConfig config_from_json(const json& j, DualAcConfig c) {
  try {
    reject_unknown(j,
                   {"k", "eta_v", "eta_alpha", "eta_mu", "schedule", "batch_m", "gamma", "horizon", "inner_v", "cg",
                    "normalize", "update", "ablation", "seed", "iterations", "n_features", "initial_log_std"},
                   "");
    read_field(j, "k", c.k);
    read_field(j, "eta_v", c.eta_v);
    read_field(j, "eta_alpha", c.eta_alpha);
    read_field(j, "eta_mu", c.eta_mu);
    if (auto it = j.find("schedule"); it != j.end()) {
      reject_unknown(*it, {"c", "n0", "beta", "literal_mode"}, "schedule.");
      read_field(*it, "c", c.schedule.c);
      read_field(*it, "n0", c.schedule.n0);
      read_field(*it, "beta", c.schedule.beta);
      read_field(*it, "literal_mode", c.schedule.literal_mode);
    }
    read_field(j, "batch_m", c.batch_m);
    read_field(j, "gamma", c.gamma);
    read_field(j, "horizon", c.horizon);
    if (auto it = j.find("inner_v"); it != j.end()) {
      reject_unknown(*it, {"max_iters", "grad_tol", "ridge", "lr", "biased_steps", "fixed_steps"}, "inner_v.");
      read_field(*it, "max_iters", c.inner_v.max_iters);
      read_field(*it, "grad_tol", c.inner_v.grad_tol);
      read_field(*it, "ridge", c.inner_v.ridge);
      read_field(*it, "lr", c.inner_v.lr);
      read_field(*it, "biased_steps", c.inner_v.biased_steps);
      read_field(*it, "fixed_steps", c.inner_v.fixed_steps);
    }
    if (auto it = j.find("cg"); it != j.end()) {
      reject_unknown(*it, {"max_iters", "damping", "residual_tol"}, "cg.");
      read_field(*it, "max_iters", c.cg.max_iters);
      read_field(*it, "damping", c.cg.damping);
      read_field(*it, "residual_tol", c.cg.residual_tol);
    }
    read_field(j, "normalize", c.normalize);
    if (auto it = j.find("update"); it != j.end()) {
      const auto u = it->get<std::string>();
      if (u == "natural") {
        c.update = PolicyUpdate::kNatural;
      } else if (u == "exact_prox") {
        c.update = PolicyUpdate::kExactProx;
      } else {
        throw InvalidArgument("update must be 'natural' or 'exact_prox'");
      }
    }
    if (auto it = j.find("ablation"); it != j.end()) c.ablation = ablation_from_string(it->get<std::string>());
    read_field(j, "seed", c.seed);
    read_field(j, "iterations", c.iterations);
    read_field(j, "n_features", c.n_features);
    read_field(j, "initial_log_std", c.initial_log_std);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

DualAcConfig load_config(const std::filesystem::path& path, DualAcConfig base) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, std::move(base));
}

// --- Records ----------------------------------------------------------------

json record_to_json(const IterationRecord& r) {
  return {{"iteration", r.iteration},
          {"mean_return", r.mean_return},
          {"mean_discounted_return", r.mean_discounted_return},
          {"eval_return", r.eval_return ? json(*r.eval_return) : json(nullptr)},
          {"mean_delta", r.mean_delta},
          {"v_converged", r.v_converged},
          {"v_residual", r.v_residual},
          {"v_iterations", r.v_iterations},
          {"kl", r.kl},
          {"stepsize", r.stepsize},
          {"g_finv_g", r.g_finv_g},
          {"normalize_fallback", r.normalize_fallback},
          {"wall_time", r.wall_time}};
}

IterationRecord record_from_json(const json& j) {
  IterationRecord r;
  r.iteration = j.at("iteration").get<int>();
  r.mean_return = j.at("mean_return").get<double>();
  r.mean_discounted_return = j.at("mean_discounted_return").get<double>();
  if (!j.at("eval_return").is_null()) r.eval_return = j.at("eval_return").get<double>();
  r.mean_delta = j.at("mean_delta").get<double>();
  r.v_converged = j.at("v_converged").get<bool>();
  r.v_residual = j.at("v_residual").get<double>();
  r.v_iterations = j.at("v_iterations").get<int>();
  r.kl = j.at("kl").get<double>();
  r.stepsize = j.at("stepsize").get<double>();
  r.g_finv_g = j.at("g_finv_g").get<double>();
  r.normalize_fallback = j.at("normalize_fallback").get<bool>();
  r.wall_time = j.at("wall_time").get<double>();
  return r;
}

// --- Training ---------------------------------------------------------------

namespace {

void resolve_env_settings(TrainingState& s, const DualAcConfig& cfg) {
  const EnvSpec& spec = s.env->spec();
  s.gamma = cfg.gamma > 0.0 ? cfg.gamma : spec.gamma_hint;
  s.horizon = cfg.horizon > 0 ? cfg.horizon : spec.horizon;
  if (!(s.gamma > 0.0 && s.gamma < 1.0)) throw InvalidArgument("discount must lie in (0, 1)");
  if (spec.tabular) s.mdp = as_tabular(*s.env).with_gamma(s.gamma);
}

/// Observations of rollouts under a zero-mean Gaussian with the initial stddev.
std::vector<Observation> exploration_states(Environment& env, int m, int horizon, double log_std, std::uint64_t seed) {
  std::vector<Observation> out;
  const EnvSpec& spec = env.spec();
  for (int l = 0; l < m; ++l) {
    Rng rng(derive_seed(seed, 1, static_cast<std::uint64_t>(l)));
    std::normal_distribution<double> noise(0.0, std::exp(log_std));
    out.push_back(env.reset(derive_seed(seed, 0, static_cast<std::uint64_t>(l))));
    for (int t = 0; t < horizon; ++t) {
      Action a(spec.action_dim);
      for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = noise(rng);
      StepResult step = env.step(a);
      out.push_back(std::move(step.observation));
      if (step.done) break;
    }
  }
  return out;
}

struct Window {
  int traj = 0;
  int start = 0;
  int len = 0;
  double reward = 0.0;  // sum_{i<len} gamma^i r_{start+i}
};

struct Batch {
  std::vector<Trajectory> trajs;
  std::vector<Matrix> phi;          // per trajectory, (T+1) x d value features
  std::vector<Vector> targets;      // per trajectory, bootstrapped discounted returns from each offset
  std::vector<Window> windows;
  std::vector<int> window_state;    // tabular start state per window, else -1
};

Batch build_batch(std::vector<Trajectory> trajs, const LinearValue& v, double gamma, int k) {
  Batch b;
  b.trajs = std::move(trajs);
  const Eigen::Index d = v.dim();
  for (std::size_t j = 0; j < b.trajs.size(); ++j) {
    const auto& traj = b.trajs[j];
    const int n = static_cast<int>(traj.length());
    Matrix phi(n + 1, d);
    for (int i = 0; i <= n; ++i) phi.row(i) = v.features(traj.states[static_cast<std::size_t>(i)]).transpose();

    Vector g(n + 1);
    g(n) = traj.terminal ? 0.0 : phi.row(n).dot(v.weights());
    for (int i = n - 1; i >= 0; --i) g(i) = traj.rewards[static_cast<std::size_t>(i)] + gamma * g(i + 1);

    for (int i = 0; i < n; ++i) {
      Window w;
      w.traj = static_cast<int>(j);
      w.start = i;
      w.len = std::min(k + 1, n - i);
      double disc = 1.0;
      for (int l = 0; l < w.len; ++l) {
        w.reward += disc * traj.rewards[static_cast<std::size_t>(i + l)];
        disc *= gamma;
      }
      b.windows.push_back(w);
      b.window_state.push_back(v.is_tabular() ? as_index(traj.states[static_cast<std::size_t>(i)]) : -1);
    }
    b.phi.push_back(std::move(phi));
    b.targets.push_back(std::move(g));
  }
  return b;
}

std::vector<double> window_deltas(const Batch& b, const Vector& theta, double gamma) {
  std::vector<double> out(b.windows.size());
  std::vector<Vector> values;
  values.reserve(b.phi.size());
  for (const auto& phi : b.phi) values.emplace_back(phi * theta);
  for (std::size_t w = 0; w < b.windows.size(); ++w) {
    const Window& win = b.windows[w];
    const Vector& val = values[static_cast<std::size_t>(win.traj)];
    out[w] = win.reward + std::pow(gamma, win.len) * val(win.start + win.len) - val(win.start);
  }
  return out;
}

/// Start weights alpha~ + eta_mu. Tabular groups windows by start state; otherwise per window.
std::vector<double> start_weights(const Batch& b, const std::vector<double>& deltas, const DualAcConfig& cfg) {
  std::vector<double> tilde(deltas.size());
  if (!b.window_state.empty() && b.window_state.front() >= 0) {
    std::map<int, std::pair<double, int>> by_state;
    for (std::size_t w = 0; w < deltas.size(); ++w) {
      auto& acc = by_state[b.window_state[w]];
      acc.first += deltas[w];
      acc.second += 1;
    }
    std::map<int, double> means;
    for (const auto& [s, acc] : by_state) means[s] = acc.first / acc.second;
    for (std::size_t w = 0; w < deltas.size(); ++w) tilde[w] = means[b.window_state[w]];
  } else {
    tilde = deltas;
  }
  std::vector<double> u = alpha_closed_form(tilde, cfg.eta_alpha);
  for (double& x : u) x += cfg.eta_mu;
  return u;
}

struct ValueFit {
  Vector theta;
  bool converged = false;
  double residual = 0.0;
  int iterations = 0;
};

/**
 * Minimizes the sampled path-regularized Lagrangian in the value weights plus the
 * proximal term (ridge / 2) |theta - theta_prev|^2. The objective is quadratic, so its
 * Hessian Q and linear part are assembled once and gradients cost one mat-vec.
 */
ValueFit fit_value_weights(const Batch& b, const std::vector<double>& u, const Vector& theta_prev, double gamma,
                           const DualAcConfig& cfg) {
  const Eigen::Index d = theta_prev.size();
  const double inv_w = 1.0 / static_cast<double>(b.windows.size());
  const double inv_m = 1.0 / static_cast<double>(b.trajs.size());
  Vector lin = Vector::Zero(d);
  const double gk = std::pow(gamma, cfg.k + 1);
  for (const auto& phi : b.phi) lin += (1.0 - gk) * inv_m * phi.row(0).transpose();
  for (std::size_t w = 0; w < b.windows.size(); ++w) {
    const Window& win = b.windows[w];
    const Matrix& phi = b.phi[static_cast<std::size_t>(win.traj)];
    lin += u[w] * inv_w * (std::pow(gamma, win.len) * phi.row(win.start + win.len) - phi.row(win.start)).transpose();
  }

  Matrix q = cfg.inner_v.ridge * Matrix::Identity(d, d);
  Vector c = lin - cfg.inner_v.ridge * theta_prev;
  if (cfg.eta_v > 0.0) {
    const double scale = 2.0 * cfg.eta_v * inv_w;
    for (std::size_t j = 0; j < b.phi.size(); ++j) {
      const auto starts = b.phi[j].topRows(b.phi[j].rows() - 1);
      q.noalias() += scale * starts.transpose() * starts;
      c.noalias() -= scale * starts.transpose() * b.targets[j].head(starts.rows());
    }
  }

  const Vector precond = q.diagonal().cwiseInverse();
  const Vector sqrt_p = precond.cwiseSqrt();
  const Matrix scaled = sqrt_p.asDiagonal() * q * sqrt_p.asDiagonal();
  const double lambda_max = Eigen::SelfAdjointEigenSolver<Matrix>(scaled, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double kappa_safe = 1.0 / lambda_max;

  const GradientFn grad = [&](const Vector& th) -> Vector { return q * th + c; };
  const double g0 = (q * theta_prev + c).norm();
  FitValueResult r;
  if (cfg.inner_v.fixed_steps > 0) {
    const double kappa = cfg.inner_v.lr * kappa_safe;
    r = fit_value(theta_prev, grad, [kappa](int) { return kappa; }, cfg.inner_v.fixed_steps, 0.0, &precond);
  } else {
    r = fit_value(theta_prev, grad, [kappa_safe](int) { return kappa_safe; }, cfg.inner_v.max_iters,
                  cfg.inner_v.grad_tol * std::max(g0, 1e-12), &precond);
  }
  return {std::move(r.params), r.converged, r.grad_norm, r.iterations};
}

}  // namespace

TrainingState init_training(const DualAcConfig& cfg_in, std::unique_ptr<Environment> env) {
  if (!env) throw InvalidArgument("environment is null");
  const DualAcConfig cfg = cfg_in.effective();
  cfg.validate();
  TrainingState s;
  s.env = std::move(env);
  resolve_env_settings(s, cfg);
  const EnvSpec& spec = s.env->spec();
  if (spec.tabular) {
    s.policy = std::make_unique<TabularSoftmaxPolicy>(spec.n_states, spec.n_actions);
    s.value.emplace(IndicatorFeatures{spec.n_states});
  } else {
    const auto states = exploration_states(*s.env, cfg.batch_m, s.horizon, cfg.initial_log_std, derive_seed(cfg.seed, 4, 0));
    const double bw = median_trick_bandwidth(states);
    RbfFeatureMap policy_map(cfg.n_features, spec.observation_dim, bw, derive_seed(cfg.seed, 3, 0));
    RbfFeatureMap value_map(cfg.n_features, spec.observation_dim, bw, derive_seed(cfg.seed, 3, 1));
    s.policy = std::make_unique<GaussianRbfPolicy>(std::move(policy_map), spec.action_dim, cfg.initial_log_std);
    s.value.emplace(RbfValueFeatures{std::move(value_map), true});
  }
  return s;
}

IterationRecord dual_ac_iteration(TrainingState& state, const DualAcConfig& cfg_in) {
  const auto t0 = std::chrono::steady_clock::now();
  const DualAcConfig cfg = cfg_in.effective();
  cfg.validate();
  if (!state.env || !state.policy || !state.value) throw InvalidStateError("training state is not initialized");
  const int t = state.iteration + 1;
  const double gamma = state.gamma;
  std::vector<std::string> trace;
  IterationRecord rec;
  rec.iteration = t;

  // Sample m trajectories from mu under pi^{t-1}.
  auto trajs = sample_trajectories(*state.env, *state.policy, cfg.batch_m, state.horizon,
                                   derive_seed(cfg.seed, 2, static_cast<std::uint64_t>(t)));
  trace.emplace_back("sample");
  for (const auto& traj : trajs) {
    rec.mean_return += mc_return(traj, 1.0) / cfg.batch_m;
    rec.mean_discounted_return += mc_return(traj, gamma) / cfg.batch_m;
  }
  const Batch batch = build_batch(std::move(trajs), *state.value, gamma, cfg.k);

  // Fit V^t on L_r with pi_b = pi^{t-1}; the alpha~ inside uses V^{t-1} so the objective is quadratic.
  const Vector theta_prev = state.value->weights();
  const auto u_prev = start_weights(batch, window_deltas(batch, theta_prev, gamma), cfg);
  ValueFit fit = fit_value_weights(batch, u_prev, theta_prev, gamma, cfg);
  rec.v_converged = fit.converged;
  rec.v_residual = fit.residual;
  rec.v_iterations = fit.iterations;
  trace.emplace_back("fit_v");

  // alpha~^t in closed form from V^t.
  const auto deltas = window_deltas(batch, fit.theta, gamma);
  const auto u = start_weights(batch, deltas, cfg);
  double delta_acc = 0.0;
  for (double dl : deltas) delta_acc += dl;
  rec.mean_delta = delta_acc / static_cast<double>(deltas.size());
  trace.emplace_back("alpha");

  rec.stepsize = stepsize(cfg.schedule, t);
  trace.emplace_back("stepsize");

  // g_pi: every step's score is weighted by the sum of (alpha~ + eta_mu) delta over the windows covering it.
  const Eigen::Index p = state.policy->num_params();
  std::size_t n_steps = 0;
  for (const auto& traj : batch.trajs) n_steps += traj.length();
  Matrix scores_t(p, static_cast<Eigen::Index>(n_steps));
  Vector coef = Vector::Zero(static_cast<Eigen::Index>(n_steps));
  std::vector<Observation> states;
  states.reserve(n_steps);
  {
    std::vector<Eigen::Index> offset(batch.trajs.size() + 1, 0);
    for (std::size_t j = 0; j < batch.trajs.size(); ++j) {
      offset[j + 1] = offset[j] + static_cast<Eigen::Index>(batch.trajs[j].length());
    }
    Vector diff = Vector::Zero(static_cast<Eigen::Index>(n_steps) + 1);
    const double inv_w = 1.0 / static_cast<double>(batch.windows.size());
    for (std::size_t w = 0; w < batch.windows.size(); ++w) {
      const Window& win = batch.windows[w];
      const Eigen::Index base = offset[static_cast<std::size_t>(win.traj)];
      const double c = inv_w * u[w] * deltas[w];
      diff(base + win.start) += c;
      diff(base + win.start + win.len) -= c;
    }
    double run = 0.0;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n_steps); ++i) {
      run += diff(i);
      coef(i) = run;
    }
    Eigen::Index col = 0;
    for (const auto& traj : batch.trajs) {
      for (std::size_t i = 0; i < traj.length(); ++i, ++col) {
        state.policy->log_prob_and_grad(traj.states[i], traj.actions[i], scores_t.col(col));
        states.push_back(traj.states[i]);
      }
    }
  }
  const Vector g = scores_t * coef;
  if (!g.allFinite()) throw NumericalError("policy gradient estimate is not finite at iteration " + std::to_string(t));
  trace.emplace_back("grad_pi");

  // Natural-gradient step with the empirical Fisher of the current batch, or the exact prox.
  const LinearOperator fisher = fisher_from_scores(scores_t.transpose(), cfg.cg.damping);
  const Vector theta = state.policy->params();
  const NaturalStepResult step = natural_gradient_step(theta, g, fisher, rec.stepsize, cfg.normalize, cfg.cg);
  rec.g_finv_g = step.g_finv_g;
  rec.normalize_fallback = step.fallback;
  Vector new_theta = step.params;
  if (cfg.update == PolicyUpdate::kExactProx) {
    const double zeta = step.normalized ? rec.stepsize / std::sqrt(step.g_finv_g) : rec.stepsize;
    new_theta = exact_prox_pi(*state.policy, g, zeta, states).params;
  }
  if (!new_theta.allFinite()) throw NumericalError("policy update is not finite at iteration " + std::to_string(t));
  auto new_policy = state.policy->clone();
  new_policy->set_params(new_theta);
  rec.kl = mean_kl(*new_policy, *state.policy, states);
  trace.emplace_back("update_pi");

  // Commit only after every stage succeeded.
  state.value->set_weights(fit.theta);
  state.policy = std::move(new_policy);
  state.iteration = t;
  state.trace = std::move(trace);
  if (state.mdp) {
    const auto* tab = dynamic_cast<const TabularSoftmaxPolicy*>(state.policy.get());
    if (tab != nullptr) rec.eval_return = expected_return(*state.mdp, tab->tabular());
  }
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

NamedArrays save_training(const TrainingState& state, const DualAcConfig& cfg) {
  if (!state.env || !state.policy || !state.value) throw InvalidStateError("training state is not initialized");
  NamedArrays a;
  a.meta["env"] = state.env->spec().name;
  a.meta["config"] = config_to_json(cfg).dump();
  a.put_scalar("iteration", state.iteration);
  a.put_scalar("gamma", state.gamma);
  a.put_scalar("horizon", state.horizon);
  a.merge(state.policy->to_arrays(), "policy.");
  a.merge(state.value->to_arrays(), "value.");
  return a;
}

TrainingState load_training(const NamedArrays& a, const DualAcConfig& cfg, std::unique_ptr<Environment> env) {
  if (!env) throw InvalidArgument("environment is null");
  if (a.meta.count("env") != 0 && a.meta.at("env") != env->spec().name) {
    throw InvalidArgument("checkpoint was written for environment '" + a.meta.at("env") + "'");
  }
  TrainingState s;
  s.env = std::move(env);
  resolve_env_settings(s, cfg.effective());
  s.iteration = static_cast<int>(a.scalar("iteration"));
  s.gamma = a.scalar("gamma");
  s.horizon = static_cast<int>(a.scalar("horizon"));
  if (s.mdp) s.mdp = s.mdp->with_gamma(s.gamma);
  const NamedArrays pa = a.subset("policy.");
  const std::string family = pa.meta.count("family") != 0 ? pa.meta.at("family") : "";
  if (family == "tabular_softmax") {
    s.policy = std::make_unique<TabularSoftmaxPolicy>(TabularSoftmaxPolicy::from_arrays(pa));
  } else if (family == "gaussian_rbf") {
    s.policy = std::make_unique<GaussianRbfPolicy>(GaussianRbfPolicy::from_arrays(pa));
  } else {
    throw InvalidArgument("checkpoint has unknown policy family '" + family + "'");
  }
  s.value.emplace(LinearValue::from_arrays(a.subset("value.")));
  return s;
}

std::vector<IterationRecord> run_experiment(const DualAcConfig& cfg, const std::string& env_name,
                                            const std::optional<std::filesystem::path>& out_dir, const RecordSink& sink) {
  cfg.validate();
  TrainingState state = init_training(cfg, make_env(env_name));
  std::ofstream metrics;
  std::filesystem::path ckpt;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    metrics.open(*out_dir / "metrics.jsonl");
    if (!metrics) throw InvalidArgument("cannot write metrics in " + out_dir->string());
    ckpt = *out_dir / "checkpoint.json";
    save_training(state, cfg).save(ckpt);
    std::ofstream(*out_dir / "config.json") << config_to_json(cfg).dump(2) << '\n';
  }
  std::vector<IterationRecord> records;
  for (int i = 0; i < cfg.iterations; ++i) {
    IterationRecord rec = dual_ac_iteration(state, cfg);
    if (out_dir) {
      metrics << record_to_json(rec).dump() << '\n' << std::flush;
      save_training(state, cfg).save(ckpt);
    }
    if (sink) sink(rec);
    records.push_back(rec);
  }
  return records;
}

double final_return(const std::vector<IterationRecord>& records, int window) {
  if (records.empty()) throw InvalidArgument("no records");
  const std::size_t n = std::min<std::size_t>(records.size(), static_cast<std::size_t>(std::max(window, 1)));
  double acc = 0.0;
  for (std::size_t i = records.size() - n; i < records.size(); ++i) {
    acc += records[i].eval_return ? *records[i].eval_return : records[i].mean_return;
  }
  return acc / static_cast<double>(n);
}

// --- Ablations --------------------------------------------------------------

const AblationSummary& AblationTable::find(const std::string& variant) const {
  for (const auto& s : summary) {
    if (s.variant == variant) return s;
  }
  throw InvalidArgument("no variant '" + variant + "' in table");
}

std::vector<VariantSpec> ablation_variants(const DualAcConfig& base, int horizon) {
  std::vector<VariantSpec> out;
  DualAcConfig full = base;
  full.ablation = Ablation::kFull;
  out.push_back({"full", full});
  for (int k : {10, 50}) {
    if (k == base.k || k + 1 > horizon) continue;
    DualAcConfig c = full;
    c.k = k;
    out.push_back({"full_k" + std::to_string(k), c});
  }
  for (Ablation a : {Ablation::kNoMultistep, Ablation::kNoPathreg, Ablation::kNoUnbiasedV, Ablation::kNaive}) {
    DualAcConfig c = base;
    c.ablation = a;
    out.push_back({to_string(a), c});
  }
  return out;
}

AblationSummary summarize(const std::string& variant, const std::vector<double>& values) {
  AblationSummary s;
  s.variant = variant;
  s.n = static_cast<int>(values.size());
  if (values.empty()) return s;
  for (double v : values) s.mean += v / s.n;
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.half_width = std::sqrt(ss / (s.n - 1)) / std::sqrt(static_cast<double>(s.n));
  }
  return s;
}

AblationTable ablation_suite(const DualAcConfig& base, const std::string& env_name,
                             const std::vector<std::uint64_t>& seeds, const std::optional<std::filesystem::path>& out_dir) {
  if (seeds.size() < 2) throw InvalidArgument("ablation suite needs at least 2 seeds");
  base.validate();
  AblationTable table;
  table.env = env_name;
  table.full_variant = "full";
  const int horizon = base.horizon > 0 ? base.horizon : make_env(env_name)->spec().horizon;
  for (const auto& variant : ablation_variants(base, horizon)) {
    std::vector<double> finals;
    for (std::uint64_t seed : seeds) {
      DualAcConfig c = variant.cfg;
      c.seed = seed;
      std::optional<std::filesystem::path> dir;
      if (out_dir) dir = *out_dir / variant.name / ("seed_" + std::to_string(seed));
      const auto records = run_experiment(c, env_name, dir);
      const double f = records.empty() ? std::numeric_limits<double>::quiet_NaN() : final_return(records);
      table.rows.push_back({variant.name, seed, f});
      finals.push_back(f);
    }
    table.summary.push_back(summarize(variant.name, finals));
  }
  return table;
}

std::vector<OrderingCheck> check_ablation_ordering(const AblationTable& table) {
  auto overlap = [](const AblationSummary& a, const AblationSummary& b) {
    return std::abs(a.mean - b.mean) <= a.half_width + b.half_width;
  };
  std::vector<OrderingCheck> out;
  const auto& full = table.find(table.full_variant);
  for (const auto& s : table.summary) {
    if (s.variant == full.variant || s.variant.rfind("full", 0) == 0) continue;
    out.push_back({"full >= " + s.variant, full.mean >= s.mean || overlap(full, s)});
  }
  const auto& naive = table.find("naive");
  bool first = true;
  for (const auto& s : table.summary) {
    if (s.variant == "naive") continue;
    if (s.mean >= naive.mean) first = false;
    out.push_back({"naive <= " + s.variant, naive.mean <= s.mean || overlap(naive, s)});
  }
  out.push_back({"naive not ranked first", !first});
  return out;
}

json ablation_to_json(const AblationTable& table) {
  json rows = json::array();
  for (const auto& r : table.rows) rows.push_back({{"variant", r.variant}, {"seed", r.seed}, {"final_return", r.final_return}});
  json summary = json::array();
  for (const auto& s : table.summary) {
    summary.push_back({{"variant", s.variant}, {"mean", s.mean}, {"half_width", s.half_width}, {"n", s.n}});
  }
  return {{"env", table.env}, {"full_variant", table.full_variant}, {"rows", rows}, {"summary", summary}};
}

}  // namespace dualac

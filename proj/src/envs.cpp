#include "dualac/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dualac/errors.hpp"
#include "dualac/mdp_io.hpp"

namespace dualac {

namespace {

int sample_categorical(const Eigen::Ref<const Vector>& p, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    acc += p(i);
    if (u < acc) return static_cast<int>(i);
  }
  for (Eigen::Index i = p.size() - 1; i >= 0; --i) {
    if (p(i) > 0.0) return static_cast<int>(i);
  }
  return 0;
}

}  // namespace

// --- TabularEnv -------------------------------------------------------------

TabularEnv::TabularEnv(TabularMdp mdp, int horizon, std::string name, std::vector<int> terminal_states)
    : mdp_(std::move(mdp)), terminal_(static_cast<std::size_t>(mdp_.n_states()), false) {
  if (horizon < 1) throw InvalidArgument("horizon must be >= 1");
  for (int s : terminal_states) {
    if (s < 0 || s >= mdp_.n_states()) throw InvalidArgument("terminal state out of range");
    terminal_[static_cast<std::size_t>(s)] = true;
  }
  spec_.name = std::move(name);
  spec_.tabular = true;
  spec_.n_states = mdp_.n_states();
  spec_.n_actions = mdp_.n_actions();
  spec_.observation_dim = 1;
  spec_.action_dim = 1;
  spec_.horizon = horizon;
  spec_.gamma_hint = mdp_.gamma();
}

Observation TabularEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  state_ = sample_categorical(mdp_.mu(), rng_);
  t_ = 0;
  done_ = terminal_[static_cast<std::size_t>(state_)];
  return index_vector(state_);
}

StepResult TabularEnv::step(const Action& action) {
  if (done_) throw InvalidStateError("step() called on a finished episode; call reset()");
  if (action.size() != 1) throw InvalidArgument("tabular action must hold a single action index");
  const int a = as_index(action);
  if (a < 0 || a >= mdp_.n_actions() || static_cast<double>(a) != action(0)) {
    throw InvalidArgument("action index out of range");
  }
  StepResult out;
  out.reward = mdp_.reward(state_, a);
  state_ = sample_categorical(mdp_.transition(a).row(state_).transpose(), rng_);
  ++t_;
  done_ = t_ >= spec_.horizon || terminal_[static_cast<std::size_t>(state_)];
  out.observation = index_vector(state_);
  out.done = done_;
  return out;
}

// --- Pendulum ---------------------------------------------------------------

double wrap_angle(double theta) {
  double x = std::fmod(theta + std::numbers::pi, 2.0 * std::numbers::pi);
  if (x <= 0.0) x += 2.0 * std::numbers::pi;
  return x - std::numbers::pi;
}

Pendulum::Pendulum(PendulumParams params) : params_(params) {
  if (params_.horizon < 1) throw InvalidArgument("horizon must be >= 1");
  if (!(params_.dt > 0.0 && params_.max_torque > 0.0 && params_.max_speed > 0.0 && params_.m > 0.0 && params_.l > 0.0)) {
    throw InvalidArgument("pendulum parameters must be positive");
  }
  spec_.name = "pendulum";
  spec_.tabular = false;
  spec_.observation_dim = 3;
  spec_.action_dim = 1;
  spec_.action_low = Vector::Constant(1, -params_.max_torque);
  spec_.action_high = Vector::Constant(1, params_.max_torque);
  spec_.horizon = params_.horizon;
  spec_.gamma_hint = params_.gamma_hint;
}

Observation Pendulum::reset(std::uint64_t seed) {
  rng_.seed(seed);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> speed(-1.0, 1.0);
  state_.theta = wrap_angle(angle(rng_));
  state_.theta_dot = speed(rng_);
  t_ = 0;
  done_ = false;
  return observation();
}

void Pendulum::set_state(const PendulumState& s) {
  state_.theta = wrap_angle(s.theta);
  state_.theta_dot = std::clamp(s.theta_dot, -params_.max_speed, params_.max_speed);
  t_ = 0;
  done_ = false;
}

Observation Pendulum::observation() const {
  Observation o(3);
  o << std::cos(state_.theta), std::sin(state_.theta), state_.theta_dot;
  return o;
}

double Pendulum::energy() const {
  const double k = 3.0 * params_.g / (2.0 * params_.l);
  return 0.5 * state_.theta_dot * state_.theta_dot + k * (1.0 + std::cos(state_.theta));
}

StepResult Pendulum::step(const Action& action) {
  if (done_) throw InvalidStateError("step() called on a finished episode; call reset()");
  if (action.size() != 1 || !std::isfinite(action(0))) throw InvalidArgument("pendulum action must be one finite torque");
  StepResult out;
  const double u = std::clamp(action(0), -params_.max_torque, params_.max_torque);
  out.clipped = u != action(0);

  const double th = state_.theta;
  const double thdot = state_.theta_dot;
  out.reward = -(th * th + 0.1 * thdot * thdot + 0.001 * u * u);

  const double accel = 3.0 * params_.g / (2.0 * params_.l) * std::sin(th) + 3.0 / (params_.m * params_.l * params_.l) * u;
  const double new_thdot = std::clamp(thdot + accel * params_.dt, -params_.max_speed, params_.max_speed);
  state_.theta = wrap_angle(th + new_thdot * params_.dt);
  state_.theta_dot = new_thdot;

  ++t_;
  done_ = t_ >= params_.horizon;
  out.observation = observation();
  out.done = done_;
  return out;
}

// --- Factories --------------------------------------------------------------

TabularMdp as_tabular(const Environment& env) {
  const auto* t = dynamic_cast<const TabularEnv*>(&env);
  if (t == nullptr) throw UnsupportedError("environment '" + env.spec().name + "' is not tabular");
  return t->mdp();
}

TabularMdp two_state_chain_mdp(double gamma) {
  std::vector<Matrix> p(2, Matrix::Zero(2, 2));
  p[0](0, 0) = 1.0;  // a0 stays at s0
  p[1](0, 1) = 1.0;  // a1 moves to s1
  p[0](1, 1) = 1.0;
  p[1](1, 1) = 1.0;
  Matrix r(2, 2);
  r << 0.0, 0.0, 1.0, 1.0;
  Vector mu(2);
  mu << 1.0, 0.0;
  return TabularMdp(std::move(p), std::move(r), gamma, std::move(mu));
}

TabularMdp chain_mdp(int n_states, double gamma, double slip) {
  if (n_states < 2) throw InvalidArgument("chain needs at least 2 states");
  if (!(slip >= 0.0 && slip <= 1.0)) throw InvalidArgument("slip must lie in [0, 1]");
  const int last = n_states - 1;
  std::vector<Matrix> p(2, Matrix::Zero(n_states, n_states));
  Matrix r = Matrix::Zero(n_states, 2);
  for (int s = 0; s < n_states; ++s) {
    const int right = std::min(s + 1, last);
    // The intended effect happens with probability 1 - slip; otherwise the other action's effect.
    p[1](s, right) += 1.0 - slip;
    p[1](s, 0) += slip;
    p[0](s, 0) += 1.0 - slip;
    p[0](s, right) += slip;
  }
  r(0, 0) = 0.2 * (1.0 - slip);
  r(last, 1) = 1.0 - slip;
  r(last, 0) = slip;
  r(0, 1) = 0.2 * slip;
  Vector mu = Vector::Zero(n_states);
  mu(0) = 1.0;
  return TabularMdp(std::move(p), std::move(r), gamma, std::move(mu));
}

TabularMdp gridworld_mdp(int size, double gamma, double slip) {
  if (size < 2) throw InvalidArgument("gridworld needs size >= 2");
  if (!(slip >= 0.0 && slip <= 1.0)) throw InvalidArgument("slip must lie in [0, 1]");
  const int n = size * size;
  const int goal = n - 1;
  constexpr int kActions = 4;
  const int dr[kActions] = {-1, 0, 1, 0};  // up, right, down, left
  const int dc[kActions] = {0, 1, 0, -1};
  auto move = [&](int s, int a) {
    const int row = std::clamp(s / size + dr[a], 0, size - 1);
    const int col = std::clamp(s % size + dc[a], 0, size - 1);
    return row * size + col;
  };
  std::vector<Matrix> p(kActions, Matrix::Zero(n, n));
  Matrix r = Matrix::Zero(n, kActions);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < kActions; ++a) {
      if (s == goal) {
        p[static_cast<std::size_t>(a)](s, s) = 1.0;
        continue;
      }
      for (int b = 0; b < kActions; ++b) {
        const double prob = (b == a ? 1.0 - slip : 0.0) + slip / kActions;
        p[static_cast<std::size_t>(a)](s, move(s, b)) += prob;
      }
      r(s, a) = p[static_cast<std::size_t>(a)](s, goal);
    }
  }
  Vector mu = Vector::Zero(n);
  mu(0) = 1.0;
  return TabularMdp(std::move(p), std::move(r), gamma, std::move(mu));
}

std::unique_ptr<Environment> make_env(const std::string& name) {
  if (name == "chain2") return std::make_unique<TabularEnv>(two_state_chain_mdp(), 20, name);
  if (name == "chain5") return std::make_unique<TabularEnv>(chain_mdp(), 30, name);
  if (name == "gridworld") return std::make_unique<TabularEnv>(gridworld_mdp(), 50, name);
  if (name == "pendulum") return std::make_unique<Pendulum>();
  if (name.rfind("mdp:", 0) == 0) {
    return std::make_unique<TabularEnv>(load_mdp(name.substr(4)), 100, name);
  }
  throw InvalidArgument("unknown environment '" + name + "'");
}

std::vector<std::string> registered_envs() { return {"chain2", "chain5", "gridworld", "pendulum", "mdp:<path>"}; }

}  // namespace dualac

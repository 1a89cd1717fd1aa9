#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dualac/function_approx.hpp"
#include "dualac/mdp.hpp"

namespace dualac {

struct EnvSpec {
  std::string name;
  bool tabular = false;
  int n_states = 0;         // tabular only
  int n_actions = 0;        // tabular only
  int observation_dim = 0;  // 1 for tabular (state index)
  int action_dim = 0;       // 1 for tabular (action index)
  Vector action_low;        // continuous only
  Vector action_high;       // continuous only
  int horizon = 1;
  double gamma_hint = 0.99;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  bool clipped = false;  // continuous action was clipped to the declared bounds
};

/// Single-threaded episodic environment. reset() must be called before step().
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  /// Draws the initial state from the fixed initial distribution; deterministic per seed.
  virtual Observation reset(std::uint64_t seed) = 0;
  virtual StepResult step(const Action& action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

/// Simulator for a TabularMdp with a fixed horizon and optional terminal states.
class TabularEnv final : public Environment {
 public:
  TabularEnv(TabularMdp mdp, int horizon, std::string name = "tabular", std::vector<int> terminal_states = {});

  const EnvSpec& spec() const override { return spec_; }
  Observation reset(std::uint64_t seed) override;
  StepResult step(const Action& action) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<TabularEnv>(*this); }

  const TabularMdp& mdp() const noexcept { return mdp_; }
  int state() const noexcept { return state_; }

 private:
  TabularMdp mdp_;
  EnvSpec spec_;
  std::vector<bool> terminal_;
  Rng rng_;
  int state_ = 0;
  int t_ = 0;
  bool done_ = true;
};

struct PendulumParams {
  double g = 10.0;
  double m = 1.0;
  double l = 1.0;
  double dt = 0.05;
  double max_torque = 2.0;
  double max_speed = 8.0;
  int horizon = 200;
  double gamma_hint = 0.995;
};

struct PendulumState {
  double theta = 0.0;      // radians, wrapped to (-pi, pi]
  double theta_dot = 0.0;  // radians / second
};

/// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

/**
 * Torque-limited pendulum (theta = 0 upright). Observation (cos theta, sin theta, theta_dot);
 * initial theta ~ U(-pi, pi], theta_dot ~ U(-1, 1). Semi-implicit Euler integration and
 * reward -(theta^2 + 0.1 theta_dot^2 + 0.001 u^2) evaluated on the pre-step state.
 */
class Pendulum final : public Environment {
 public:
  explicit Pendulum(PendulumParams params = {});

  const EnvSpec& spec() const override { return spec_; }
  Observation reset(std::uint64_t seed) override;
  StepResult step(const Action& action) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<Pendulum>(*this); }

  const PendulumParams& params() const noexcept { return params_; }
  const PendulumState& state() const noexcept { return state_; }
  /// Places the pendulum in a given state and starts a fresh episode from it.
  void set_state(const PendulumState& s);
  Observation observation() const;
  /// Mechanical energy per unit inertia, zero at rest hanging down.
  double energy() const;

 private:
  PendulumParams params_;
  EnvSpec spec_;
  Rng rng_;
  PendulumState state_;
  int t_ = 0;
  bool done_ = true;
};

/// Exact MDP behind a tabular environment; UnsupportedError for continuous ones.
TabularMdp as_tabular(const Environment& env);

/// The two-state chain: s0 -a1-> s1 (reward 0), a0 stays at s0 (reward 0), s1 self-loops with reward 1.
TabularMdp two_state_chain_mdp(double gamma = 0.5);
/// Five-state slippery chain: action 1 moves right (reward 1 at the right end), action 0 resets to s0 (reward 0.2 there).
TabularMdp chain_mdp(int n_states = 5, double gamma = 0.9, double slip = 0.1);
/// size x size gridworld, 4 moves with slip, start in a corner, absorbing zero-reward goal in the opposite corner.
TabularMdp gridworld_mdp(int size = 5, double gamma = 0.95, double slip = 0.1);

/**
 * Environment registry. Known names: "chain2", "chain5", "gridworld", "pendulum",
 * and "mdp:<path>" for an MDP file in the JSON format of mdp_io.hpp.
 */
std::unique_ptr<Environment> make_env(const std::string& name);
std::vector<std::string> registered_envs();

}  // namespace dualac

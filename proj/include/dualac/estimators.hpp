#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "dualac/envs.hpp"
#include "dualac/function_approx.hpp"

namespace dualac {

/**
 * One sampled path. states holds T+1 observations (the last one is the state
 * reached after the final action); actions and rewards hold T entries.
 * start_weight is the importance factor alpha~(s_0) + eta_mu applied to the
 * path's start; terminal marks absorption before the horizon.
 */
struct Trajectory {
  std::vector<Observation> states;
  std::vector<Action> actions;
  std::vector<double> rewards;
  double start_weight = 1.0;
  bool terminal = false;

  std::size_t length() const noexcept { return actions.size(); }
  void validate() const;
};

/// Deterministic child seed for (seed, stream, index); used for per-trajectory RNG streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// m rollouts of at most `horizon` steps under `policy`; trajectory l uses streams derived from (seed, l).
std::vector<Trajectory> sample_trajectories(Environment& env, const Policy& policy, int m, int horizon,
                                            std::uint64_t seed);

inline constexpr int kFullReturn = -1;

/// sum_{i=0}^{min(k, T-1)} gamma^i r_i; k = kFullReturn sums the whole path.
double mc_return(const Trajectory& traj, double gamma, int k = kFullReturn);

/**
 * delta_k of the first min(k+1, T) steps:
 * sum_{i<L} gamma^i r_i + gamma^L v(s_L) - v(s_0), L = min(k+1, T).
 * Short paths bootstrap from the last available state.
 */
double trajectory_delta(const Trajectory& traj, const LinearValue& v, double gamma, int k);

/// Average of delta_k(tau) grad log alpha(s_0) (tabular alpha over state indices).
Vector grad_alpha_estimate(std::span<const Trajectory> trajs, const LinearValue& v, const SoftmaxDistribution& alpha,
                           double gamma, int k, std::span<const double> weights = {});

/// Average of start_weight * delta_k(tau) * sum_{i<L} grad log pi(a_i|s_i).
Vector grad_pi_estimate(std::span<const Trajectory> trajs, const LinearValue& v, const Policy& policy, double gamma,
                        int k, std::span<const double> weights = {});

struct GradVOptions {
  std::span<const double> weights;           // per path in `trajs`; empty means uniform
  std::span<const double> behavior_weights;  // per path in `behavior`; empty means uniform
  std::span<const Observation> mu_states;    // samples of mu; empty means the starts of `trajs`
  std::span<const double> mu_weights;        // per mu sample; empty means uniform
};

/**
 * Gradient in the value weights of the sampled path-regularized Lagrangian:
 *   (1 - gamma^{k+1}) E_mu[grad v(s)]
 *   + E[start_weight (gamma^L grad v(s_L) - grad v(s_0))]
 *   - 2 eta_v E_b[(G(tau_b) - v(s_0)) grad v(s_0)],
 * with G the full discounted return of each behavior path.
 */
Vector grad_v_estimate(std::span<const Trajectory> trajs, std::span<const Trajectory> behavior, const LinearValue& v,
                       double gamma, int k, double eta_v, const GradVOptions& options = {});

/// alpha~ = max(0, E[delta_k | s_0]) / eta_alpha, applied pointwise.
std::vector<double> alpha_closed_form(std::span<const double> delta_means, double eta_alpha);

/**
 * Convention for the quadratic coefficient of the alpha~ regularizer:
 * kHalf uses (eta_alpha / 2) |alpha~|^2, whose maximizer is exactly the closed form;
 * kPrinted uses eta_alpha |alpha~|^2, whose maximizer is half of it.
 */
enum class AlphaPenaltyConvention { kHalf, kPrinted };

/// Per-start objective (alpha~ + eta_mu) * delta_mean - c eta_alpha alpha~^2.
double alpha_objective(double tilde_alpha, double delta_mean, double eta_mu, double eta_alpha,
                       AlphaPenaltyConvention convention);

/// One JSON object per line: {"start_weight", "terminal", "steps": [{"state","action","reward"}], "final_state"}.
void write_trajectories(std::ostream& out, std::span<const Trajectory> trajs);
std::vector<Trajectory> read_trajectories(std::istream& in);

}  // namespace dualac

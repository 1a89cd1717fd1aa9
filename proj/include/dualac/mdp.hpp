#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace dualac {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Value function over a finite state space.
using ValueVector = Vector;

/**
 * Finite discounted MDP (S, A, P, R, gamma, mu).
 *
 * The transition tensor is stored as one row-stochastic |S|x|S| matrix per
 * action: transition(a)(s, s') = P(s'|s, a). Construction validates all
 * invariants and throws InvalidArgument on violation.
 */
class TabularMdp {
 public:
  TabularMdp(std::vector<Matrix> transition, Matrix reward, double gamma, Vector mu);

  int n_states() const noexcept { return static_cast<int>(reward_.rows()); }
  int n_actions() const noexcept { return static_cast<int>(reward_.cols()); }
  double gamma() const noexcept { return gamma_; }

  const Matrix& transition(int action) const { return transition_.at(action); }
  double transition(int s, int a, int s_next) const { return transition_.at(a)(s, s_next); }
  const Matrix& reward() const noexcept { return reward_; }
  double reward(int s, int a) const { return reward_(s, a); }
  const Vector& mu() const noexcept { return mu_; }

  double max_abs_reward() const { return reward_.cwiseAbs().maxCoeff(); }
  TabularMdp with_gamma(double gamma) const { return TabularMdp(transition_, reward_, gamma, mu_); }

 private:
  std::vector<Matrix> transition_;
  Matrix reward_;
  double gamma_;
  Vector mu_;
};

/// Stochastic policy pi(a|s) as an |S|x|A| row-stochastic matrix.
struct TabularPolicy {
  Matrix probs;

  TabularPolicy() = default;
  explicit TabularPolicy(Matrix p);

  static TabularPolicy uniform(int n_states, int n_actions);
  static TabularPolicy deterministic(const std::vector<int>& actions, int n_actions);
};

/// Dual LP variable rho(s, a) >= 0.
struct OccupancyMeasure {
  Matrix rho;

  double total() const { return rho.sum(); }
};

// Q(s, a) = R(s, a) + gamma * E[v(s') | s, a]
Matrix q_values(const TabularMdp& mdp, const ValueVector& v);

/// (T v)(s) = max_a { R(s,a) + gamma * E[v(s')] }.
ValueVector bellman_optimality_operator(const TabularMdp& mdp, const ValueVector& v);

/// k+1 fold composition of the optimality operator; k = 0 is the one-step operator.
ValueVector k_step_bellman(const TabularMdp& mdp, const ValueVector& v, int k);

/**
 * Geometric mixture (1 - lambda) * sum_k lambda^k T_k v truncated at k_max.
 * The tail mass lambda^k_max is assigned to the T_{k_max} term so the weights sum to 1.
 */
ValueVector lambda_bellman(const TabularMdp& mdp, const ValueVector& v, double lambda, int k_max);

/// Mixture weights used by lambda_bellman (length k_max + 1).
std::vector<double> lambda_weights(double lambda, int k_max);

/// Fixed point of the optimality operator; the returned V satisfies ||T V - V||_inf <= tol.
ValueVector value_iteration(const TabularMdp& mdp, double tol);

/// Deterministic argmax policy, ties broken by lowest action index.
TabularPolicy greedy_policy(const TabularMdp& mdp, const ValueVector& v);

/// State-to-state transition matrix under pi: P_pi(s, s') = sum_a pi(a|s) P(s'|s,a).
Matrix policy_transition(const TabularMdp& mdp, const TabularPolicy& policy);

/// Expected one-step reward under pi.
Vector policy_reward(const TabularMdp& mdp, const TabularPolicy& policy);

/// V^pi by direct linear solve of (I - gamma P_pi) V = R_pi.
ValueVector policy_evaluation(const TabularMdp& mdp, const TabularPolicy& policy);

/// E_mu[V^pi(s)], the normalized-by-nothing discounted return from mu.
double expected_return(const TabularMdp& mdp, const TabularPolicy& policy);

/// Normalized discounted state occupancy: alpha = (1-gamma) mu + gamma P_pi^T alpha.
Vector discounted_state_occupancy(const TabularMdp& mdp, const TabularPolicy& policy);

/// rho(s, a) = alpha(s) pi(a|s).
OccupancyMeasure occupancy_from_policy(const TabularMdp& mdp, const TabularPolicy& policy);

/// Row-normalized rho; rows with total mass below 1e-12 become uniform.
TabularPolicy policy_from_occupancy(const OccupancyMeasure& rho);

/// Residual of the dual LP flow constraints, max over s' (0 for feasible rho).
double dual_feasibility_residual(const TabularMdp& mdp, const OccupancyMeasure& rho);

/// (1 - gamma) E_mu[v] - sum R rho.
double duality_gap(const TabularMdp& mdp, const ValueVector& v, const OccupancyMeasure& rho);

/// Primal and dual LP optima assembled from value iteration and the greedy occupancy.
struct LpSolution {
  ValueVector v_star;
  TabularPolicy pi_star;
  OccupancyMeasure rho_star;
  double primal = 0.0;
  double dual = 0.0;
};

LpSolution solve_lp_oracles(const TabularMdp& mdp, double tol = 1e-11);

/**
 * Random MDP with dense Dirichlet(1) transitions, uniform[0,1) rewards and a
 * Dirichlet(1) initial distribution. Deterministic given the seed.
 */
TabularMdp random_mdp(int n_states, int n_actions, double gamma, std::uint64_t seed);

}  // namespace dualac

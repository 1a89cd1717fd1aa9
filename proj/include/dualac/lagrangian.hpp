#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dualac/mdp.hpp"

namespace dualac {

/// States s_0..s_{k+1}, actions a_0..a_k and rewards r_0..r_k of one k-step path.
struct KStepPath {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;

  int k() const noexcept { return static_cast<int>(actions.size()) - 1; }
  void validate() const;
};

/// Dual weighting alpha(s) over states; must be a distribution.
struct InitialWeighting {
  Vector alpha;

  InitialWeighting() = default;
  explicit InitialWeighting(Vector a);
};

/// sum_i gamma^i r_i + gamma^{k+1} v(s_{k+1}) - v(s_0) for any callable v(int state).
template <class ValueFn>
double delta_k(ValueFn&& v, const KStepPath& path, double gamma) {
  path.validate();
  double acc = 0.0;
  double discount = 1.0;
  for (double r : path.rewards) {
    acc += discount * r;
    discount *= gamma;
  }
  return acc + discount * v(path.states.back()) - v(path.states.front());
}

double delta_k(const ValueVector& v, const KStepPath& path, double gamma);

/// One-step Lagrangian (1-gamma) E_mu[v] + sum alpha(s) pi(a|s) Delta[v](s, a), exact.
double one_step_lagrangian(const TabularMdp& mdp, const ValueVector& v, const InitialWeighting& alpha,
                           const TabularPolicy& pi);

/// Cap on the number of enumerated k-step paths.
struct EnumerationLimits {
  std::size_t max_paths = 1'000'000;
};

struct WeightedPath {
  KStepPath path;
  double probability = 0.0;
};

/**
 * All positive-probability paths s_0, a_0, ..., a_k, s_{k+1} with probability
 * start(s_0) prod_i pi(a_i|s_i) P(s_{i+1}|s_i, a_i). Throws ResourceError when
 * the worst-case path count |S| (|A||S|)^{k+1} exceeds the limit.
 */
std::vector<WeightedPath> enumerate_paths(const TabularMdp& mdp, const Vector& start, const TabularPolicy& pi,
                                          int k, const EnumerationLimits& limits = {});

/// (1 - gamma^{k+1}) E_mu[v] + E_alpha^pi[delta_k] by exact path enumeration.
double multi_step_lagrangian(const TabularMdp& mdp, const ValueVector& v, const InitialWeighting& alpha,
                             const TabularPolicy& pi, int k, const EnumerationLimits& limits = {});

struct MonteCarloEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Sampled multi-step Lagrangian for k beyond the enumeration cap.
MonteCarloEstimate multi_step_lagrangian_mc(const TabularMdp& mdp, const ValueVector& v,
                                            const InitialWeighting& alpha, const TabularPolicy& pi, int k,
                                            std::size_t n_samples, std::uint64_t seed);

/// Multi-step Lagrangian plus eta_v E_mu[(V^{pi_b}(s) - v(s))^2] with V^{pi_b} solved exactly.
double path_reg_lagrangian(const TabularMdp& mdp, const ValueVector& v, const InitialWeighting& alpha,
                           const TabularPolicy& pi, const TabularPolicy& pi_b, int k, double eta_v,
                           const EnumerationLimits& limits = {});

/**
 * Coefficient c of the part of L_k that is linear in v:
 * c = (1 - gamma^{k+1}) mu + gamma^{k+1} (P_pi^{k+1})^T alpha - alpha.
 */
Vector multi_step_linear_coefficient(const TabularMdp& mdp, const InitialWeighting& alpha, const TabularPolicy& pi,
                                     int k);

/// Gradient of the path-regularized Lagrangian with respect to tabular v.
Vector path_reg_gradient(const TabularMdp& mdp, const ValueVector& v, const InitialWeighting& alpha,
                         const TabularPolicy& pi, const TabularPolicy& pi_b, int k, double eta_v);

/// Hessian in v: 2 eta_v diag(mu). L_r is quadratic in tabular v.
Matrix path_reg_hessian(const TabularMdp& mdp, double eta_v);

/// Unique minimizer over v of the path-regularized Lagrangian (normal equations).
ValueVector inner_min_v_exact(const TabularMdp& mdp, const InitialWeighting& alpha, const TabularPolicy& pi,
                              const TabularPolicy& pi_b, int k, double eta_v);

/// Regularized dual function l_r(alpha, pi) = min_v L_r(v, alpha, pi).
double regularized_dual(const TabularMdp& mdp, const InitialWeighting& alpha, const TabularPolicy& pi,
                        const TabularPolicy& pi_b, int k, double eta_v);

/**
 * The weighting alpha_k(pi) = (1 - gamma^{k+1}) (I - gamma^{k+1} (P_pi^{k+1})^T)^{-1} mu,
 * the only alpha for which L_k is bounded below in v. For k = 0 this is the
 * discounted state occupancy.
 */
Vector multi_step_feasible_weighting(const TabularMdp& mdp, const TabularPolicy& pi, int k);

}  // namespace dualac

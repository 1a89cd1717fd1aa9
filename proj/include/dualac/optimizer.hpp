#pragma once

#include <functional>
#include <span>

#include "dualac/function_approx.hpp"

namespace dualac {

/**
 * zeta_t = C / (n0 + t^beta) by default. literal_mode reproduces C / (n0 + 1/t^beta),
 * which increases with t.
 */
struct StepsizeSchedule {
  double c = 0.1;
  double n0 = 1.0;
  double beta = 0.5;
  bool literal_mode = false;

  void validate() const;
};

double stepsize(const StepsizeSchedule& schedule, int t);

struct CgConfig {
  int max_iters = 20;
  double damping = 1e-4;
  double residual_tol = 1e-10;
};

using LinearOperator = std::function<Vector(const Vector&)>;

struct CgResult {
  Vector x;
  int iterations = 0;
  double residual_norm = 0.0;
};

/// Conjugate gradients on a symmetric positive (semi)definite operator from x0 = 0.
/// The operator is used as given; Fisher builders below already fold in the damping.
CgResult cg_solve(const LinearOperator& op, const Vector& rhs, const CgConfig& cfg);

/// v -> (1/m) sum_i g_i (g_i^T v) + damping v, with the score vectors g_i as rows of `scores`.
LinearOperator fisher_from_scores(Matrix scores, double damping);

/// Empirical outer-product Fisher of grad log pi over a batch of (state, action) pairs.
LinearOperator fisher_estimate(const Policy& policy, std::span<const Observation> states,
                               std::span<const Action> actions, double damping);

/// Average of the exact per-state Fisher information over a batch of states.
LinearOperator expected_fisher(const Policy& policy, std::span<const Observation> states, double damping);

struct NaturalStepResult {
  Vector params;
  Vector direction;       // F^{-1} g (before any normalization)
  double g_finv_g = 0.0;  // g^T F^{-1} g
  bool normalized = false;
  bool fallback = false;  // normalization requested but g^T F^{-1} g <= 0
  int cg_iterations = 0;
};

/// theta + zeta F^{-1} g, optionally scaled by 1 / sqrt(g^T F^{-1} g).
NaturalStepResult natural_gradient_step(const Vector& theta, const Vector& g, const LinearOperator& fisher, double zeta,
                                        bool normalize, const CgConfig& cg);

struct ProxConfig {
  int max_iters = 100;
  double grad_tol = 1e-12;  // on zeta * gradient of the prox objective
  double damping = 1e-12;
  int cg_iters = 200;
};

struct ProxResult {
  Vector params;
  int iterations = 0;
  double grad_norm = 0.0;  // zeta * |grad J| at the returned iterate
  double kl = 0.0;         // KL estimate of the result against the old policy
};

/**
 * argmin_theta -(theta - theta_old)^T g + (1/zeta) mean_s KL(pi_theta(.|s) || pi_old(.|s))
 * over the given states, by Fisher-preconditioned descent with backtracking.
 * Throws NumericalError when the iteration produces non-finite values or stops above grad_tol
 * (the objective is unbounded below over softmax logits once zeta |g| is large).
 */
ProxResult exact_prox_pi(const Policy& old_policy, const Vector& g, double zeta, std::span<const Observation> kl_states,
                         const ProxConfig& cfg = {});

/// Mean KL(pi_new(.|s) || pi_old(.|s)) over the states.
double mean_kl(const Policy& new_policy, const Policy& old_policy, std::span<const Observation> states);

struct FitValueResult {
  Vector params;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
};

using GradientFn = std::function<Vector(const Vector&)>;
using StepsizeFn = std::function<double(int)>;

/**
 * Gradient iterations theta <- theta - kappa_i * (P .* grad) on the value objective until
 * |grad| <= grad_tol or max_iters steps. P is an optional diagonal preconditioner.
 * Throws DivergedError carrying the last finite iterate on non-finite values.
 */
FitValueResult fit_value(Vector params, const GradientFn& grad, const StepsizeFn& kappa, int max_iters,
                         double grad_tol, const Vector* preconditioner = nullptr);

}  // namespace dualac

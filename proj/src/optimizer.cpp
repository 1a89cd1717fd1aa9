#include "dualac/optimizer.hpp"

#include <iomanip>
#include <sstream>

#include <cmath>
#include <memory>
#include <string>

#include "dualac/errors.hpp"

namespace dualac {

void StepsizeSchedule::validate() const {
  if (!(c > 0.0)) throw InvalidArgument("stepsize C must be > 0");
  if (!(n0 >= 0.0)) throw InvalidArgument("stepsize n0 must be >= 0");
  if (!(beta >= 0.5 && beta <= 1.0)) throw InvalidArgument("stepsize beta must lie in [1/2, 1]");
  if (literal_mode && !(n0 > 0.0)) throw InvalidArgument("literal stepsize mode needs n0 > 0");
}

double stepsize(const StepsizeSchedule& schedule, int t) {
  if (t < 1) throw InvalidArgument("stepsize index t must be >= 1");
  schedule.validate();
  const double tb = std::pow(static_cast<double>(t), schedule.beta);
  return schedule.literal_mode ? schedule.c / (schedule.n0 + 1.0 / tb) : schedule.c / (schedule.n0 + tb);
}

CgResult cg_solve(const LinearOperator& op, const Vector& rhs, const CgConfig& cfg) {
  if (cfg.max_iters < 1) throw InvalidArgument("CG needs max_iters >= 1");
  CgResult out;
  out.x = Vector::Zero(rhs.size());
  Vector r = rhs;
  double rr = r.squaredNorm();
  out.residual_norm = std::sqrt(rr);
  if (!std::isfinite(rr)) throw NumericalError("CG right-hand side is not finite");
  if (out.residual_norm <= cfg.residual_tol) return out;
  Vector p = r;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const Vector ap = op(p);
    const double pap = p.dot(ap);
    if (!std::isfinite(pap)) throw NumericalError("CG breakdown: non-finite curvature");
    if (pap <= 0.0) {
      if (pap == 0.0 && rr == 0.0) break;
      throw NumericalError("CG breakdown: operator is not positive definite along the search direction");
    }
    const double step = rr / pap;
    out.x += step * p;
    r -= step * ap;
    const double rr_new = r.squaredNorm();
    out.iterations = it;
    out.residual_norm = std::sqrt(rr_new);
    if (!std::isfinite(rr_new)) throw NumericalError("CG breakdown: non-finite residual");
    if (out.residual_norm <= cfg.residual_tol) break;
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  return out;
}

LinearOperator fisher_from_scores(Matrix scores, double damping) {
  if (scores.rows() < 1) throw InvalidArgument("Fisher estimate needs a nonempty batch");
  if (!(damping >= 0.0)) throw InvalidArgument("damping must be >= 0");
  auto g = std::make_shared<const Matrix>(std::move(scores));
  return [g, damping](const Vector& v) -> Vector {
    const Vector proj = (*g) * v;
    return (g->transpose() * proj) / static_cast<double>(g->rows()) + damping * v;
  };
}

LinearOperator fisher_estimate(const Policy& policy, std::span<const Observation> states,
                               std::span<const Action> actions, double damping) {
  if (states.empty()) throw InvalidArgument("Fisher estimate needs a nonempty batch");
  if (states.size() != actions.size()) throw InvalidArgument("states and actions differ in length");
  Matrix scores(static_cast<Eigen::Index>(states.size()), policy.num_params());
  Vector grad(policy.num_params());
  for (std::size_t i = 0; i < states.size(); ++i) {
    policy.log_prob_and_grad(states[i], actions[i], grad);
    scores.row(static_cast<Eigen::Index>(i)) = grad.transpose();
  }
  return fisher_from_scores(std::move(scores), damping);
}

LinearOperator expected_fisher(const Policy& policy, std::span<const Observation> states, double damping) {
  if (states.empty()) throw InvalidArgument("Fisher estimate needs a nonempty batch");
  if (!(damping >= 0.0)) throw InvalidArgument("damping must be >= 0");
  auto snapshot = std::shared_ptr<const Policy>(policy.clone());
  auto batch = std::make_shared<const std::vector<Observation>>(states.begin(), states.end());
  return [snapshot, batch, damping](const Vector& v) -> Vector {
    Vector out = damping * v;
    const double inv_n = 1.0 / static_cast<double>(batch->size());
    for (const auto& s : *batch) out += inv_n * snapshot->fisher_vector_product(s, v);
    return out;
  };
}

NaturalStepResult natural_gradient_step(const Vector& theta, const Vector& g, const LinearOperator& fisher, double zeta,
                                        bool normalize, const CgConfig& cg) {
  if (!(zeta > 0.0)) throw InvalidArgument("zeta must be > 0");
  if (theta.size() != g.size()) throw InvalidArgument("gradient and parameters differ in length");
  NaturalStepResult out;
  const CgResult solve = cg_solve(fisher, g, cg);
  out.direction = solve.x;
  out.cg_iterations = solve.iterations;
  out.g_finv_g = g.dot(solve.x);
  double scale = zeta;
  if (normalize) {
    if (out.g_finv_g > 0.0 && std::isfinite(out.g_finv_g)) {
      scale = zeta / std::sqrt(out.g_finv_g);
      out.normalized = true;
    } else {
      out.fallback = true;
    }
  }
  out.params = theta + scale * solve.x;
  return out;
}

double mean_kl(const Policy& new_policy, const Policy& old_policy, std::span<const Observation> states) {
  if (states.empty()) throw InvalidArgument("KL estimate needs a nonempty batch");
  double acc = 0.0;
  for (const auto& s : states) acc += new_policy.kl_and_grad(s, old_policy, nullptr);
  return acc / static_cast<double>(states.size());
}

ProxResult exact_prox_pi(const Policy& old_policy, const Vector& g, double zeta, std::span<const Observation> kl_states,
                         const ProxConfig& cfg) {
  if (!(zeta > 0.0)) throw InvalidArgument("zeta must be > 0");
  if (kl_states.empty()) throw InvalidArgument("exact prox needs a nonempty state batch");
  if (g.size() != old_policy.num_params()) throw InvalidArgument("gradient has the wrong length");

  const Vector theta_old = old_policy.params();
  auto current = old_policy.clone();
  const double inv_n = 1.0 / static_cast<double>(kl_states.size());

  // Scaled objective zeta * J(theta) = -zeta (theta - theta_old)^T g + mean KL.
  auto evaluate = [&](const Policy& p, Vector* grad) {
    double kl = 0.0;
    Vector kl_grad(p.num_params());
    if (grad != nullptr) grad->setZero(p.num_params());
    for (const auto& s : kl_states) {
      kl += inv_n * p.kl_and_grad(s, old_policy, grad != nullptr ? &kl_grad : nullptr);
      if (grad != nullptr) *grad += inv_n * kl_grad;
    }
    const Vector step = p.params() - theta_old;
    if (grad != nullptr) *grad -= zeta * g;
    return std::make_pair(-zeta * step.dot(g) + kl, kl);
  };

  ProxResult out;
  Vector grad;
  auto [obj, kl] = evaluate(*current, &grad);
  out.grad_norm = grad.norm();
  CgConfig cg{cfg.cg_iters, 0.0, 1e-14 * std::max(1.0, out.grad_norm)};

  for (int it = 0; it < cfg.max_iters && out.grad_norm > cfg.grad_tol; ++it) {
    const LinearOperator fisher = expected_fisher(*current, kl_states, cfg.damping);
    cg.residual_tol = 1e-3 * out.grad_norm;
    const Vector direction = -cg_solve(fisher, grad, cg).x;
    const double slope = grad.dot(direction);
    if (!std::isfinite(slope)) throw NumericalError("exact prox: non-finite search direction");

    const Vector theta = current->params();
    auto trial = current->clone();
    double t = 1.0;
    bool accepted = false;
    Vector trial_grad;
    double trial_obj = 0.0;
    double trial_kl = 0.0;
    for (int ls = 0; ls < 40; ++ls) {
      trial->set_params(theta + t * direction);
      std::tie(trial_obj, trial_kl) = evaluate(*trial, &trial_grad);
      if (!std::isfinite(trial_obj)) {
        t *= 0.5;
        continue;
      }
      // Armijo on the objective; near the optimum round-off hides the decrease, so a
      // strictly smaller gradient norm is accepted as progress as well.
      if (trial_obj <= obj + 1e-4 * t * slope || trial_grad.norm() < out.grad_norm) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    out.iterations = it + 1;
    if (!accepted) break;
    current = std::move(trial);
    grad = trial_grad;
    obj = trial_obj;
    kl = trial_kl;
    out.grad_norm = grad.norm();
    if (!current->params().allFinite()) {
      throw NumericalError("exact prox diverged after " + std::to_string(out.iterations) + " iterations");
    }
  }
  if (!(out.grad_norm <= cfg.grad_tol)) {
    // Over bounded-KL families the objective can be unbounded below for large zeta |g|.
    std::ostringstream msg;
    msg << std::scientific << std::setprecision(3) << "exact prox did not converge: gradient norm " << out.grad_norm
        << " after " << out.iterations << " iterations, max |theta| " << current->params().cwiseAbs().maxCoeff() << ", KL "
        << kl;
    throw NumericalError(msg.str());
  }
  out.params = current->params();
  out.kl = kl;
  return out;
}

FitValueResult fit_value(Vector params, const GradientFn& grad, const StepsizeFn& kappa, int max_iters,
                         double grad_tol, const Vector* preconditioner) {
  if (max_iters < 1) throw InvalidArgument("fit_value needs max_iters >= 1");
  if (preconditioner != nullptr && preconditioner->size() != params.size()) {
    throw InvalidArgument("preconditioner has the wrong length");
  }
  FitValueResult out;
  Vector g = grad(params);
  if (!g.allFinite()) throw DivergedError("value gradient is not finite at the initial point", params);
  out.grad_norm = g.norm();
  if (out.grad_norm <= grad_tol) {
    out.params = std::move(params);
    out.converged = true;
    return out;
  }
  for (int i = 1; i <= max_iters; ++i) {
    Vector next = preconditioner != nullptr ? Vector(params - kappa(i) * preconditioner->cwiseProduct(g))
                                            : Vector(params - kappa(i) * g);
    if (!next.allFinite()) throw DivergedError("value fit diverged at iteration " + std::to_string(i), params);
    g = grad(next);
    if (!g.allFinite()) throw DivergedError("value gradient became non-finite at iteration " + std::to_string(i), params);
    params = std::move(next);
    out.iterations = i;
    out.grad_norm = g.norm();
    if (out.grad_norm <= grad_tol) {
      out.converged = true;
      break;
    }
  }
  out.params = std::move(params);
  return out;
}

}  // namespace dualac

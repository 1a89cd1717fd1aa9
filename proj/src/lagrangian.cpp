#include "dualac/lagrangian.hpp"

#include <cmath>
#include <random>
#include <string>

#include "dualac/errors.hpp"

namespace dualac {

namespace {

void require_shapes(const TabularMdp& mdp, const ValueVector* v, const InitialWeighting* alpha,
                    const TabularPolicy* pi) {
  if (v != nullptr && v->size() != mdp.n_states()) throw InvalidArgument("value vector length mismatch");
  if (alpha != nullptr && alpha->alpha.size() != mdp.n_states()) throw InvalidArgument("alpha length mismatch");
  if (pi != nullptr && (pi->probs.rows() != mdp.n_states() || pi->probs.cols() != mdp.n_actions())) {
    throw InvalidArgument("policy shape mismatch");
  }
}

Matrix matrix_power(const Matrix& m, int exponent) {
  Matrix out = Matrix::Identity(m.rows(), m.cols());
  for (int i = 0; i < exponent; ++i) out = out * m;
  return out;
}

int sample_index(const Eigen::Ref<const Vector>& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return static_cast<int>(i);
  }
  // u landed in the round-off gap above the cumulative sum; take the last positive entry.
  for (Eigen::Index i = probs.size() - 1; i >= 0; --i) {
    if (probs(i) > 0.0) return static_cast<int>(i);
  }
  return 0;
}

}  // namespace

void KStepPath::validate() const {
  if (actions.empty()) throw InvalidArgument("k-step path needs at least one action");
  if (states.size() != actions.size() + 1 || rewards.size() != actions.size()) {
    throw InvalidArgument("k-step path needs k+2 states, k+1 actions and k+1 rewards");
  }
}

InitialWeighting::InitialWeighting(Vector a) : alpha(std::move(a)) {
  if (!alpha.allFinite() || (alpha.array() < 0.0).any()) throw InvalidArgument("alpha entries must be >= 0");
  if (std::abs(alpha.sum() - 1.0) > 1e-12) throw InvalidArgument("alpha must sum to 1");
}

double delta_k(const ValueVector& v, const KStepPath& path, double gamma) {
  return delta_k([&v](int s) { return v(s); }, path, gamma);
}

double one_step_lagrangian(const TabularMdp& mdp, const ValueVector& v, const InitialWeighting& alpha,
                           const TabularPolicy& pi) {
  require_shapes(mdp, &v, &alpha, &pi);
  const Matrix q = q_values(mdp, v);
  double acc = (1.0 - mdp.gamma()) * mdp.mu().dot(v);
  for (int s = 0; s < mdp.n_states(); ++s) {
    for (int a = 0; a < mdp.n_actions(); ++a) {
      acc += alpha.alpha(s) * pi.probs(s, a) * (q(s, a) - v(s));
    }
  }
  return acc;
}

std::vector<WeightedPath> enumerate_paths(const TabularMdp& mdp, const Vector& start, const TabularPolicy& pi,
                                          int k, const EnumerationLimits& limits) {
  if (k < 0) throw InvalidArgument("k must be >= 0");
  require_shapes(mdp, nullptr, nullptr, &pi);
  if (start.size() != mdp.n_states()) throw InvalidArgument("start distribution length mismatch");
  const double worst = static_cast<double>(mdp.n_states()) *
                       std::pow(static_cast<double>(mdp.n_actions()) * mdp.n_states(), k + 1);
  if (worst > static_cast<double>(limits.max_paths)) {
    throw ResourceError("path enumeration would visit up to " + std::to_string(worst) +
                        " paths, above the cap of " + std::to_string(limits.max_paths) +
                        "; use the Monte Carlo estimator");
  }

  std::vector<WeightedPath> out;
  KStepPath current;
  current.states.reserve(static_cast<std::size_t>(k) + 2);
  current.actions.reserve(static_cast<std::size_t>(k) + 1);
  current.rewards.reserve(static_cast<std::size_t>(k) + 1);

  auto recurse = [&](auto&& self, int s, double prob) -> void {
    if (static_cast<int>(current.actions.size()) == k + 1) {
      out.push_back({current, prob});
      return;
    }
    for (int a = 0; a < mdp.n_actions(); ++a) {
      const double pa = pi.probs(s, a);
      if (pa == 0.0) continue;
      current.actions.push_back(a);
      current.rewards.push_back(mdp.reward(s, a));
      for (int t = 0; t < mdp.n_states(); ++t) {
        const double pt = mdp.transition(s, a, t);
        if (pt == 0.0) continue;
        current.states.push_back(t);
        self(self, t, prob * pa * pt);
        current.states.pop_back();
      }
      current.actions.pop_back();
      current.rewards.pop_back();
    }
  };

  for (int s0 = 0; s0 < mdp.n_states(); ++s0) {
    if (start(s0) == 0.0) continue;
    current.states.assign(1, s0);
    recurse(recurse, s0, start(s0));
  }
  return out;
}

double multi_step_lagrangian(const TabularMdp& mdp, const ValueVector& v, const InitialWeighting& alpha,
                             const TabularPolicy& pi, int k, const EnumerationLimits& limits) {
  require_shapes(mdp, &v, &alpha, &pi);
  const auto paths = enumerate_paths(mdp, alpha.alpha, pi, k, limits);
  double expectation = 0.0;
  for (const auto& wp : paths) expectation += wp.probability * delta_k(v, wp.path, mdp.gamma());
  return (1.0 - std::pow(mdp.gamma(), k + 1)) * mdp.mu().dot(v) + expectation;
}

MonteCarloEstimate multi_step_lagrangian_mc(const TabularMdp& mdp, const ValueVector& v,
                                            const InitialWeighting& alpha, const TabularPolicy& pi, int k,
                                            std::size_t n_samples, std::uint64_t seed) {
  require_shapes(mdp, &v, &alpha, &pi);
  if (k < 0) throw InvalidArgument("k must be >= 0");
  if (n_samples < 2) throw InvalidArgument("Monte Carlo estimate needs at least 2 samples");
  std::mt19937_64 rng(seed);
  KStepPath path;
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t n = 1; n <= n_samples; ++n) {
    path.states.assign(1, sample_index(alpha.alpha, rng));
    path.actions.clear();
    path.rewards.clear();
    for (int i = 0; i <= k; ++i) {
      const int s = path.states.back();
      const int a = sample_index(pi.probs.row(s).transpose(), rng);
      path.actions.push_back(a);
      path.rewards.push_back(mdp.reward(s, a));
      path.states.push_back(sample_index(mdp.transition(a).row(s).transpose(), rng));
    }
    const double x = delta_k(v, path, mdp.gamma());
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  const double var = m2 / static_cast<double>(n_samples - 1);
  MonteCarloEstimate out;
  out.value = (1.0 - std::pow(mdp.gamma(), k + 1)) * mdp.mu().dot(v) + mean;
  out.std_error = std::sqrt(var / static_cast<double>(n_samples));
  out.samples = n_samples;
  return out;
}

double path_reg_lagrangian(const TabularMdp& mdp, const ValueVector& v, const InitialWeighting& alpha,
                           const TabularPolicy& pi, const TabularPolicy& pi_b, int k, double eta_v,
                           const EnumerationLimits& limits) {
  if (!(eta_v >= 0.0)) throw InvalidArgument("eta_v must be >= 0");
  const double base = multi_step_lagrangian(mdp, v, alpha, pi, k, limits);
  if (eta_v == 0.0) return base;
  const Vector residual = policy_evaluation(mdp, pi_b) - v;
  return base + eta_v * mdp.mu().dot(residual.cwiseAbs2());
}

Vector multi_step_linear_coefficient(const TabularMdp& mdp, const InitialWeighting& alpha, const TabularPolicy& pi,
                                     int k) {
  require_shapes(mdp, nullptr, &alpha, &pi);
  if (k < 0) throw InvalidArgument("k must be >= 0");
  const double gk = std::pow(mdp.gamma(), k + 1);
  const Matrix pk = matrix_power(policy_transition(mdp, pi), k + 1);
  return (1.0 - gk) * mdp.mu() + gk * pk.transpose() * alpha.alpha - alpha.alpha;
}

Vector path_reg_gradient(const TabularMdp& mdp, const ValueVector& v, const InitialWeighting& alpha,
                         const TabularPolicy& pi, const TabularPolicy& pi_b, int k, double eta_v) {
  require_shapes(mdp, &v, &alpha, &pi);
  Vector g = multi_step_linear_coefficient(mdp, alpha, pi, k);
  if (eta_v > 0.0) {
    g += 2.0 * eta_v * mdp.mu().cwiseProduct(v - policy_evaluation(mdp, pi_b));
  }
  return g;
}

Matrix path_reg_hessian(const TabularMdp& mdp, double eta_v) {
  if (!(eta_v >= 0.0)) throw InvalidArgument("eta_v must be >= 0");
  return Matrix((2.0 * eta_v * mdp.mu()).asDiagonal());
}

ValueVector inner_min_v_exact(const TabularMdp& mdp, const InitialWeighting& alpha, const TabularPolicy& pi,
                              const TabularPolicy& pi_b, int k, double eta_v) {
  require_shapes(mdp, nullptr, &alpha, &pi);
  if (!(eta_v > 0.0)) {
    throw SingularSystemError("eta_v = 0 leaves the Lagrangian linear in v; no unique minimizer");
  }
  if ((mdp.mu().array() <= 0.0).any()) {
    throw SingularSystemError("mu has zero entries; the penalty does not pin v on those states");
  }
  const Vector c = multi_step_linear_coefficient(mdp, alpha, pi, k);
  const Vector curvature = 2.0 * eta_v * mdp.mu();
  return policy_evaluation(mdp, pi_b) - c.cwiseQuotient(curvature);
}

double regularized_dual(const TabularMdp& mdp, const InitialWeighting& alpha, const TabularPolicy& pi,
                        const TabularPolicy& pi_b, int k, double eta_v) {
  const ValueVector v = inner_min_v_exact(mdp, alpha, pi, pi_b, k, eta_v);
  return path_reg_lagrangian(mdp, v, alpha, pi, pi_b, k, eta_v);
}

Vector multi_step_feasible_weighting(const TabularMdp& mdp, const TabularPolicy& pi, int k) {
  if (k < 0) throw InvalidArgument("k must be >= 0");
  const double gk = std::pow(mdp.gamma(), k + 1);
  const Matrix pk = matrix_power(policy_transition(mdp, pi), k + 1);
  const Matrix a = Matrix::Identity(mdp.n_states(), mdp.n_states()) - gk * pk.transpose();
  Vector alpha = a.partialPivLu().solve((1.0 - gk) * mdp.mu());
  if (!alpha.allFinite()) throw SingularSystemError("feasible weighting system is singular");
  return alpha.cwiseMax(0.0);
}

}  // namespace dualac

#include "dualac/mdp.hpp"

#include <cmath>
#include <random>
#include <string>

#include "dualac/errors.hpp"

namespace dualac {

namespace {

constexpr double kStochasticTol = 1e-12;

void require_length(const Vector& v, int n, const char* what) {
  if (v.size() != n) {
    throw InvalidArgument(std::string(what) + ": expected length " + std::to_string(n) +
                          ", got " + std::to_string(v.size()));
  }
}

void require_policy_shape(const TabularMdp& mdp, const TabularPolicy& policy) {
  if (policy.probs.rows() != mdp.n_states() || policy.probs.cols() != mdp.n_actions()) {
    throw InvalidArgument("policy shape does not match the MDP");
  }
}

}  // namespace

TabularMdp::TabularMdp(std::vector<Matrix> transition, Matrix reward, double gamma, Vector mu)
    : transition_(std::move(transition)), reward_(std::move(reward)), gamma_(gamma), mu_(std::move(mu)) {
  const auto n_s = reward_.rows();
  const auto n_a = reward_.cols();
  if (n_s < 1 || n_a < 1) throw InvalidArgument("MDP needs at least one state and one action");
  if (static_cast<Eigen::Index>(transition_.size()) != n_a) {
    throw InvalidArgument("transition tensor must have one matrix per action");
  }
  if (!(gamma_ > 0.0 && gamma_ < 1.0)) throw InvalidArgument("gamma must lie strictly inside (0, 1)");
  if (!reward_.allFinite()) throw InvalidArgument("rewards must be finite");
  for (const auto& p : transition_) {
    if (p.rows() != n_s || p.cols() != n_s) throw InvalidArgument("transition matrices must be |S|x|S|");
    if (!p.allFinite() || (p.array() < 0.0).any()) throw InvalidArgument("transition entries must be >= 0");
    for (Eigen::Index s = 0; s < n_s; ++s) {
      if (std::abs(p.row(s).sum() - 1.0) > kStochasticTol) {
        throw InvalidArgument("transition row " + std::to_string(s) + " does not sum to 1");
      }
    }
  }
  require_length(mu_, static_cast<int>(n_s), "mu");
  if (!mu_.allFinite() || (mu_.array() < 0.0).any()) throw InvalidArgument("mu entries must be >= 0");
  if (std::abs(mu_.sum() - 1.0) > kStochasticTol) throw InvalidArgument("mu must sum to 1");
}

TabularPolicy::TabularPolicy(Matrix p) : probs(std::move(p)) {
  if (!probs.allFinite() || (probs.array() < 0.0).any()) {
    throw InvalidArgument("policy probabilities must be finite and >= 0");
  }
  for (Eigen::Index s = 0; s < probs.rows(); ++s) {
    if (std::abs(probs.row(s).sum() - 1.0) > kStochasticTol) {
      throw InvalidArgument("policy row " + std::to_string(s) + " does not sum to 1");
    }
  }
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  return TabularPolicy(Matrix::Constant(n_states, n_actions, 1.0 / n_actions));
}

TabularPolicy TabularPolicy::deterministic(const std::vector<int>& actions, int n_actions) {
  Matrix p = Matrix::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] < 0 || actions[s] >= n_actions) throw InvalidArgument("action index out of range");
    p(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
  }
  return TabularPolicy(std::move(p));
}

Matrix q_values(const TabularMdp& mdp, const ValueVector& v) {
  require_length(v, mdp.n_states(), "value vector");
  Matrix q = mdp.reward();
  for (int a = 0; a < mdp.n_actions(); ++a) {
    q.col(a).noalias() += mdp.gamma() * (mdp.transition(a) * v);
  }
  return q;
}

ValueVector bellman_optimality_operator(const TabularMdp& mdp, const ValueVector& v) {
  return q_values(mdp, v).rowwise().maxCoeff();
}

ValueVector k_step_bellman(const TabularMdp& mdp, const ValueVector& v, int k) {
  if (k < 0) throw InvalidArgument("k must be >= 0");
  ValueVector out = bellman_optimality_operator(mdp, v);
  for (int i = 0; i < k; ++i) out = bellman_optimality_operator(mdp, out);
  return out;
}

std::vector<double> lambda_weights(double lambda, int k_max) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in [0, 1)");
  if (k_max < 0) throw InvalidArgument("k_max must be >= 0");
  std::vector<double> w(static_cast<std::size_t>(k_max) + 1);
  double power = 1.0;
  for (int k = 0; k < k_max; ++k) {
    w[static_cast<std::size_t>(k)] = (1.0 - lambda) * power;
    power *= lambda;
  }
  w.back() = power;
  return w;
}

ValueVector lambda_bellman(const TabularMdp& mdp, const ValueVector& v, double lambda, int k_max) {
  const auto weights = lambda_weights(lambda, k_max);
  ValueVector tk = bellman_optimality_operator(mdp, v);
  ValueVector out = weights[0] * tk;
  for (std::size_t k = 1; k < weights.size(); ++k) {
    tk = bellman_optimality_operator(mdp, tk);
    out += weights[k] * tk;
  }
  return out;
}

ValueVector value_iteration(const TabularMdp& mdp, double tol) {
  if (!(tol > 0.0)) throw InvalidArgument("tol must be > 0");
  ValueVector v = ValueVector::Zero(mdp.n_states());
  for (;;) {
    ValueVector tv = bellman_optimality_operator(mdp, v);
    if ((tv - v).lpNorm<Eigen::Infinity>() <= tol) return v;
    v = std::move(tv);
  }
}

TabularPolicy greedy_policy(const TabularMdp& mdp, const ValueVector& v) {
  const Matrix q = q_values(mdp, v);
  std::vector<int> best(static_cast<std::size_t>(mdp.n_states()), 0);
  for (int s = 0; s < mdp.n_states(); ++s) {
    for (int a = 1; a < mdp.n_actions(); ++a) {
      if (q(s, a) > q(s, best[static_cast<std::size_t>(s)])) best[static_cast<std::size_t>(s)] = a;
    }
  }
  return TabularPolicy::deterministic(best, mdp.n_actions());
}

Matrix policy_transition(const TabularMdp& mdp, const TabularPolicy& policy) {
  require_policy_shape(mdp, policy);
  Matrix p = Matrix::Zero(mdp.n_states(), mdp.n_states());
  for (int a = 0; a < mdp.n_actions(); ++a) {
    p.noalias() += policy.probs.col(a).asDiagonal() * mdp.transition(a);
  }
  return p;
}

Vector policy_reward(const TabularMdp& mdp, const TabularPolicy& policy) {
  require_policy_shape(mdp, policy);
  return mdp.reward().cwiseProduct(policy.probs).rowwise().sum();
}

ValueVector policy_evaluation(const TabularMdp& mdp, const TabularPolicy& policy) {
  const Matrix p = policy_transition(mdp, policy);
  const Matrix a = Matrix::Identity(mdp.n_states(), mdp.n_states()) - mdp.gamma() * p;
  ValueVector v = a.partialPivLu().solve(policy_reward(mdp, policy));
  if (!v.allFinite()) throw SingularSystemError("policy evaluation system is singular");
  return v;
}

double expected_return(const TabularMdp& mdp, const TabularPolicy& policy) {
  return mdp.mu().dot(policy_evaluation(mdp, policy));
}

Vector discounted_state_occupancy(const TabularMdp& mdp, const TabularPolicy& policy) {
  const Matrix p = policy_transition(mdp, policy);
  const Matrix a = Matrix::Identity(mdp.n_states(), mdp.n_states()) - mdp.gamma() * p.transpose();
  Vector alpha = a.partialPivLu().solve((1.0 - mdp.gamma()) * mdp.mu());
  if (!alpha.allFinite()) throw SingularSystemError("occupancy system is singular");
  // Round-off can leave entries at -1e-17; the exact solution is nonnegative.
  return alpha.cwiseMax(0.0);
}

OccupancyMeasure occupancy_from_policy(const TabularMdp& mdp, const TabularPolicy& policy) {
  const Vector alpha = discounted_state_occupancy(mdp, policy);
  return OccupancyMeasure{alpha.asDiagonal() * policy.probs};
}

TabularPolicy policy_from_occupancy(const OccupancyMeasure& rho) {
  if (!rho.rho.allFinite() || (rho.rho.array() < 0.0).any()) {
    throw InvalidArgument("occupancy entries must be finite and >= 0");
  }
  Matrix p(rho.rho.rows(), rho.rho.cols());
  for (Eigen::Index s = 0; s < rho.rho.rows(); ++s) {
    const double mass = rho.rho.row(s).sum();
    if (mass < 1e-12) {
      p.row(s).setConstant(1.0 / static_cast<double>(rho.rho.cols()));
    } else {
      p.row(s) = rho.rho.row(s) / mass;
      p.row(s) /= p.row(s).sum();
    }
  }
  return TabularPolicy(std::move(p));
}

double dual_feasibility_residual(const TabularMdp& mdp, const OccupancyMeasure& rho) {
  if (rho.rho.rows() != mdp.n_states() || rho.rho.cols() != mdp.n_actions()) {
    throw InvalidArgument("occupancy shape does not match the MDP");
  }
  Vector inflow = (1.0 - mdp.gamma()) * mdp.mu();
  for (int a = 0; a < mdp.n_actions(); ++a) {
    inflow.noalias() += mdp.gamma() * mdp.transition(a).transpose() * rho.rho.col(a);
  }
  return (rho.rho.rowwise().sum() - inflow).lpNorm<Eigen::Infinity>();
}

double duality_gap(const TabularMdp& mdp, const ValueVector& v, const OccupancyMeasure& rho) {
  require_length(v, mdp.n_states(), "value vector");
  if (rho.rho.rows() != mdp.n_states() || rho.rho.cols() != mdp.n_actions()) {
    throw InvalidArgument("occupancy shape does not match the MDP");
  }
  const double primal = (1.0 - mdp.gamma()) * mdp.mu().dot(v);
  const double dual = mdp.reward().cwiseProduct(rho.rho).sum();
  return primal - dual;
}

LpSolution solve_lp_oracles(const TabularMdp& mdp, double tol) {
  LpSolution out;
  out.v_star = value_iteration(mdp, tol);
  out.pi_star = greedy_policy(mdp, out.v_star);
  out.rho_star = occupancy_from_policy(mdp, out.pi_star);
  out.primal = (1.0 - mdp.gamma()) * mdp.mu().dot(out.v_star);
  out.dual = mdp.reward().cwiseProduct(out.rho_star.rho).sum();
  return out;
}

TabularMdp random_mdp(int n_states, int n_actions, double gamma, std::uint64_t seed) {
  if (n_states < 1 || n_actions < 1) throw InvalidArgument("random_mdp needs positive sizes");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  auto dirichlet = [&](Eigen::Index n) {
    Vector x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = expo(rng);
    return Vector(x / x.sum());
  };

  std::vector<Matrix> p(static_cast<std::size_t>(n_actions), Matrix(n_states, n_states));
  for (auto& pa : p) {
    for (int s = 0; s < n_states; ++s) pa.row(s) = dirichlet(n_states).transpose();
  }
  Matrix r(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) r(s, a) = unif(rng);
  }
  return TabularMdp(std::move(p), std::move(r), gamma, dirichlet(n_states));
}

}  // namespace dualac

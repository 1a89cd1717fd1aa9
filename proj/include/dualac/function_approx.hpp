#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <variant>

#include "dualac/checkpoint.hpp"
#include "dualac/mdp.hpp"

namespace dualac {

using Rng = std::mt19937_64;

/// Observation vector. Tabular environments use a one-element vector holding the state index.
using Observation = Vector;
/// Action vector. Tabular environments use a one-element vector holding the action index.
using Action = Vector;

inline int as_index(const Vector& x) { return static_cast<int>(x(0)); }
inline Vector index_vector(int i) { return Vector::Constant(1, static_cast<double>(i)); }

/// Median of pairwise Euclidean distances, over at most 1000 evenly strided samples.
double median_trick_bandwidth(std::span<const Vector> states);

/**
 * Random Fourier features f_j(s) = cos(w_j^T s / bandwidth + b_j) with w_j ~ N(0, I)
 * and b_j ~ U[0, 2 pi), frozen at construction. 2/n * f(x)^T f(y) approximates the
 * Gaussian kernel exp(-|x - y|^2 / (2 bandwidth^2)).
 */
class RbfFeatureMap {
 public:
  RbfFeatureMap() = default;
  RbfFeatureMap(int n_features, int state_dim, double bandwidth, std::uint64_t seed);
  RbfFeatureMap(Matrix frequencies, Vector phases, double bandwidth);

  int n_features() const noexcept { return static_cast<int>(phases_.size()); }
  int state_dim() const noexcept { return static_cast<int>(frequencies_.cols()); }
  double bandwidth() const noexcept { return bandwidth_; }
  const Matrix& frequencies() const noexcept { return frequencies_; }
  const Vector& phases() const noexcept { return phases_; }

  Vector operator()(const Vector& state) const;

  NamedArrays to_arrays() const;
  static RbfFeatureMap from_arrays(const NamedArrays& a);

 private:
  Matrix frequencies_;  // [n_features][state_dim]
  Vector phases_;
  double bandwidth_ = 1.0;
};

struct LogProbGrad {
  double log_prob = 0.0;
  Vector grad;
};

/// Parametric stochastic policy with analytic score and KL derivatives.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::unique_ptr<Policy> clone() const = 0;
  virtual Eigen::Index num_params() const = 0;
  virtual Vector params() const = 0;
  virtual void set_params(const Vector& theta) = 0;

  virtual Action sample(const Observation& obs, Rng& rng) const = 0;
  virtual double log_prob(const Observation& obs, const Action& action) const = 0;
  /// Writes grad_theta log pi(a|s) into `grad` (length num_params) and returns log pi(a|s).
  virtual double log_prob_and_grad(const Observation& obs, const Action& action, Eigen::Ref<Vector> grad) const = 0;
  /// Exact per-state Fisher information at `obs` applied to `v`.
  virtual Vector fisher_vector_product(const Observation& obs, const Vector& v) const = 0;
  /// KL(pi_this(.|s) || pi_old(.|s)); if `grad` is non-null it receives the gradient in this policy's params.
  virtual double kl_and_grad(const Observation& obs, const Policy& old, Vector* grad) const = 0;

  virtual NamedArrays to_arrays() const = 0;

  LogProbGrad log_prob_and_grad(const Observation& obs, const Action& action) const {
    LogProbGrad out;
    out.grad = Vector::Zero(num_params());
    out.log_prob = log_prob_and_grad(obs, action, out.grad);
    return out;
  }
};

/**
 * Gaussian policy N(W f(s) + b, diag(exp(2 log_std))) over random RBF features f.
 * Parameter layout: [W row-major (action_dim x n_features), b, log_std].
 */
class GaussianRbfPolicy final : public Policy {
 public:
  GaussianRbfPolicy(RbfFeatureMap features, int action_dim, double initial_log_std = 0.0);

  std::unique_ptr<Policy> clone() const override { return std::make_unique<GaussianRbfPolicy>(*this); }
  Eigen::Index num_params() const override;
  Vector params() const override;
  void set_params(const Vector& theta) override;

  Action sample(const Observation& obs, Rng& rng) const override;
  double log_prob(const Observation& obs, const Action& action) const override;
  double log_prob_and_grad(const Observation& obs, const Action& action, Eigen::Ref<Vector> grad) const override;
  Vector fisher_vector_product(const Observation& obs, const Vector& v) const override;
  double kl_and_grad(const Observation& obs, const Policy& old, Vector* grad) const override;
  using Policy::log_prob_and_grad;

  Vector mean(const Observation& obs) const;
  Vector stddev() const { return log_std_.array().exp(); }

  const RbfFeatureMap& features() const noexcept { return features_; }
  int action_dim() const noexcept { return static_cast<int>(bias_.size()); }
  Matrix& weights() noexcept { return weights_; }
  Vector& bias() noexcept { return bias_; }
  Vector& log_std() noexcept { return log_std_; }

  NamedArrays to_arrays() const override;
  static GaussianRbfPolicy from_arrays(const NamedArrays& a);

 private:
  RbfFeatureMap features_;
  Matrix weights_;
  Vector bias_;
  Vector log_std_;
};

/// Softmax over per-state logits; parameters are the logits in row-major order.
class TabularSoftmaxPolicy final : public Policy {
 public:
  TabularSoftmaxPolicy(int n_states, int n_actions);
  explicit TabularSoftmaxPolicy(Matrix logits);

  std::unique_ptr<Policy> clone() const override { return std::make_unique<TabularSoftmaxPolicy>(*this); }
  Eigen::Index num_params() const override { return logits_.size(); }
  Vector params() const override;
  void set_params(const Vector& theta) override;

  Action sample(const Observation& obs, Rng& rng) const override;
  double log_prob(const Observation& obs, const Action& action) const override;
  double log_prob_and_grad(const Observation& obs, const Action& action, Eigen::Ref<Vector> grad) const override;
  Vector fisher_vector_product(const Observation& obs, const Vector& v) const override;
  double kl_and_grad(const Observation& obs, const Policy& old, Vector* grad) const override;
  using Policy::log_prob_and_grad;

  int n_states() const noexcept { return static_cast<int>(logits_.rows()); }
  int n_actions() const noexcept { return static_cast<int>(logits_.cols()); }
  const Matrix& logits() const noexcept { return logits_; }
  Vector probs(int state) const;
  TabularPolicy tabular() const;

  NamedArrays to_arrays() const override;
  static TabularSoftmaxPolicy from_arrays(const NamedArrays& a);

 private:
  int state_of(const Observation& obs) const;
  Matrix logits_;
};

/// Softmax distribution over a finite index set, used as a parametric alpha(s).
class SoftmaxDistribution {
 public:
  explicit SoftmaxDistribution(Vector logits);

  const Vector& logits() const noexcept { return logits_; }
  void set_logits(Vector logits) { logits_ = std::move(logits); }
  Vector probs() const;
  /// grad_logits log p(i) = e_i - p.
  Vector log_prob_grad(int i) const;

 private:
  Vector logits_;
};

/// One-hot features over n states.
struct IndicatorFeatures {
  int n_states = 0;
};

/// RBF random features with an optional trailing constant feature.
struct RbfValueFeatures {
  RbfFeatureMap map;
  bool bias = true;
};

struct ValueAndGrad {
  double value = 0.0;
  Vector grad;
};

/// Linear value function V(s) = w^T phi(s) over indicator (tabular) or RBF features.
class LinearValue {
 public:
  using Features = std::variant<IndicatorFeatures, RbfValueFeatures>;

  explicit LinearValue(Features features);
  LinearValue(Features features, Vector weights);

  Eigen::Index dim() const noexcept { return weights_.size(); }
  const Vector& weights() const noexcept { return weights_; }
  void set_weights(const Vector& w);
  const Features& feature_spec() const noexcept { return features_; }
  bool is_tabular() const noexcept { return std::holds_alternative<IndicatorFeatures>(features_); }

  Vector features(const Observation& obs) const;
  double value(const Observation& obs) const;
  /// Value and its gradient in the weights (the feature vector).
  ValueAndGrad value_and_grad(const Observation& obs) const;

  NamedArrays to_arrays() const;
  static LinearValue from_arrays(const NamedArrays& a);

 private:
  Features features_;
  Vector weights_;
};

}  // namespace dualac

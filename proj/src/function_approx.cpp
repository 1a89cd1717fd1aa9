#include "dualac/function_approx.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "dualac/errors.hpp"

namespace dualac {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

Vector softmax(const Eigen::Ref<const Vector>& logits) {
  const double m = logits.maxCoeff();
  Vector p = (logits.array() - m).exp();
  return p / p.sum();
}

}  // namespace

double median_trick_bandwidth(std::span<const Vector> states) {
  if (states.size() < 2) throw InvalidArgument("median trick needs at least 2 samples");
  constexpr std::size_t kMaxPoints = 1000;
  const std::size_t stride = (states.size() + kMaxPoints - 1) / kMaxPoints;
  std::vector<const Vector*> pts;
  for (std::size_t i = 0; i < states.size(); i += stride) pts.push_back(&states[i]);

  std::vector<double> dist;
  dist.reserve(pts.size() * (pts.size() - 1) / 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i]->size() != pts[0]->size()) throw InvalidArgument("median trick samples differ in dimension");
    for (std::size_t j = i + 1; j < pts.size(); ++j) dist.push_back((*pts[i] - *pts[j]).norm());
  }
  auto median_of = [](std::vector<double>& d) {
    const std::size_t mid = d.size() / 2;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
    double med = d[mid];
    if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid)));
    return med;
  };
  double med = median_of(dist);
  if (med > 0.0) return med;
  // Mostly duplicated samples: fall back to the median of the positive distances.
  std::erase_if(dist, [](double d) { return d <= 0.0; });
  if (dist.empty()) throw InvalidArgument("median trick: all samples are identical");
  return median_of(dist);
}

// --- RbfFeatureMap ----------------------------------------------------------

RbfFeatureMap::RbfFeatureMap(int n_features, int state_dim, double bandwidth, std::uint64_t seed)
    : frequencies_(n_features, state_dim), phases_(n_features), bandwidth_(bandwidth) {
  if (n_features < 1 || state_dim < 1) throw InvalidArgument("feature map sizes must be positive");
  if (!(bandwidth > 0.0)) throw InvalidArgument("bandwidth must be > 0");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (int j = 0; j < n_features; ++j) {
    for (int d = 0; d < state_dim; ++d) frequencies_(j, d) = normal(rng);
    phases_(j) = phase(rng);
  }
}

RbfFeatureMap::RbfFeatureMap(Matrix frequencies, Vector phases, double bandwidth)
    : frequencies_(std::move(frequencies)), phases_(std::move(phases)), bandwidth_(bandwidth) {
  if (frequencies_.rows() != phases_.size()) throw InvalidArgument("frequencies and phases disagree in size");
  if (!(bandwidth_ > 0.0)) throw InvalidArgument("bandwidth must be > 0");
}

Vector RbfFeatureMap::operator()(const Vector& state) const {
  if (state.size() != frequencies_.cols()) {
    throw InvalidArgument("state has dimension " + std::to_string(state.size()) + ", feature map expects " +
                          std::to_string(frequencies_.cols()));
  }
  Vector z = frequencies_ * state / bandwidth_ + phases_;
  return z.array().cos();
}

NamedArrays RbfFeatureMap::to_arrays() const {
  NamedArrays a;
  a.put("frequencies", frequencies_);
  a.put("phases", phases_);
  a.put_scalar("bandwidth", bandwidth_);
  return a;
}

RbfFeatureMap RbfFeatureMap::from_arrays(const NamedArrays& a) {
  return RbfFeatureMap(a.matrix("frequencies"), a.vector("phases"), a.scalar("bandwidth"));
}

// --- GaussianRbfPolicy ------------------------------------------------------

GaussianRbfPolicy::GaussianRbfPolicy(RbfFeatureMap features, int action_dim, double initial_log_std)
    : features_(std::move(features)),
      weights_(Matrix::Zero(action_dim, features_.n_features())),
      bias_(Vector::Zero(action_dim)),
      log_std_(Vector::Constant(action_dim, initial_log_std)) {
  if (action_dim < 1) throw InvalidArgument("action_dim must be positive");
}

Eigen::Index GaussianRbfPolicy::num_params() const { return weights_.size() + bias_.size() + log_std_.size(); }

Vector GaussianRbfPolicy::params() const {
  Vector theta(num_params());
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < weights_.rows(); ++r) {
    theta.segment(i, weights_.cols()) = weights_.row(r).transpose();
    i += weights_.cols();
  }
  theta.segment(i, bias_.size()) = bias_;
  i += bias_.size();
  theta.segment(i, log_std_.size()) = log_std_;
  return theta;
}

void GaussianRbfPolicy::set_params(const Vector& theta) {
  if (theta.size() != num_params()) throw InvalidArgument("parameter vector has the wrong length");
  Eigen::Index i = 0;
  for (Eigen::Index r = 0; r < weights_.rows(); ++r) {
    weights_.row(r) = theta.segment(i, weights_.cols()).transpose();
    i += weights_.cols();
  }
  bias_ = theta.segment(i, bias_.size());
  i += bias_.size();
  log_std_ = theta.segment(i, log_std_.size());
}

Vector GaussianRbfPolicy::mean(const Observation& obs) const { return weights_ * features_(obs) + bias_; }

Action GaussianRbfPolicy::sample(const Observation& obs, Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector a = mean(obs);
  const Vector sd = stddev();
  for (Eigen::Index j = 0; j < a.size(); ++j) a(j) += sd(j) * normal(rng);
  return a;
}

double GaussianRbfPolicy::log_prob(const Observation& obs, const Action& action) const {
  if (action.size() != bias_.size()) throw InvalidArgument("action dimension mismatch");
  const Vector z = (action - mean(obs)).cwiseQuotient(stddev());
  return -0.5 * z.squaredNorm() - log_std_.sum() - kHalfLog2Pi * static_cast<double>(z.size());
}

double GaussianRbfPolicy::log_prob_and_grad(const Observation& obs, const Action& action,
                                            Eigen::Ref<Vector> grad) const {
  if (action.size() != bias_.size()) throw InvalidArgument("action dimension mismatch");
  const Vector f = features_(obs);
  const Vector sd = stddev();
  const Vector z = (action - (weights_ * f + bias_)).cwiseQuotient(sd);
  const Eigen::Index nf = f.size();
  const Eigen::Index na = bias_.size();
  for (Eigen::Index j = 0; j < na; ++j) {
    const double dmean = z(j) / sd(j);
    grad.segment(j * nf, nf) = dmean * f;
    grad(na * nf + j) = dmean;
    grad(na * nf + na + j) = z(j) * z(j) - 1.0;
  }
  return -0.5 * z.squaredNorm() - log_std_.sum() - kHalfLog2Pi * static_cast<double>(na);
}

Vector GaussianRbfPolicy::fisher_vector_product(const Observation& obs, const Vector& v) const {
  const Vector f = features_(obs);
  const Vector var = (2.0 * log_std_).array().exp();
  const Eigen::Index nf = f.size();
  const Eigen::Index na = bias_.size();
  Vector out(v.size());
  for (Eigen::Index j = 0; j < na; ++j) {
    // Mean block: [f; 1][f; 1]^T / sigma_j^2. Log-std block: 2.
    const double proj = (f.dot(v.segment(j * nf, nf)) + v(na * nf + j)) / var(j);
    out.segment(j * nf, nf) = proj * f;
    out(na * nf + j) = proj;
    out(na * nf + na + j) = 2.0 * v(na * nf + na + j);
  }
  return out;
}

double GaussianRbfPolicy::kl_and_grad(const Observation& obs, const Policy& old, Vector* grad) const {
  const auto* o = dynamic_cast<const GaussianRbfPolicy*>(&old);
  if (o == nullptr || o->num_params() != num_params()) throw InvalidArgument("KL needs a policy of the same family");
  const Vector f = features_(obs);
  const Vector mu_new = weights_ * f + bias_;
  const Vector mu_old = o->weights_ * o->features_(obs) + o->bias_;
  const Vector var_new = (2.0 * log_std_).array().exp();
  const Vector var_old = (2.0 * o->log_std_).array().exp();
  const Vector diff = mu_new - mu_old;
  double kl = 0.0;
  for (Eigen::Index j = 0; j < diff.size(); ++j) {
    kl += o->log_std_(j) - log_std_(j) + (var_new(j) + diff(j) * diff(j)) / (2.0 * var_old(j)) - 0.5;
  }
  if (grad != nullptr) {
    grad->setZero(num_params());
    const Eigen::Index nf = f.size();
    const Eigen::Index na = bias_.size();
    for (Eigen::Index j = 0; j < na; ++j) {
      const double dmean = diff(j) / var_old(j);
      grad->segment(j * nf, nf) = dmean * f;
      (*grad)(na * nf + j) = dmean;
      (*grad)(na * nf + na + j) = var_new(j) / var_old(j) - 1.0;
    }
  }
  return kl;
}

NamedArrays GaussianRbfPolicy::to_arrays() const {
  NamedArrays a;
  a.meta["family"] = "gaussian_rbf";
  a.merge(features_.to_arrays(), "features.");
  a.put("weights", weights_);
  a.put("bias", bias_);
  a.put("log_std", log_std_);
  return a;
}

GaussianRbfPolicy GaussianRbfPolicy::from_arrays(const NamedArrays& a) {
  const Vector bias = a.vector("bias");
  GaussianRbfPolicy p(RbfFeatureMap::from_arrays(a.subset("features.")), static_cast<int>(bias.size()));
  p.weights_ = a.matrix("weights");
  p.bias_ = bias;
  p.log_std_ = a.vector("log_std");
  if (p.weights_.rows() != p.bias_.size() || p.weights_.cols() != p.features_.n_features() ||
      p.log_std_.size() != p.bias_.size()) {
    throw InvalidArgument("Gaussian policy checkpoint has inconsistent shapes");
  }
  return p;
}

// --- TabularSoftmaxPolicy ---------------------------------------------------

TabularSoftmaxPolicy::TabularSoftmaxPolicy(int n_states, int n_actions) : logits_(Matrix::Zero(n_states, n_actions)) {
  if (n_states < 1 || n_actions < 1) throw InvalidArgument("softmax policy sizes must be positive");
}

TabularSoftmaxPolicy::TabularSoftmaxPolicy(Matrix logits) : logits_(std::move(logits)) {
  if (logits_.rows() < 1 || logits_.cols() < 1) throw InvalidArgument("softmax policy sizes must be positive");
}

Vector TabularSoftmaxPolicy::params() const {
  Vector theta(logits_.size());
  for (Eigen::Index s = 0; s < logits_.rows(); ++s) theta.segment(s * logits_.cols(), logits_.cols()) = logits_.row(s).transpose();
  return theta;
}

void TabularSoftmaxPolicy::set_params(const Vector& theta) {
  if (theta.size() != logits_.size()) throw InvalidArgument("parameter vector has the wrong length");
  for (Eigen::Index s = 0; s < logits_.rows(); ++s) logits_.row(s) = theta.segment(s * logits_.cols(), logits_.cols()).transpose();
}

int TabularSoftmaxPolicy::state_of(const Observation& obs) const {
  if (obs.size() != 1) throw InvalidArgument("tabular observation must hold a single state index");
  const int s = as_index(obs);
  if (s < 0 || s >= n_states()) throw InvalidArgument("state index out of range");
  return s;
}

Vector TabularSoftmaxPolicy::probs(int state) const { return softmax(logits_.row(state).transpose()); }

TabularPolicy TabularSoftmaxPolicy::tabular() const {
  Matrix p(logits_.rows(), logits_.cols());
  for (Eigen::Index s = 0; s < logits_.rows(); ++s) p.row(s) = probs(static_cast<int>(s)).transpose();
  return TabularPolicy(std::move(p));
}

Action TabularSoftmaxPolicy::sample(const Observation& obs, Rng& rng) const {
  const Vector p = probs(state_of(obs));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    acc += p(a);
    if (u < acc) return index_vector(static_cast<int>(a));
  }
  return index_vector(static_cast<int>(p.size()) - 1);
}

double TabularSoftmaxPolicy::log_prob(const Observation& obs, const Action& action) const {
  const int s = state_of(obs);
  const int a = as_index(action);
  if (a < 0 || a >= n_actions()) throw InvalidArgument("action index out of range");
  const double m = logits_.row(s).maxCoeff();
  return logits_(s, a) - m - std::log((logits_.row(s).array() - m).exp().sum());
}

double TabularSoftmaxPolicy::log_prob_and_grad(const Observation& obs, const Action& action,
                                               Eigen::Ref<Vector> grad) const {
  const int s = state_of(obs);
  const int a = as_index(action);
  if (a < 0 || a >= n_actions()) throw InvalidArgument("action index out of range");
  const Vector p = probs(s);
  grad.setZero();
  auto block = grad.segment(static_cast<Eigen::Index>(s) * n_actions(), n_actions());
  block = -p;
  block(a) += 1.0;
  return std::log(p(a));
}

Vector TabularSoftmaxPolicy::fisher_vector_product(const Observation& obs, const Vector& v) const {
  const int s = state_of(obs);
  const Vector p = probs(s);
  Vector out = Vector::Zero(v.size());
  const auto vs = v.segment(static_cast<Eigen::Index>(s) * n_actions(), n_actions());
  out.segment(static_cast<Eigen::Index>(s) * n_actions(), n_actions()) = p.cwiseProduct(vs) - p * p.dot(vs);
  return out;
}

double TabularSoftmaxPolicy::kl_and_grad(const Observation& obs, const Policy& old, Vector* grad) const {
  const auto* o = dynamic_cast<const TabularSoftmaxPolicy*>(&old);
  if (o == nullptr || o->logits_.rows() != logits_.rows() || o->logits_.cols() != logits_.cols()) {
    throw InvalidArgument("KL needs a policy of the same family");
  }
  const int s = state_of(obs);
  const Vector p = probs(s);
  const Vector q = o->probs(s);
  const Vector log_ratio = p.array().log() - q.array().log();
  const double kl = p.dot(log_ratio);
  if (grad != nullptr) {
    grad->setZero(num_params());
    grad->segment(static_cast<Eigen::Index>(s) * n_actions(), n_actions()) =
        p.cwiseProduct(log_ratio) - kl * p;
  }
  return kl;
}

NamedArrays TabularSoftmaxPolicy::to_arrays() const {
  NamedArrays a;
  a.meta["family"] = "tabular_softmax";
  a.put("logits", logits_);
  return a;
}

TabularSoftmaxPolicy TabularSoftmaxPolicy::from_arrays(const NamedArrays& a) {
  return TabularSoftmaxPolicy(a.matrix("logits"));
}

// --- SoftmaxDistribution ----------------------------------------------------

SoftmaxDistribution::SoftmaxDistribution(Vector logits) : logits_(std::move(logits)) {
  if (logits_.size() < 1) throw InvalidArgument("softmax distribution needs at least one entry");
}

Vector SoftmaxDistribution::probs() const { return softmax(logits_); }

Vector SoftmaxDistribution::log_prob_grad(int i) const {
  Vector g = -probs();
  g(i) += 1.0;
  return g;
}

// --- LinearValue ------------------------------------------------------------

namespace {

Eigen::Index feature_dim(const LinearValue::Features& f) {
  return std::visit(
      [](const auto& spec) -> Eigen::Index {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, IndicatorFeatures>) {
          return spec.n_states;
        } else {
          return spec.map.n_features() + (spec.bias ? 1 : 0);
        }
      },
      f);
}

}  // namespace

LinearValue::LinearValue(Features features) : features_(std::move(features)), weights_(Vector::Zero(feature_dim(features_))) {
  if (weights_.size() < 1) throw InvalidArgument("value function needs at least one feature");
}

LinearValue::LinearValue(Features features, Vector weights) : LinearValue(std::move(features)) { set_weights(weights); }

void LinearValue::set_weights(const Vector& w) {
  if (w.size() != weights_.size()) throw InvalidArgument("value weights have the wrong length");
  weights_ = w;
}

Vector LinearValue::features(const Observation& obs) const {
  return std::visit(
      [&obs](const auto& spec) -> Vector {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, IndicatorFeatures>) {
          if (obs.size() != 1) throw InvalidArgument("tabular observation must hold a single state index");
          const int s = as_index(obs);
          if (s < 0 || s >= spec.n_states) throw InvalidArgument("state index out of range");
          Vector phi = Vector::Zero(spec.n_states);
          phi(s) = 1.0;
          return phi;
        } else {
          if (!spec.bias) return spec.map(obs);
          Vector phi(spec.map.n_features() + 1);
          phi.head(spec.map.n_features()) = spec.map(obs);
          phi(spec.map.n_features()) = 1.0;
          return phi;
        }
      },
      features_);
}

double LinearValue::value(const Observation& obs) const {
  if (const auto* ind = std::get_if<IndicatorFeatures>(&features_)) {
    const int s = as_index(obs);
    if (obs.size() != 1 || s < 0 || s >= ind->n_states) throw InvalidArgument("state index out of range");
    return weights_(s);
  }
  return weights_.dot(features(obs));
}

ValueAndGrad LinearValue::value_and_grad(const Observation& obs) const {
  ValueAndGrad out;
  out.grad = features(obs);
  out.value = weights_.dot(out.grad);
  return out;
}

NamedArrays LinearValue::to_arrays() const {
  NamedArrays a;
  a.put("weights", weights_);
  if (const auto* ind = std::get_if<IndicatorFeatures>(&features_)) {
    a.meta["features"] = "indicator";
    a.put_scalar("n_states", ind->n_states);
  } else {
    const auto& rbf = std::get<RbfValueFeatures>(features_);
    a.meta["features"] = "rbf";
    a.put_scalar("bias", rbf.bias ? 1.0 : 0.0);
    a.merge(rbf.map.to_arrays(), "features.");
  }
  return a;
}

LinearValue LinearValue::from_arrays(const NamedArrays& a) {
  const auto it = a.meta.find("features");
  if (it == a.meta.end()) throw InvalidArgument("value checkpoint lacks a feature description");
  if (it->second == "indicator") {
    return LinearValue(IndicatorFeatures{static_cast<int>(a.scalar("n_states"))}, a.vector("weights"));
  }
  RbfValueFeatures rbf{RbfFeatureMap::from_arrays(a.subset("features.")), a.scalar("bias") != 0.0};
  return LinearValue(std::move(rbf), a.vector("weights"));
}

}  // namespace dualac

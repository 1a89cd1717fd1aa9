#include <doctest.h>

#include <random>
#include <sstream>

#include "dualac/envs.hpp"
#include "dualac/errors.hpp"
#include "dualac/estimators.hpp"
#include "dualac/lagrangian.hpp"
#include "oracles.hpp"

using namespace dualac;

namespace {

Trajectory make_traj(std::vector<int> states, std::vector<int> actions, std::vector<double> rewards) {
  Trajectory t;
  for (int s : states) t.states.push_back(index_vector(s));
  for (int a : actions) t.actions.push_back(index_vector(a));
  t.rewards = std::move(rewards);
  return t;
}

Vector softmax(const Vector& x) {
  const Vector e = (x.array() - x.maxCoeff()).exp();
  return e / e.sum();
}

TabularPolicy softmax_policy(const Vector& logits, int n_s, int n_a) {
  TabularSoftmaxPolicy p(n_s, n_a);
  p.set_params(logits);
  return p.tabular();
}

}  // namespace

TEST_CASE("trajectory sampling is deterministic per seed") {
  auto env = make_env("chain5");
  TabularSoftmaxPolicy pi(5, 2);
  const auto a = sample_trajectories(*env, pi, 4, 10, 99);
  const auto b = sample_trajectories(*env, pi, 4, 10, 99);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].length() == 10);
    for (std::size_t t = 0; t < a[i].length(); ++t) {
      CHECK(a[i].actions[t] == b[i].actions[t]);
      CHECK(a[i].states[t] == b[i].states[t]);
      CHECK(a[i].rewards[t] == b[i].rewards[t]);
    }
  }

  TabularEnv single(oracles::single_state_mdp(), 5);
  TabularSoftmaxPolicy one(1, 1);
  const auto c = sample_trajectories(single, one, 3, 5, 1);
  for (const auto& t : c) CHECK(t.rewards == c.front().rewards);

  CHECK_THROWS_AS(sample_trajectories(*env, pi, 0, 10, 1), InvalidArgument);
  CHECK_THROWS_AS(sample_trajectories(*env, pi, 1, 0, 1), InvalidArgument);
}

TEST_CASE("uniform policy on a two-armed bandit picks each arm half the time") {
  TabularEnv bandit(oracles::single_state_mdp(1.0, 0.9, 2), 1);
  TabularSoftmaxPolicy pi(1, 2);
  const auto trajs = sample_trajectories(bandit, pi, 100000, 1, 5);
  double ones = 0.0;
  for (const auto& t : trajs) ones += t.actions[0](0);
  CHECK(std::abs(ones / 100000.0 - 0.5) < 0.01);
}

TEST_CASE("k-step Monte Carlo returns") {
  const auto t = make_traj({0, 0, 0, 0}, {0, 0, 0}, {1.0, 1.0, 1.0});
  CHECK(mc_return(t, 0.5) == doctest::Approx(1.75));
  CHECK(mc_return(t, 0.5, 0) == doctest::Approx(1.0));
  CHECK(mc_return(t, 0.5, 1) == doctest::Approx(1.5));

  Trajectory long_t = make_traj({0}, {}, {});
  for (int i = 0; i < 200; ++i) {
    long_t.states.push_back(index_vector(0));
    long_t.actions.push_back(index_vector(0));
    long_t.rewards.push_back(1.0);
  }
  CHECK(mc_return(long_t, 0.995) == doctest::Approx((1.0 - std::pow(0.995, 200)) / 0.005).epsilon(1e-12));
}

TEST_CASE("delta on short paths bootstraps from the last state") {
  LinearValue v(IndicatorFeatures{2}, Vector::Constant(2, 2.0));
  const auto t = make_traj({0, 1, 1}, {1, 0}, {1.0, 3.0});
  // k = 5 exceeds the two available steps: 1 + 0.5*3 + 0.25*2 - 2.
  CHECK(trajectory_delta(t, v, 0.5, 5) == doctest::Approx(1.0));
  CHECK(trajectory_delta(t, v, 0.5, 0) == doctest::Approx(1.0 + 0.5 * 2.0 - 2.0));
}

TEST_CASE("closed-form alpha and its dominance") {
  const std::vector<double> d{-2.0, 3.0, 0.0};
  const auto a = alpha_closed_form(d, 2.0);
  CHECK(a[0] == 0.0);
  CHECK(a[1] == doctest::Approx(1.5));
  CHECK(a[2] == 0.0);
  CHECK_THROWS_AS(alpha_closed_form(d, 0.0), InvalidArgument);

  for (double delta : {-1.0, 0.0, 0.3, 2.0, 7.5}) {
    for (double eta_alpha : {0.5, 1.0, 4.0}) {
      const double star = alpha_closed_form(std::vector<double>{delta}, eta_alpha)[0];
      const double best = alpha_objective(star, delta, 0.2, eta_alpha, AlphaPenaltyConvention::kHalf);
      for (int i = 0; i <= 50; ++i) {
        CHECK(best >= alpha_objective(0.1 * i, delta, 0.2, eta_alpha, AlphaPenaltyConvention::kHalf) - 1e-12);
      }
    }
  }
  // Under the printed coefficient the maximizer is half of the closed form.
  const double printed = alpha_objective(1.5, 3.0, 0.0, 2.0, AlphaPenaltyConvention::kPrinted);
  CHECK(alpha_objective(0.75, 3.0, 0.0, 2.0, AlphaPenaltyConvention::kPrinted) > printed);
}

TEST_CASE("alpha gradient: exhaustive expectation equals the derivative of the regularized dual") {
  const auto mdp = random_mdp(2, 2, 0.9, 12);
  std::mt19937_64 rng(3);
  const auto pi = oracles::random_policy(2, 2, rng);
  const auto pib = oracles::random_policy(2, 2, rng);
  const int k = 1;
  const double eta = 0.5;
  const Vector theta = oracles::random_vector(2, rng);

  const auto ell = [&](const Vector& th) { return regularized_dual(mdp, InitialWeighting(softmax(th)), pi, pib, k, eta); };
  const Vector fd = oracles::fd_gradient(ell, theta, 1e-5);

  const InitialWeighting alpha(softmax(theta));
  const Vector vstar = inner_min_v_exact(mdp, alpha, pi, pib, k, eta);
  const auto batch = oracles::exhaustive_batch(mdp, alpha.alpha, pi, k);
  const LinearValue v(IndicatorFeatures{2}, vstar);
  const Vector g = grad_alpha_estimate(batch.trajs, v, SoftmaxDistribution(theta), mdp.gamma(), k, batch.weights);
  CHECK(oracles::rel_error(g, fd) < 1e-4);
}

TEST_CASE("alpha gradient basics") {
  const auto t = make_traj({0, 0}, {0}, {1.0});
  const LinearValue fixed(IndicatorFeatures{1}, Vector::Constant(1, 10.0));
  const std::vector<Trajectory> one{t};
  CHECK(grad_alpha_estimate(one, fixed, SoftmaxDistribution(Vector::Zero(1)), 0.9, 0).norm() == 0.0);

  const auto a = make_traj({0, 1}, {0}, {1.0});
  const auto b = make_traj({1, 0}, {1}, {-0.5});
  const auto a2 = make_traj({0, 1}, {0}, {2.0});
  const auto b2 = make_traj({1, 0}, {1}, {-1.0});
  const LinearValue zero(IndicatorFeatures{2});
  const SoftmaxDistribution alpha(Vector::Constant(2, 0.3));
  const std::vector<Trajectory> base{a, b};
  const std::vector<Trajectory> doubled{a2, b2};
  CHECK((grad_alpha_estimate(doubled, zero, alpha, 0.9, 0) - 2.0 * grad_alpha_estimate(base, zero, alpha, 0.9, 0)).norm() < 1e-14);
  CHECK_THROWS_AS(grad_alpha_estimate(std::vector<Trajectory>{}, zero, alpha, 0.9, 0), InvalidArgument);
}

TEST_CASE("policy gradient: exhaustive expectation equals the derivative of the regularized dual") {
  const auto mdp = random_mdp(2, 2, 0.9, 14);
  std::mt19937_64 rng(8);
  const auto pib = oracles::random_policy(2, 2, rng);
  const InitialWeighting alpha(oracles::random_distribution(2, rng));
  const int k = 1;
  const double eta = 0.4;
  const Vector logits = oracles::random_vector(4, rng);

  const auto ell = [&](const Vector& th) { return regularized_dual(mdp, alpha, softmax_policy(th, 2, 2), pib, k, eta); };
  const Vector fd = oracles::fd_gradient(ell, logits, 1e-5);

  TabularSoftmaxPolicy policy(2, 2);
  policy.set_params(logits);
  const Vector vstar = inner_min_v_exact(mdp, alpha, policy.tabular(), pib, k, eta);
  const auto batch = oracles::exhaustive_batch(mdp, alpha.alpha, policy.tabular(), k);
  const Vector g = grad_pi_estimate(batch.trajs, LinearValue(IndicatorFeatures{2}, vstar), policy, mdp.gamma(), k, batch.weights);
  CHECK(oracles::rel_error(g, fd) < 1e-4);
}

TEST_CASE("policy gradient vanishes when every delta is zero") {
  // v = 10 is the fixed point of the single-state MDP, so every path has delta 0.
  TabularEnv env(oracles::single_state_mdp(1.0, 0.9, 2), 3);
  TabularSoftmaxPolicy pi(1, 2);
  const auto trajs = sample_trajectories(env, pi, 20, 3, 4);
  const LinearValue v(IndicatorFeatures{1}, Vector::Constant(1, 10.0));
  CHECK(grad_pi_estimate(trajs, v, pi, 0.9, 2).norm() < 1e-12);
}

TEST_CASE("policy gradient estimate converges at the Monte Carlo rate") {
  const auto base = random_mdp(2, 2, 0.9, 15);
  std::mt19937_64 rng(10);
  TabularSoftmaxPolicy policy(2, 2);
  policy.set_params(oracles::random_vector(4, rng));
  const Vector v_weights = oracles::random_vector(2, rng);
  const LinearValue v(IndicatorFeatures{2}, v_weights);
  const int k = 1;
  const auto batch = oracles::exhaustive_batch(base, base.mu(), policy.tabular(), k);
  const Vector exact = grad_pi_estimate(batch.trajs, v, policy, base.gamma(), k, batch.weights);

  TabularEnv env(base, k + 1);
  for (int m : {100, 10000}) {
    const auto trajs = sample_trajectories(env, policy, m, k + 1, 77);
    const Vector est = grad_pi_estimate(trajs, v, policy, base.gamma(), k);
    // Per-sample spread gives the declared bound.
    Matrix per(4, m);
    for (int i = 0; i < m; ++i) {
      const std::vector<Trajectory> one{trajs[static_cast<std::size_t>(i)]};
      per.col(i) = grad_pi_estimate(one, v, policy, base.gamma(), k);
    }
    const Vector mean = per.rowwise().mean();
    const Vector sd = ((per.colwise() - mean).array().square().rowwise().sum() / (m - 1)).sqrt();
    for (int j = 0; j < 4; ++j) CHECK(std::abs(est(j) - exact(j)) <= 4.0 * sd(j) / std::sqrt(m) + 1e-12);
  }
}

TEST_CASE("value gradient matches the exact objective") {
  const auto mdp = random_mdp(2, 2, 0.9, 16);
  std::mt19937_64 rng(12);
  const auto pi = oracles::random_policy(2, 2, rng);
  const InitialWeighting alpha(oracles::random_distribution(2, rng));
  const int k = 2;
  const Vector v0 = oracles::random_vector(2, rng);
  const auto batch = oracles::exhaustive_batch(mdp, alpha.alpha, pi, k);

  std::vector<Observation> mu_states{index_vector(0), index_vector(1)};
  std::vector<double> mu_weights{mdp.mu()(0), mdp.mu()(1)};
  GradVOptions opt;
  opt.weights = batch.weights;
  opt.mu_states = mu_states;
  opt.mu_weights = mu_weights;
  const Vector g = grad_v_estimate(batch.trajs, {}, LinearValue(IndicatorFeatures{2}, v0), mdp.gamma(), k, 0.0, opt);
  const auto f = [&](const Vector& x) { return multi_step_lagrangian(mdp, x, alpha, pi, k); };
  CHECK(oracles::rel_error(g, oracles::fd_gradient(f, v0)) < 1e-6);
  CHECK(oracles::rel_error(g, multi_step_linear_coefficient(mdp, alpha, pi, k)) < 1e-10);
}

TEST_CASE("value gradient penalty term on a deterministic chain") {
  // Deterministic dynamics and behavior policy: one long path per start gives the exact V^{pi_b}.
  const auto chain = two_state_chain_mdp(0.5);
  std::vector<Matrix> p{chain.transition(0), chain.transition(1)};
  Vector mu(2);
  mu << 0.6, 0.4;
  const TabularMdp mdp(p, chain.reward(), 0.5, mu);
  const auto pib = TabularPolicy::deterministic({1, 0}, 2);
  std::mt19937_64 rng(13);
  const auto pi = oracles::random_policy(2, 2, rng);
  const InitialWeighting alpha(oracles::random_distribution(2, rng));
  const int k = 1;
  const double eta = 0.7;

  std::vector<Trajectory> behavior;
  for (int s0 = 0; s0 < 2; ++s0) {
    Trajectory t;
    int s = s0;
    t.states.push_back(index_vector(s));
    for (int i = 0; i < 200; ++i) {
      const int a = s == 0 ? 1 : 0;
      t.actions.push_back(index_vector(a));
      t.rewards.push_back(mdp.reward(s, a));
      s = s == 0 ? 1 : 1;
      t.states.push_back(index_vector(s));
    }
    behavior.push_back(std::move(t));
  }
  const auto batch = oracles::exhaustive_batch(mdp, alpha.alpha, pi, k);
  std::vector<Observation> mu_states{index_vector(0), index_vector(1)};
  std::vector<double> mu_weights{0.6, 0.4};
  GradVOptions opt;
  opt.weights = batch.weights;
  opt.mu_states = mu_states;
  opt.mu_weights = mu_weights;
  opt.behavior_weights = mu_weights;
  const Vector v0 = oracles::random_vector(2, rng);
  const Vector g = grad_v_estimate(batch.trajs, behavior, LinearValue(IndicatorFeatures{2}, v0), mdp.gamma(), k, eta, opt);
  const auto f = [&](const Vector& x) { return path_reg_lagrangian(mdp, x, alpha, pi, pib, k, eta); };
  CHECK(oracles::rel_error(g, oracles::fd_gradient(f, v0)) < 1e-6);

  // At v = V^{pi_b} the penalty contributes nothing.
  const Vector vb = policy_evaluation(mdp, pib);
  const Vector with = grad_v_estimate(batch.trajs, behavior, LinearValue(IndicatorFeatures{2}, vb), mdp.gamma(), k, eta, opt);
  const Vector without = grad_v_estimate(batch.trajs, behavior, LinearValue(IndicatorFeatures{2}, vb), mdp.gamma(), k, 0.0, opt);
  CHECK((with - without).norm() < 1e-12);
}

TEST_CASE("value gradient on one state by hand") {
  // L = 0.1 v + (1 + 0.9 v - v) + (G - v)^2 with G the 400-step return of reward 1.
  const auto t = make_traj({0, 0}, {0}, {1.0});
  Trajectory b = make_traj({0}, {}, {});
  for (int i = 0; i < 400; ++i) {
    b.actions.push_back(index_vector(0));
    b.rewards.push_back(1.0);
    b.states.push_back(index_vector(0));
  }
  const double g_ret = (1.0 - std::pow(0.9, 400)) / 0.1;
  const std::vector<Trajectory> trajs{t};
  const std::vector<Trajectory> behavior{b};
  const Vector g = grad_v_estimate(trajs, behavior, LinearValue(IndicatorFeatures{1}, Vector::Constant(1, 8.0)), 0.9, 0, 1.0);
  CHECK(g(0) == doctest::Approx(0.1 + 0.9 - 1.0 - 2.0 * (g_ret - 8.0)).epsilon(1e-12));
}

TEST_CASE("start reweighting reproduces the mixed start distribution") {
  const auto mdp = random_mdp(3, 2, 0.9, 18);
  std::mt19937_64 rng(14);
  const auto pi = oracles::random_policy(3, 2, rng);
  const Vector beta = oracles::random_distribution(3, rng);
  const double eta_mu = 0.3;
  const Vector alpha = (1.0 - eta_mu) * beta + eta_mu * mdp.mu();
  const LinearValue v(IndicatorFeatures{3}, oracles::random_vector(3, rng));
  const int k = 2;

  double direct = 0.0;
  const auto from_alpha = oracles::exhaustive_batch(mdp, alpha, pi, k);
  for (std::size_t i = 0; i < from_alpha.trajs.size(); ++i) {
    direct += from_alpha.weights[i] * trajectory_delta(from_alpha.trajs[i], v, mdp.gamma(), k);
  }
  double reweighted = 0.0;
  const auto from_mu = oracles::exhaustive_batch(mdp, mdp.mu(), pi, k);
  for (std::size_t i = 0; i < from_mu.trajs.size(); ++i) {
    const int s0 = as_index(from_mu.trajs[i].states.front());
    const double tilde = (1.0 - eta_mu) * beta(s0) / mdp.mu()(s0);
    reweighted += from_mu.weights[i] * (tilde + eta_mu) * trajectory_delta(from_mu.trajs[i], v, mdp.gamma(), k);
  }
  CHECK(reweighted == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("trajectory JSONL round trip") {
  auto env = make_env("pendulum");
  GaussianRbfPolicy pi(RbfFeatureMap(8, 3, 1.0, 3), 1);
  auto trajs = sample_trajectories(*env, pi, 3, 7, 21);
  trajs[1].start_weight = 2.5;
  std::stringstream ss;
  write_trajectories(ss, trajs);
  const auto back = read_trajectories(ss);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].start_weight == trajs[i].start_weight);
    CHECK(back[i].rewards == trajs[i].rewards);
    for (std::size_t t = 0; t <= trajs[i].length(); ++t) CHECK(back[i].states[t] == trajs[i].states[t]);
    for (std::size_t t = 0; t < trajs[i].length(); ++t) CHECK(back[i].actions[t] == trajs[i].actions[t]);
  }
  std::stringstream bad("{\"steps\": 3}\n");
  CHECK_THROWS_AS(read_trajectories(bad), InvalidArgument);
}

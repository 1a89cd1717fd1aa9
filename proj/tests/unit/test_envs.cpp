#include <doctest.h>

#include <numbers>
#include <random>

#include "dualac/envs.hpp"
#include "dualac/errors.hpp"
#include "dualac/mdp.hpp"
#include "oracles.hpp"

using namespace dualac;

TEST_CASE("tabular reset draws from the initial distribution") {
  auto env = make_env("chain5");
  for (std::uint64_t seed = 0; seed < 20; ++seed) CHECK(as_index(env->reset(seed)) == 0);
  CHECK_THROWS_AS(make_env("nope"), InvalidArgument);
}

TEST_CASE("stepping a finished episode is an error") {
  TabularEnv env(two_state_chain_mdp(), 2);
  env.reset(1);
  CHECK_FALSE(env.step(index_vector(0)).done);
  CHECK(env.step(index_vector(0)).done);
  CHECK_THROWS_AS(env.step(index_vector(0)), InvalidStateError);
  CHECK_THROWS_AS(make_env("pendulum")->step(Vector::Zero(1)), InvalidStateError);
}

TEST_CASE("tabular transition frequencies match the kernel") {
  const auto mdp = chain_mdp();
  TabularEnv env(mdp, 1000000);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> pick(0, mdp.n_actions() - 1);
  std::vector<Matrix> counts(static_cast<std::size_t>(mdp.n_actions()), Matrix::Zero(mdp.n_states(), mdp.n_states()));
  int s = as_index(env.reset(3));
  for (int i = 0; i < 100000; ++i) {
    const int a = pick(rng);
    const auto r = env.step(index_vector(a));
    const int s2 = as_index(r.observation);
    CHECK(r.reward == mdp.reward(s, a));
    counts[static_cast<std::size_t>(a)](s, s2) += 1.0;
    s = s2;
  }
  for (int a = 0; a < mdp.n_actions(); ++a) {
    const Matrix& c = counts[static_cast<std::size_t>(a)];
    for (int x = 0; x < mdp.n_states(); ++x) {
      const double n = c.row(x).sum();
      if (n < 2000) continue;
      CHECK((c.row(x) / n - mdp.transition(a).row(x)).cwiseAbs().maxCoeff() < 0.01);
    }
  }
}

TEST_CASE("exported tabular MDPs") {
  const auto mdp = as_tabular(*make_env("chain5"));
  CHECK(mdp.n_states() == 5);
  for (int a = 0; a < mdp.n_actions(); ++a) {
    CHECK((mdp.transition(a).rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(mdp.transition(a).minCoeff() >= 0.0);
  }
  CHECK_THROWS_AS(as_tabular(*make_env("pendulum")), UnsupportedError);

  // Hand solution: V(s1) = 1 / (1 - 0.5) = 2 and V(s0) = 0.5 * 2 = 1.
  const Vector v = value_iteration(as_tabular(*make_env("chain2")), 1e-12);
  CHECK(v(0) == doctest::Approx(1.0));
  CHECK(v(1) == doctest::Approx(2.0));
}

TEST_CASE("greedy oracle policy simulated in the environment") {
  const auto mdp = chain_mdp();
  const auto sol = solve_lp_oracles(mdp);
  const double predicted = sol.primal / (1.0 - mdp.gamma());
  CHECK(predicted == doctest::Approx(mdp.mu().dot(sol.v_star)).epsilon(1e-9));

  TabularEnv env(mdp, 300);
  std::mt19937_64 rng(4);
  const int n = 4000;
  std::vector<double> returns;
  for (int ep = 0; ep < n; ++ep) {
    int s = as_index(env.reset(static_cast<std::uint64_t>(ep)));
    double ret = 0.0;
    double disc = 1.0;
    for (int t = 0; t < 300; ++t) {
      const Vector row = sol.pi_star.probs.row(s).transpose();
      std::discrete_distribution<int> d(row.data(), row.data() + row.size());
      const auto r = env.step(index_vector(d(rng)));
      ret += disc * r.reward;
      disc *= mdp.gamma();
      s = as_index(r.observation);
    }
    returns.push_back(ret);
  }
  double mean = 0.0;
  for (double r : returns) mean += r / n;
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean) / (n - 1);
  CHECK(std::abs(mean - predicted) < 4.0 * std::sqrt(var / n) + 1e-9);
}

TEST_CASE("pendulum examples") {
  Pendulum p;
  CHECK(p.spec().horizon == 200);
  const auto o1 = p.reset(17);
  Pendulum q;
  CHECK(q.reset(17) == o1);
  CHECK(o1.size() == 3);

  p.set_state({0.0, 0.0});
  const auto r = p.step(Vector::Zero(1));
  CHECK(r.reward == 0.0);
  CHECK(p.state().theta == 0.0);
  CHECK(p.state().theta_dot == 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const double th = 3.0 * u(rng);
    const double thd = 8.0 * u(rng);
    const double tq = 2.0 * u(rng);
    p.set_state({th, thd});
    const double r1 = p.step(Vector::Constant(1, tq)).reward;
    p.set_state({-th, -thd});
    const double r2 = p.step(Vector::Constant(1, -tq)).reward;
    CHECK(r1 == doctest::Approx(r2).epsilon(1e-14));
  }

  p.set_state({0.0, 0.0});
  CHECK(p.step(Vector::Constant(1, 5.0)).clipped);
  CHECK_THROWS_AS(p.step(Vector::Zero(2)), InvalidArgument);
}

TEST_CASE("pendulum reset angle is symmetric") {
  Pendulum p;
  const int n = 10000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = p.reset(static_cast<std::uint64_t>(i))(1);
    CHECK(std::abs(p.state().theta_dot) <= 1.0);
    sum += s;
    sq += s * s;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean) < 3.0 * sd / std::sqrt(n));
}

TEST_CASE("pendulum energy and reward bounds") {
  // Semi-implicit Euler conserves a shadow energy: the true energy oscillates but does not drift.
  // Drift is the change between the mean energy over the first and the last 50 steps.
  Pendulum p;
  for (double th0 : {1.0, 2.0, 2.8}) {
    p.set_state({th0, 0.0});
    const double e0 = p.energy();
    double first = 0.0;
    double last = 0.0;
    double max_dev = 0.0;
    for (int t = 0; t < 200; ++t) {
      p.step(Vector::Zero(1));
      CHECK(std::abs(p.state().theta_dot) < 8.0);
      if (t < 50) first += p.energy() / 50.0;
      if (t >= 150) last += p.energy() / 50.0;
      max_dev = std::max(max_dev, std::abs(p.energy() - e0) / e0);
    }
    CHECK(std::abs(last - first) / e0 < 0.02);
    CHECK(max_dev < 0.15);
  }

  const double lo = -(std::numbers::pi * std::numbers::pi + 0.1 * 64.0 + 0.001 * 4.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> torque(-5.0, 5.0);
  for (std::uint64_t ep = 0; ep < 20; ++ep) {
    p.reset(ep);
    for (int t = 0; t < 200; ++t) {
      const auto r = p.step(Vector::Constant(1, torque(rng)));
      CHECK(r.reward <= 0.0);
      CHECK(r.reward >= lo);
      CHECK(std::abs(p.state().theta_dot) <= 8.0);
      CHECK(p.state().theta > -std::numbers::pi);
      CHECK(p.state().theta <= std::numbers::pi);
      CHECK(r.done == (t == 199));
    }
  }
}

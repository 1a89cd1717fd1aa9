#include <doctest.h>

#include <random>

#include "dualac/envs.hpp"
#include "dualac/errors.hpp"
#include "dualac/mdp.hpp"
#include "oracles.hpp"

using namespace dualac;

TEST_CASE("mdp construction rejects broken inputs") {
  std::vector<Matrix> p{Matrix::Identity(2, 2)};
  const Matrix r = Matrix::Zero(2, 1);
  const Vector mu = Vector::Constant(2, 0.5);
  CHECK_NOTHROW(TabularMdp(p, r, 0.9, mu));
  CHECK_THROWS_AS(TabularMdp(p, r, 1.0, mu), InvalidArgument);
  CHECK_THROWS_AS(TabularMdp(p, r, 0.0, mu), InvalidArgument);
  CHECK_THROWS_AS(TabularMdp(p, r, 0.9, Vector::Constant(2, 0.4)), InvalidArgument);
  std::vector<Matrix> bad{Matrix::Constant(2, 2, 0.6)};
  CHECK_THROWS_AS(TabularMdp(bad, r, 0.9, mu), InvalidArgument);
  std::vector<Matrix> neg{Matrix::Identity(2, 2)};
  neg[0](0, 0) = 1.5;
  neg[0](0, 1) = -0.5;
  CHECK_THROWS_AS(TabularMdp(neg, r, 0.9, mu), InvalidArgument);
}

TEST_CASE("bellman operator on a single self-looping state") {
  const auto mdp = oracles::single_state_mdp(1.0, 0.9);
  CHECK(bellman_optimality_operator(mdp, Vector::Constant(1, 10.0))(0) == doctest::Approx(10.0));
  CHECK(bellman_optimality_operator(mdp, Vector::Zero(1))(0) == doctest::Approx(1.0));
  CHECK(k_step_bellman(mdp, Vector::Constant(1, 10.0), 5)(0) == doctest::Approx(10.0));
  CHECK(lambda_bellman(mdp, Vector::Constant(1, 10.0), 0.7, 80)(0) == doctest::Approx(10.0));
  CHECK_THROWS_AS(bellman_optimality_operator(mdp, Vector::Zero(2)), InvalidArgument);
}

TEST_CASE("bellman operator at v = 0 is the best immediate reward") {
  const auto mdp = random_mdp(2, 2, 0.9, 3);
  const Vector tv = bellman_optimality_operator(mdp, Vector::Zero(2));
  for (int s = 0; s < 2; ++s) CHECK(tv(s) == doctest::Approx(mdp.reward().row(s).maxCoeff()));
}

TEST_CASE("k-step operator: k = 0 is T, and composition equals tree search") {
  std::mt19937_64 rng(5);
  const auto mdp = random_mdp(3, 3, 0.9, 11);
  const Vector v = oracles::random_vector(3, rng);
  CHECK((k_step_bellman(mdp, v, 0) - bellman_optimality_operator(mdp, v)).norm() == 0.0);
  for (int s = 0; s < 3; ++s) {
    CHECK(k_step_bellman(mdp, Vector::Zero(3), 2)(s) == doctest::Approx(oracles::expectimax(mdp, Vector::Zero(3), s, 3)).epsilon(1e-12));
  }
}

TEST_CASE("k-step operator equals open-loop sequence search on deterministic MDPs") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto mdp = oracles::random_deterministic_mdp(4, 3, 0.8, seed);
    std::mt19937_64 rng(seed);
    const Vector v = oracles::random_vector(4, rng);
    for (int k = 0; k <= 3; ++k) {
      const Vector tk = k_step_bellman(mdp, v, k);
      for (int s = 0; s < 4; ++s) CHECK(std::abs(tk(s) - oracles::open_loop_max(mdp, v, s, k)) < 1e-10);
    }
  }
}

TEST_CASE("lambda operator") {
  const auto mdp = random_mdp(2, 2, 0.9, 2);
  const Vector zero = Vector::Zero(2);
  CHECK((lambda_bellman(mdp, zero, 0.0, 10) - k_step_bellman(mdp, zero, 0)).norm() < 1e-14);

  // Direct summation with exact T_k values.
  Vector expected = Vector::Zero(2);
  double mass = 0.0;
  for (int k = 0; k <= 40; ++k) {
    const double w = k < 40 ? 0.5 * std::pow(0.5, k) : std::pow(0.5, 40);
    mass += w;
    expected += w * k_step_bellman(mdp, zero, k);
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-15));
  CHECK((lambda_bellman(mdp, zero, 0.5, 40) - expected).norm() < 1e-12);

  const auto w = lambda_weights(0.3, 12);
  double total = 0.0;
  for (double x : w) total += x;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(lambda_bellman(mdp, zero, 1.0, 10), InvalidArgument);
  CHECK_THROWS_AS(lambda_bellman(mdp, zero, -0.1, 10), InvalidArgument);
}

TEST_CASE("value iteration on hand-solved instances") {
  const auto single = oracles::single_state_mdp(1.0, 0.9);
  CHECK(value_iteration(single, 1e-10)(0) == doctest::Approx(10.0).epsilon(1e-9));

  // s1 = 1 + 0.5 s1 -> 2; s0 = max(0.5 s0, 0.5 s1) -> 1.
  const auto chain = two_state_chain_mdp(0.5);
  const Vector v = value_iteration(chain, 1e-12);
  CHECK(v(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(v(1) == doctest::Approx(2.0).epsilon(1e-10));

  const TabularPolicy g = greedy_policy(chain, v);
  CHECK(g.probs(0, 1) == 1.0);
  CHECK(g.probs(1, 0) == 1.0);  // both actions self-loop with reward 1; lowest index wins
}

TEST_CASE("value iteration matches policy enumeration on a 2x2 gridworld") {
  const auto mdp = gridworld_mdp(2, 0.95, 0.1);
  const Vector v = value_iteration(mdp, 1e-12);
  const Vector best = oracles::best_deterministic_policy_value(mdp);
  CHECK((v - best).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("greedy policy on single-action and tied MDPs") {
  const auto single = oracles::single_state_mdp(1.0, 0.9);
  CHECK(greedy_policy(single, Vector::Zero(1)).probs(0, 0) == 1.0);
  const auto tied = oracles::single_state_mdp(1.0, 0.9, 3);
  const auto g = greedy_policy(tied, Vector::Zero(1));
  CHECK(g.probs(0, 0) == 1.0);
  CHECK(g.probs(0, 1) == 0.0);
}

TEST_CASE("discounted state occupancy") {
  const auto single = oracles::single_state_mdp();
  CHECK(discounted_state_occupancy(single, TabularPolicy::uniform(1, 1))(0) == doctest::Approx(1.0));

  const auto chain = two_state_chain_mdp(0.5);
  const Vector a = discounted_state_occupancy(chain, TabularPolicy::deterministic({1, 0}, 2));
  CHECK(a(0) == doctest::Approx(0.5));
  CHECK(a(1) == doctest::Approx(0.5));

  // Cyclic shifts are doubly stochastic; with uniform mu the occupancy stays uniform.
  std::vector<Matrix> p(2, Matrix::Zero(3, 3));
  for (int s = 0; s < 3; ++s) {
    p[0](s, (s + 1) % 3) = 1.0;
    p[1](s, (s + 2) % 3) = 1.0;
  }
  const TabularMdp sym(p, Matrix::Zero(3, 2), 0.9, Vector::Constant(3, 1.0 / 3.0));
  const Vector u = discounted_state_occupancy(sym, TabularPolicy::uniform(3, 2));
  CHECK((u - Vector::Constant(3, 1.0 / 3.0)).norm() < 1e-12);
}

TEST_CASE("occupancy measure flow constraints and round trip") {
  std::mt19937_64 rng(9);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto mdp = random_mdp(6, 3, 0.9, seed);
    const auto pi = oracles::random_policy(6, 3, rng);
    const auto rho = occupancy_from_policy(mdp, pi);
    CHECK(rho.total() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(dual_feasibility_residual(mdp, rho) < 1e-10);
    CHECK(rho.rho.minCoeff() >= 0.0);
    // Independent flow check: sum_a rho(s', a) = (1-g) mu(s') + g sum_{s,a} P(s'|s,a) rho(s,a).
    Vector inflow = (1.0 - mdp.gamma()) * mdp.mu();
    for (int a = 0; a < 3; ++a) inflow += mdp.gamma() * mdp.transition(a).transpose() * rho.rho.col(a);
    CHECK((rho.rho.rowwise().sum() - inflow).norm() < 1e-10);
    const auto back = policy_from_occupancy(rho);
    CHECK((back.probs - pi.probs).cwiseAbs().maxCoeff() < 1e-10);
  }
  const auto single = oracles::single_state_mdp();
  CHECK(occupancy_from_policy(single, TabularPolicy::uniform(1, 1)).rho(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("policy from occupancy") {
  OccupancyMeasure half{Matrix::Constant(2, 1, 0.5)};
  const auto p = policy_from_occupancy(half);
  CHECK(p.probs(0, 0) == 1.0);
  CHECK(p.probs(1, 0) == 1.0);

  Matrix m(2, 2);
  m << 0.3, 0.7, 0.0, 0.0;
  const auto q = policy_from_occupancy(OccupancyMeasure{m});
  CHECK(q.probs(0, 1) == doctest::Approx(0.7));
  CHECK(q.probs(1, 0) == doctest::Approx(0.5));
  CHECK(q.probs(1, 1) == doctest::Approx(0.5));

  m(0, 0) = -0.1;
  CHECK_THROWS_AS(policy_from_occupancy(OccupancyMeasure{m}), InvalidArgument);
}

TEST_CASE("duality gap") {
  const auto single = oracles::single_state_mdp();
  const auto s = solve_lp_oracles(single);
  CHECK(std::abs(duality_gap(single, s.v_star, s.rho_star)) < 1e-9);

  const auto mdp = random_mdp(8, 3, 0.9, 42);
  const auto sol = solve_lp_oracles(mdp);
  CHECK(std::abs(duality_gap(mdp, sol.v_star, sol.rho_star)) < 1e-6);
  const Vector shifted = sol.v_star + Vector::Constant(8, 2.5);
  CHECK(duality_gap(mdp, shifted, sol.rho_star) - duality_gap(mdp, sol.v_star, sol.rho_star) ==
        doctest::Approx((1.0 - 0.9) * 2.5).epsilon(1e-10));
}

TEST_CASE("operator properties on random instances") {
  std::mt19937_64 rng(17);
  const double tol = 1e-10;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto mdp = random_mdp(5, 3, seed % 2 == 0 ? 0.9 : 0.99, seed);
    const Vector v = oracles::random_vector(5, rng, 3.0);
    const Vector u = v.cwiseMax(oracles::random_vector(5, rng, 3.0));
    for (int k : {0, 1, 3}) {
      CHECK((k_step_bellman(mdp, u, k) - k_step_bellman(mdp, v, k)).minCoeff() >= -1e-12);
    }
    CHECK((lambda_bellman(mdp, u, 0.6, 60) - lambda_bellman(mdp, v, 0.6, 60)).minCoeff() >= -1e-12);
    const double lhs = (bellman_optimality_operator(mdp, u) - bellman_optimality_operator(mdp, v)).cwiseAbs().maxCoeff();
    CHECK(lhs <= mdp.gamma() * (u - v).cwiseAbs().maxCoeff() + 1e-12);

    const Vector vstar = value_iteration(mdp, tol);
    for (int k : {0, 1, 5}) CHECK((k_step_bellman(mdp, vstar, k) - vstar).cwiseAbs().maxCoeff() <= 10 * tol);
    for (double lam : {0.3, 0.9}) {
      CHECK((lambda_bellman(mdp, vstar, lam, 400) - vstar).cwiseAbs().maxCoeff() <= 10 * tol);
    }
    CHECK(vstar.cwiseAbs().maxCoeff() <= mdp.max_abs_reward() / (1.0 - mdp.gamma()) + 1e-9);
  }
}

#include <catch2/catch_amalgamated.hpp>

#include "mimowf/channel.hpp"
#include "mimowf/oracle.hpp"
#include "mimowf/su_perfect.hpp"

using namespace mimowf;

TEST_CASE("P1 identity channel full budget") {
  const CMat h = CMat::Identity(2, 2);
  const CMat rn = CMat::Identity(2, 2);
  const Solution sol = solve_single_constraint(h, rn, CMat::Identity(2, 2), 2.0,
                                               Objective::Capacity);
  CHECK((sol.Q - CMat::Identity(2, 2)).norm() < 1e-10);
  CHECK(sol.diag.objective == Catch::Approx(2.0));  // 2 log2(2) bits
  CHECK(sol.diag.kkt_stationarity <= 1e-8);
  CHECK(sol.diag.kkt_complementarity <= 1e-8);
}

TEST_CASE("P1 weighted constraint shuts the expensive antenna") {
  const CMat h = CMat::Identity(2, 2);
  const CMat rn = CMat::Identity(2, 2);
  CMat w = CMat::Zero(2, 2);
  w(0, 0) = 1.0;
  w(1, 1) = 4.0;
  const Solution sol =
      solve_single_constraint(h, rn, w, 1.0, Objective::Capacity);
  CHECK(sol.Q(0, 0).real() == Catch::Approx(1.0));
  CHECK(std::abs(sol.Q(1, 1)) < 1e-10);
  CHECK(sol.diag.objective == Catch::Approx(1.0));  // log2(2)
}

TEST_CASE("P1/P2 random instances match the projected-gradient oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 12; ++trial) {
    const int m = 2 + static_cast<int>(rng.uniform() * 3);
    const int n = 2 + static_cast<int>(rng.uniform() * 3);
    const CMat h = rng.cgaussian(m, n, 1.0);
    CMat b = rng.cgaussian(m, m, 1.0);
    const CMat rn = hermitize(b * b.adjoint() + 0.3 * CMat::Identity(m, m));
    CMat bw = rng.cgaussian(n, n, 1.0);
    const CMat w = hermitize(bw * bw.adjoint() + 0.3 * CMat::Identity(n, n));
    const double p = 1.0 + 3.0 * rng.uniform();
    const Objective obj = trial % 2 ? Objective::SumMse : Objective::Capacity;

    const Solution sol = solve_single_constraint(h, rn, w, p, obj);
    ConvexCovarianceProblem cvx{{h}, rn, {{{w, p}}}, obj};
    OracleReport report;
    projected_gradient_solve(cvx, 1e-8, 5000, &report);
    REQUIRE(std::abs(sol.diag.objective - report.objective) <=
            1e-6 * (1.0 + std::abs(report.objective)));
  }
}

TEST_CASE("multi-constraint reduces to single constraint when I=1") {
  Rng rng(202);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform() * 3);
    const CMat h = rng.cgaussian(n, n, 1.0);
    const CMat rn = CMat::Identity(n, n);
    CMat bw = rng.cgaussian(n, n, 1.0);
    const CMat w = hermitize(bw * bw.adjoint() + 0.2 * CMat::Identity(n, n));
    const double p = 2.0;
    const Objective obj = trial % 2 ? Objective::SumMse : Objective::Capacity;
    const Solution a = solve_single_constraint(h, rn, w, p, obj);
    const Solution b = solve_multi_constraint(h, rn, {{w, p}}, obj);
    REQUIRE(std::abs(a.diag.objective - b.diag.objective) <=
            1e-9 * (1.0 + std::abs(a.diag.objective)));
  }
}

TEST_CASE("per-antenna symmetric case saturates both limits") {
  CMat h = CMat::Zero(2, 2);
  h(0, 0) = 10.0;
  h(1, 1) = 10.0;
  RVec limits(2);
  limits << 1.0, 1.0;
  const Solution sol =
      solve_multi_constraint(h, CMat::Identity(2, 2),
                             per_antenna_constraints(limits),
                             Objective::Capacity);
  CHECK(sol.Q(0, 0).real() == Catch::Approx(1.0).epsilon(1e-6));
  CHECK(sol.Q(1, 1).real() == Catch::Approx(1.0).epsilon(1e-6));
  CHECK(sol.diag.converged);
}

TEST_CASE("per-antenna constraints match oracle on 4x4 instances") {
  Rng rng(303);
  RVec limits(4);
  limits << 1.6, 1.2, 0.8, 0.4;
  for (int trial = 0; trial < 6; ++trial) {
    const CMat h = rng.cgaussian(4, 4, 1.0);
    const CMat rn = CMat::Identity(4, 4);
    const Objective obj = trial % 2 ? Objective::SumMse : Objective::Capacity;
    const Solution sol = solve_multi_constraint(
        h, rn, per_antenna_constraints(limits), obj);
    ConvexCovarianceProblem cvx{{h}, rn, {per_antenna_constraints(limits)}, obj};
    OracleReport report;
    projected_gradient_solve(cvx, 1e-8, 6000, &report);
    REQUIRE(std::abs(sol.diag.objective - report.objective) <=
            1e-4 * (1.0 + std::abs(report.objective)));
    REQUIRE(sol.diag.max_constraint_violation <= 1e-7);
  }
}

TEST_CASE("complementary slackness at termination") {
  Rng rng(404);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 3;
    const CMat h = rng.cgaussian(n, n, 1.0);
    RVec limits(n);
    for (int i = 0; i < n; ++i) limits(i) = 0.5 + rng.uniform();
    const Solution sol = solve_multi_constraint(
        h, CMat::Identity(n, n), per_antenna_constraints(limits),
        Objective::Capacity);
    const auto constraints = per_antenna_constraints(limits);
    for (std::size_t i = 0; i < constraints.size(); ++i) {
      const double slack =
          constraints[i].P - (constraints[i].Omega * sol.Q).trace().real();
      if (sol.mu_tilde[i] > 1e-6)
        REQUIRE(std::abs(slack) <= 1e-6 * constraints[i].P);
    }
    REQUIRE(sol.diag.kkt_stationarity <= 1e-6);
    REQUIRE(sol.diag.kkt_complementarity <= 1e-6);
  }
}

TEST_CASE("capacity optimum resists random feasible perturbations") {
  Rng rng(505);
  const int n = 3;
  const CMat h = rng.cgaussian(n, n, 1.0);
  const CMat rn = CMat::Identity(n, n);
  RVec limits(n);
  limits << 1.0, 0.7, 0.5;
  const auto constraints = per_antenna_constraints(limits);
  const Solution sol =
      solve_multi_constraint(h, rn, constraints, Objective::Capacity);
  const double f0 = sol.diag.objective;
  int improvements = 0;
  for (int t = 0; t < 100; ++t) {
    CMat delta = rng.cgaussian(n, n, 1.0);
    delta = hermitize(delta);
    CMat q = sol.Q + 1e-3 * delta;
    q = project_feasible(q, constraints);
    const double f = capacity_bits(h, rn, q);
    if (f > f0 + 1e-6) ++improvements;
  }
  CHECK(improvements == 0);
}

TEST_CASE("MSE at optimum beats zero covariance") {
  Rng rng(606);
  for (int trial = 0; trial < 6; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform() * 3);
    const CMat h = rng.cgaussian(n, n, 1.0);
    const CMat rn = CMat::Identity(n, n);
    const Solution sol = solve_single_constraint(h, rn, CMat::Identity(n, n),
                                                 2.0, Objective::SumMse);
    REQUIRE(sol.diag.objective < static_cast<double>(n));
  }
}

TEST_CASE("zero channel is rejected") {
  const CMat h = CMat::Zero(2, 2);
  CHECK_THROWS_AS(solve_single_constraint(h, CMat::Identity(2, 2),
                                          CMat::Identity(2, 2), 1.0,
                                          Objective::Capacity),
                  AllZeroChannel);
}

TEST_CASE("singular weight matrix is rejected") {
  CMat w = CMat::Zero(2, 2);
  w(0, 0) = 1.0;
  CHECK_THROWS_AS(solve_single_constraint(CMat::Identity(2, 2),
                                          CMat::Identity(2, 2), w, 1.0,
                                          Objective::Capacity),
                  SingularWeight);
}

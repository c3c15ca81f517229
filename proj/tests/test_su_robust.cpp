#include <catch2/catch_amalgamated.hpp>

#include "mimowf/channel.hpp"
#include "mimowf/su_robust.hpp"

using namespace mimowf;

namespace {

KroneckerErrorModel random_model(Rng& rng, int m, int n, double sigma_e2,
                                 double r_r, double r_t, double sigma_n2) {
  KroneckerSpec spec{r_t, r_r, m, n, sigma_e2, 0};
  spec.seed = static_cast<std::uint64_t>(rng.uniform() * 1e18);
  const GeneratedChannel g = generate_channel(spec);
  return KroneckerErrorModel{g.H_hat, g.R_R, g.R_T, sigma_n2};
}

}  // namespace

TEST_CASE("equivalent noise formula") {
  Rng rng(1);
  KroneckerErrorModel model = random_model(rng, 3, 3, 0.2, 0.5, 0.4, 0.8);
  CMat q0 = CMat::Zero(3, 3);
  CHECK((equivalent_noise(q0, model) - 0.8 * CMat::Identity(3, 3)).norm() <
        1e-14);

  // R_T = I, R_R = I: K_n = (sigma^2 + P) I
  KroneckerErrorModel white = model;
  white.R_T = CMat::Identity(3, 3);
  white.R_R = CMat::Identity(3, 3);
  CMat q = CMat::Identity(3, 3) * (2.0 / 3.0);
  CHECK((equivalent_noise(q, white) - 2.8 * CMat::Identity(3, 3)).norm() <
        1e-12);

  // random inputs: direct re-evaluation
  CMat bq = rng.cgaussian(3, 3, 1.0);
  const CMat qr = hermitize(bq * bq.adjoint());
  const CMat direct =
      model.sigma_n2 * CMat::Identity(3, 3) +
      (model.R_T * qr).trace().real() * model.R_R;
  CHECK((equivalent_noise(qr, model) - direct).norm() < 1e-12);
}

TEST_CASE("perfect-CSI reduction of the robust solver") {
  Rng rng(2);
  for (int t = 0; t < 5; ++t) {
    KroneckerErrorModel model = random_model(rng, 4, 3, 0.0, 0.5, 0.4, 1.0);
    const double p = 3.0;
    for (Objective obj : {Objective::Capacity, Objective::SumMse}) {
      const Solution robust = solve_robust_sum_power(model, p, obj);
      const Solution exact = solve_single_constraint(
          model.H_hat, CMat::Identity(4, 4), CMat::Identity(3, 3), p, obj);
      REQUIRE((robust.Q - exact.Q).norm() <= 1e-8 * (1.0 + exact.Q.norm()));
    }
  }
}

TEST_CASE("tx-white closed form carries a valid certificate") {
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    KroneckerErrorModel model = random_model(rng, 4, 2, 0.3, 0.55, 0.0, 0.9);
    // r_t = 0 makes R_T proportional to identity (exactly I * sigma_e2)
    REQUIRE(is_scaled_identity(model.R_T));
    const double p = 2.5;
    for (Objective obj : {Objective::Capacity, Objective::SumMse}) {
      const Solution sol = solve_robust_tx_white(model, p, obj);
      REQUIRE(std::abs(sol.Q.trace().real() - p) <= 1e-9 * p);
      const RobustKkt cert = robust_kkt_residual(model, sol.Q, obj, p);
      REQUIRE(cert.stationarity <= 1e-8);
      REQUIRE(cert.complementarity <= 1e-8);
    }
  }
}

TEST_CASE("rx-white closed form carries a valid certificate") {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    KroneckerErrorModel model = random_model(rng, 3, 3, 0.4, 0.0, 0.45, 1.1);
    REQUIRE(is_scaled_identity(model.R_R));
    const double p = 2.0;
    for (Objective obj : {Objective::Capacity, Objective::SumMse}) {
      const Solution sol = solve_robust_rx_white(model, p, obj);
      REQUIRE(std::abs(sol.Q.trace().real() - p) <= 1e-9 * p);
      const RobustKkt cert = robust_kkt_residual(model, sol.Q, obj, p);
      REQUIRE(cert.stationarity <= 1e-8);
      REQUIRE(cert.complementarity <= 1e-8);
    }
  }
}

TEST_CASE("general fixed point agrees with the tx-white closed form") {
  Rng rng(5);
  RobustSolveOptions opts;
  opts.allow_dispatch = false;
  for (int t = 0; t < 10; ++t) {
    KroneckerErrorModel model = random_model(rng, 3, 3, 0.25, 0.5, 0.0, 1.0);
    const double p = 2.0;
    const Objective obj = t % 2 ? Objective::SumMse : Objective::Capacity;
    const Solution general = solve_robust_general(model, p, obj, opts);
    const Solution special = solve_robust_tx_white(model, p, obj);
    REQUIRE((general.Q - special.Q).norm() <=
            1e-7 * (1.0 + special.Q.norm()));
  }
}

TEST_CASE("general fixed point agrees with the rx-white closed form") {
  Rng rng(6);
  RobustSolveOptions opts;
  opts.allow_dispatch = false;
  for (int t = 0; t < 10; ++t) {
    KroneckerErrorModel model = random_model(rng, 3, 3, 0.3, 0.0, 0.45, 1.0);
    const double p = 2.5;
    const Objective obj = t % 2 ? Objective::SumMse : Objective::Capacity;
    const Solution general = solve_robust_general(model, p, obj, opts);
    const Solution special = solve_robust_rx_white(model, p, obj);
    REQUIRE((general.Q - special.Q).norm() <=
            1e-7 * (1.0 + special.Q.norm()));
  }
}

TEST_CASE("both specials apply when R_T and R_R are white") {
  Rng rng(7);
  KroneckerErrorModel model = random_model(rng, 3, 3, 0.5, 0.0, 0.0, 1.0);
  const double p = 2.0;
  const Solution a = solve_robust_tx_white(model, p, Objective::Capacity);
  const Solution b = solve_robust_rx_white(model, p, Objective::Capacity);
  CHECK((a.Q - b.Q).norm() <= 1e-7 * (1.0 + a.Q.norm()));
}

TEST_CASE("bound scalars") {
  Rng rng(8);
  KroneckerErrorModel model = random_model(rng, 3, 3, 0.2, 0.5, 0.4, 0.7);
  model.R_T = CMat::Identity(3, 3);
  model.R_R = CMat::Identity(3, 3);
  const FixedPointScalars b = bound_scalars(model, 2.0);
  CHECK(b.alpha == Catch::Approx(2.0));
  CHECK(b.beta == Catch::Approx(3.0 / (0.7 + 2.0)));
  CHECK(b.gamma == Catch::Approx(b.beta / 4.0));
}

TEST_CASE("iterate scalars respect their same-noise upper bounds") {
  Rng rng(9);
  for (int t = 0; t < 25; ++t) {
    KroneckerErrorModel model = random_model(rng, 3, 3, 0.3, 0.5, 0.4, 1.0);
    const double p = 2.0;
    const Objective obj = t % 2 ? Objective::SumMse : Objective::Capacity;
    RobustSolveOptions opts;
    opts.allow_dispatch = false;
    const Solution sol = solve_robust_general(model, p, obj, opts);
    const CMat kn = equivalent_noise(sol.Q, model);
    const double alpha = alpha_scalar(model, sol.Q);
    const double beta = beta_scalar(model, sol.Q, kn);
    const double gamma = gamma_scalar(model, sol.Q, kn);
    const double alpha_max = bound_scalars(model, p).alpha;
    const double same_kn_cap =
        kn.ldlt().solve(model.R_R).trace().real();
    REQUIRE(alpha <= alpha_max + 1e-9);
    REQUIRE(beta <= same_kn_cap + 1e-9);
    REQUIRE(gamma <= 0.25 * same_kn_cap + 1e-9);
  }
}

TEST_CASE("x over (1+x)^2 never exceeds one quarter") {
  for (int i = 0; i <= 1000; ++i) {
    const double x = i * 0.01;
    CHECK(x / ((1.0 + x) * (1.0 + x)) <= 0.25 + 1e-15);
  }
}

TEST_CASE("robust multi-constraint reductions") {
  Rng rng(10);
  // I = 1, Omega = I, R_R white: equals rx-white solver
  for (int t = 0; t < 5; ++t) {
    KroneckerErrorModel model = random_model(rng, 3, 3, 0.3, 0.0, 0.5, 1.0);
    const double p = 2.0;
    const Solution multi = solve_robust_multi_constraint(
        model, sum_power_constraint(3, p), Objective::Capacity);
    const Solution special = solve_robust_rx_white(model, p, Objective::Capacity);
    REQUIRE((multi.Q - special.Q).norm() <= 1e-7 * (1.0 + special.Q.norm()));
  }
  // zero error: equals the perfect-CSI multi-constraint solver
  RVec limits(3);
  limits << 1.0, 0.8, 0.6;
  for (int t = 0; t < 5; ++t) {
    KroneckerErrorModel model = random_model(rng, 3, 3, 0.0, 0.4, 0.4, 1.0);
    const Solution robust = solve_robust_multi_constraint(
        model, per_antenna_constraints(limits), Objective::Capacity);
    const Solution perfect = solve_multi_constraint(
        model.H_hat, CMat::Identity(3, 3), per_antenna_constraints(limits),
        Objective::Capacity);
    REQUIRE(std::abs(robust.diag.objective - perfect.diag.objective) <=
            1e-7 * (1.0 + std::abs(perfect.diag.objective)));
  }
}

TEST_CASE("robust multi-constraint certificate on per-antenna instances") {
  Rng rng(12);
  RVec limits(4);
  limits << 1.6, 1.2, 0.8, 0.4;
  for (int t = 0; t < 4; ++t) {
    KroneckerErrorModel model = random_model(rng, 4, 4, 0.3, 0.0, 0.45, 1.0);
    const Objective obj = t % 2 ? Objective::SumMse : Objective::Capacity;
    const Solution sol = solve_robust_multi_constraint(
        model, per_antenna_constraints(limits), obj);
    const RobustKkt cert = robust_kkt_residual_multi(
        model, sol.Q, obj, per_antenna_constraints(limits), sol.mu_tilde);
    REQUIRE(cert.stationarity <= 1e-6);
    REQUIRE(cert.complementarity <= 1e-6);
    REQUIRE(sol.diag.max_constraint_violation <= 1e-6);
  }
}

TEST_CASE("robust multi-constraint general path certificate") {
  Rng rng(13);
  RVec limits(3);
  limits << 1.2, 0.9, 0.6;
  for (int t = 0; t < 3; ++t) {
    // correlated on both sides: no closed-form dispatch available
    KroneckerErrorModel model = random_model(rng, 3, 3, 0.2, 0.5, 0.4, 1.0);
    const Solution sol = solve_robust_multi_constraint(
        model, per_antenna_constraints(limits), Objective::Capacity);
    const RobustKkt cert = robust_kkt_residual_multi(
        model, sol.Q, Objective::Capacity, per_antenna_constraints(limits),
        sol.mu_tilde);
    REQUIRE(cert.stationarity <= 1e-6);
    REQUIRE(sol.diag.max_constraint_violation <= 1e-6);
  }
}

#include <catch2/catch_amalgamated.hpp>

#include "mimowf/channel.hpp"
#include "mimowf/mu_mimo.hpp"
#include "mimowf/oracle.hpp"

using namespace mimowf;

namespace {

MuUplinkProblem fig2_style_problem(Rng& rng, int n_users, int n_tx, int n_rx,
                                   const RVec& limits, double sigma_n2,
                                   double r_t, double r_r, double sigma_e2) {
  MuUplinkProblem p;
  p.Rn = sigma_n2 * CMat::Identity(n_rx, n_rx);
  for (int k = 0; k < n_users; ++k) {
    KroneckerSpec spec{r_t, r_r, n_rx, n_tx, sigma_e2,
                       static_cast<std::uint64_t>(rng.uniform() * 1e18)};
    const GeneratedChannel g = generate_channel(spec);
    MuUser u;
    u.H_hat = g.H_hat;
    u.R_T = g.R_T;
    u.R_R = g.R_R;
    u.constraints = per_antenna_constraints(limits);
    p.users.push_back(u);
  }
  return p;
}

}  // namespace

TEST_CASE("uplink with one user reduces to the single-user solver") {
  Rng rng(1);
  RVec limits(3);
  limits << 1.0, 0.7, 0.4;
  for (int t = 0; t < 5; ++t) {
    MuUplinkProblem p = fig2_style_problem(rng, 1, 3, 4, limits, 0.5, 0.4, 0.5,
                                           t % 2 ? 0.2 : 0.0);
    const MuSolution mu_sol = solve_uplink(p);
    Solution su_sol;
    if (t % 2) {
      KroneckerErrorModel model{p.users[0].H_hat, p.users[0].R_R,
                                p.users[0].R_T, 0.5};
      su_sol = solve_robust_multi_constraint(model, p.users[0].constraints,
                                             Objective::Capacity);
    } else {
      su_sol = solve_multi_constraint(p.users[0].H_hat, p.Rn,
                                      p.users[0].constraints,
                                      Objective::Capacity);
    }
    REQUIRE((mu_sol.Q[0] - su_sol.Q).norm() <= 1e-7 * (1.0 + su_sol.Q.norm()));
  }
}

TEST_CASE("uplink sum capacity matches the convex oracle") {
  Rng rng(2);
  RVec limits(4);
  limits << 1.6, 1.2, 0.8, 0.4;
  for (int t = 0; t < 3; ++t) {
    MuUplinkProblem p =
        fig2_style_problem(rng, 2, 4, 8, limits, 4.0 / std::pow(10.0, t), 0.4,
                           0.5, 0.0);
    const MuSolution sol = solve_uplink(p);

    ConvexCovarianceProblem cvx;
    cvx.Rn = p.Rn;
    cvx.objective = Objective::Capacity;
    for (const auto& u : p.users) {
      cvx.H.push_back(u.H_hat);
      cvx.constraints.push_back(u.constraints);
    }
    OracleReport report;
    projected_gradient_solve(cvx, 1e-8, 20000, &report);
    REQUIRE(std::abs(sol.sum_capacity_bits - report.objective) <= 1e-4);
    REQUIRE(sol.max_constraint_violation <= 1e-6);
  }
}

TEST_CASE("uplink sweeps are monotone under fixed multiplier weights") {
  Rng rng(3);
  // sum-power users make each sweep an exact block-coordinate ascent step
  MuUplinkProblem p;
  p.Rn = CMat::Identity(4, 4);
  for (int k = 0; k < 3; ++k) {
    MuUser u;
    u.H_hat = rng.cgaussian(4, 3, 1.0);
    u.constraints = sum_power_constraint(3, 1.0 + k * 0.5);
    p.users.push_back(u);
  }
  std::vector<CMat> q(3, CMat::Zero(3, 3));
  double prev = uplink_sum_capacity_bits(p, q);
  for (int sweep = 0; sweep < 20; ++sweep) {
    for (std::size_t k = 0; k < 3; ++k) {
      const CMat pi =
          hermitize(p.Rn + mu_detail::uplink_interference(p, q, k));
      q[k] = solve_single_constraint(p.users[k].H_hat, pi,
                                     CMat::Identity(3, 3),
                                     p.users[k].constraints[0].P,
                                     Objective::Capacity)
                 .Q;
      const double now = uplink_sum_capacity_bits(p, q);
      REQUIRE(now >= prev - 1e-12 * (1.0 + std::abs(prev)));
      prev = now;
    }
  }
}

TEST_CASE("uplink objective is order-robust") {
  Rng rng(4);
  RVec limits(3);
  limits << 1.2, 0.9, 0.5;
  MuUplinkProblem p = fig2_style_problem(rng, 3, 3, 5, limits, 0.7, 0.3, 0.4,
                                         0.0);
  const MuSolution a = solve_uplink(p);
  MuUplinkProblem perm = p;
  std::swap(perm.users[0], perm.users[2]);
  const MuSolution b = solve_uplink(perm);
  CHECK(std::abs(a.sum_capacity_bits - b.sum_capacity_bits) <=
        1e-9 * (1.0 + std::abs(a.sum_capacity_bits)));
}

TEST_CASE("uplink covariances are PSD and feasible") {
  Rng rng(5);
  RVec limits(3);
  limits << 1.0, 0.8, 0.6;
  MuUplinkProblem p = fig2_style_problem(rng, 2, 3, 4, limits, 0.6, 0.4, 0.5,
                                         0.1);
  const MuSolution sol = solve_uplink(p);
  for (std::size_t k = 0; k < 2; ++k) {
    REQUIRE(is_hermitian_psd(sol.Q[k]));
    for (const auto& c : p.users[k].constraints)
      REQUIRE(herm_inner(c.Omega, sol.Q[k]) <= c.P * (1.0 + 1e-6));
  }
}

TEST_CASE("imperfect-CSI uplink special case matches the closed per-user map") {
  // I_k = 1, Omega = I, R_T,k = r_bk I: the per-user update is a plain
  // water-fill against Pi_k built from the power-scaled receive correlations.
  Rng rng(6);
  const int n_rx = 4, n_tx = 3;
  MuUplinkProblem p;
  p.Rn = 0.8 * CMat::Identity(n_rx, n_rx);
  std::vector<double> r_b{0.05, 0.12};
  std::vector<double> power{1.5, 2.0};
  for (int k = 0; k < 2; ++k) {
    KroneckerSpec spec{0.0, 0.5, n_rx, n_tx, 1.0,
                       static_cast<std::uint64_t>(1000 + k)};
    GeneratedChannel g = generate_channel(spec);
    MuUser u;
    u.H_hat = rng.cgaussian(n_rx, n_tx, 1.0);
    u.R_T = r_b[k] * CMat::Identity(n_tx, n_tx);
    u.R_R = g.R_R;
    u.constraints = sum_power_constraint(n_tx, power[k]);
    p.users.push_back(u);
  }
  const MuSolution sol = solve_uplink(p);
  REQUIRE(sol.converged);
  // verify each user's block against the closed per-user assembly
  for (int k = 0; k < 2; ++k) {
    CMat pi = p.Rn;
    for (int j = 0; j < 2; ++j) {
      pi += power[j] * r_b[j] * p.users[j].R_R;
      if (j != k)
        pi += p.users[j].H_hat * sol.Q[j] * p.users[j].H_hat.adjoint();
    }
    pi = hermitize(pi);
    const CMat pi_is = psd_sqrt_pair(pi, true).inv_sqrt;
    const SortedSvd svd = sorted_svd(pi_is * p.users[k].H_hat);
    const double mu = water_level(svd.singular_values, 1, power[k]);
    WaterfillProblem block{p.users[k].H_hat, pi, CMat::Identity(n_tx, n_tx), 1};
    const CMat q_expect = assemble_covariance(block, mu).Q;
    REQUIRE((sol.Q[k] - q_expect).norm() <= 1e-7 * (1.0 + q_expect.norm()));
  }
}

TEST_CASE("downlink with one user reduces to the single-user solver") {
  Rng rng(7);
  RVec limits(3);
  limits << 1.2, 0.8, 0.5;
  for (int t = 0; t < 4; ++t) {
    MuDownlinkProblem p;
    p.H = {rng.cgaussian(3, 3, 1.0)};
    p.Rn = {CMat::Identity(3, 3)};
    p.constraints = per_antenna_constraints(limits);
    const MuSolution dl = solve_downlink(p);
    const Solution su = solve_multi_constraint(p.H[0], p.Rn[0], p.constraints,
                                               Objective::Capacity);
    REQUIRE(std::abs(dl.sum_capacity_bits - su.diag.objective) <=
            1e-7 * (1.0 + std::abs(su.diag.objective)));
  }
}

TEST_CASE("downlink with orthogonal channels decouples into P1 solves") {
  Rng rng(8);
  // users on orthogonal row spaces, shared sum power
  const int n = 4;
  CMat h1 = CMat::Zero(2, n), h2 = CMat::Zero(2, n);
  h1.block(0, 0, 2, 2) = rng.cgaussian(2, 2, 1.0);
  h2.block(0, 2, 2, 2) = rng.cgaussian(2, 2, 1.0);
  MuDownlinkProblem p;
  p.H = {h1, h2};
  p.Rn = {CMat::Identity(2, 2), CMat::Identity(2, 2)};
  p.constraints = sum_power_constraint(n, 4.0);
  const MuSolution dl = solve_downlink(p);
  REQUIRE(dl.max_constraint_violation <= 1e-6);

  // joint water-fill over the stacked block-diagonal channel
  CMat h_joint = CMat::Zero(4, n);
  h_joint.topRows(2) = h1;
  h_joint.bottomRows(2) = h2;
  const Solution joint = solve_single_constraint(
      h_joint, CMat::Identity(4, 4), CMat::Identity(n, n), 4.0,
      Objective::Capacity);
  REQUIRE(std::abs(dl.sum_capacity_bits - joint.diag.objective) <=
          1e-6 * (1.0 + std::abs(joint.diag.objective)));
}

TEST_CASE("downlink random instance: residuals and baseline comparison") {
  Rng rng(9);
  RVec limits(2);
  limits << 1.2, 0.8;
  for (int t = 0; t < 3; ++t) {
    MuDownlinkProblem p;
    p.H = {rng.cgaussian(2, 2, 1.0), rng.cgaussian(2, 2, 1.0)};
    p.Rn = {CMat::Identity(2, 2), CMat::Identity(2, 2)};
    p.constraints = per_antenna_constraints(limits);
    const MuSolution dl = solve_downlink(p);
    REQUIRE(dl.max_block_residual <= 1e-5);
    REQUIRE(dl.max_constraint_violation <= 1e-6);
    // fixed-diagonal baseline: split the per-antenna budget across users
    std::vector<CMat> base(2, CMat::Zero(2, 2));
    for (int k = 0; k < 2; ++k)
      for (int a = 0; a < 2; ++a) base[k](a, a) = limits(a) / 2.0;
    REQUIRE(dl.sum_capacity_bits >=
            downlink_sum_capacity_bits(p, base) - 1e-9);
  }
}

TEST_CASE("uplink bound budgets") {
  Rng rng(10);
  // R_T,k = I with per-user sum power: alpha_max = sum_k P_k
  MuUplinkProblem p;
  p.Rn = CMat::Identity(3, 3);
  for (int k = 0; k < 2; ++k) {
    MuUser u;
    u.H_hat = rng.cgaussian(3, 3, 1.0);
    u.R_T = CMat::Identity(3, 3);
    u.R_R = exp_correlation(3, 0.5);
    u.constraints = sum_power_constraint(3, 1.0 + k);
    p.users.push_back(u);
  }
  const UplinkBounds b = uplink_bounds(p);
  CHECK(b.alpha_max == Catch::Approx(3.0).epsilon(1e-9));

  // per-antenna constraints with diagonal R_T: sum of diag * limits
  MuUplinkProblem pd = p;
  CMat rt = CMat::Zero(3, 3);
  rt(0, 0) = 0.5;
  rt(1, 1) = 0.2;
  rt(2, 2) = 0.1;
  RVec limits(3);
  limits << 1.0, 0.5, 0.25;
  pd.users[0].R_T = rt;
  pd.users[0].constraints = per_antenna_constraints(limits);
  pd.users.resize(1);
  const UplinkBounds bd = uplink_bounds(pd);
  CHECK(bd.alpha_max ==
        Catch::Approx(0.5 * 1.0 + 0.2 * 0.5 + 0.1 * 0.25).epsilon(1e-9));
}

TEST_CASE("downlink bound budgets") {
  Rng rng(11);
  MuDownlinkProblem p;
  p.H = {rng.cgaussian(2, 3, 1.0), rng.cgaussian(2, 3, 1.0)};
  p.Rn = {CMat::Identity(2, 2), CMat::Identity(2, 2)};
  p.constraints = sum_power_constraint(3, 2.0);
  CMat bt = rng.cgaussian(3, 3, 1.0);
  p.R_T = hermitize(bt * bt.adjoint() + 0.1 * CMat::Identity(3, 3));
  p.R_R = {exp_correlation(2, 0.4), exp_correlation(2, 0.6)};
  const DownlinkBounds b = downlink_bounds(p);
  CHECK(b.alpha_max ==
        Catch::Approx(sorted_evd(p.R_T).eigenvalues(0) * 2.0).epsilon(1e-9));
  double beta_expect = 0.0;
  for (int k = 0; k < 2; ++k) {
    const CMat sigma =
        hermitize(p.Rn[k] + b.alpha_max * p.R_R[k]);
    beta_expect += sigma.ldlt().solve(p.R_R[k]).trace().real();
  }
  CHECK(b.beta_max == Catch::Approx(beta_expect).epsilon(1e-9));
}

TEST_CASE("iterate budgets stay below the uplink bounds") {
  Rng rng(12);
  RVec limits(3);
  limits << 1.0, 0.8, 0.6;
  MuUplinkProblem p = fig2_style_problem(rng, 2, 3, 4, limits, 0.7, 0.4, 0.5,
                                         0.15);
  const MuSolution sol = solve_uplink(p);
  const UplinkBounds b = uplink_bounds(p, &sol.Q);
  double alpha = 0.0;
  for (int k = 0; k < 2; ++k)
    alpha += (p.users[k].R_T * sol.Q[k]).trace().real();
  REQUIRE(alpha <= b.alpha_max + 1e-9);
  // beta_k at the iterate, measured against the same-Sigma cap
  for (int k = 0; k < 2; ++k) {
    const CMat err = mu_detail::uplink_error_budget(p, sol.Q);
    const CMat sigma =
        hermitize(err + mu_detail::uplink_interference(p, sol.Q, k));
    KroneckerErrorModel local{p.users[k].H_hat, p.users[k].R_R,
                              p.users[k].R_T, 1.0};
    const double beta = beta_scalar(local, sol.Q[k], sigma);
    const double cap = sigma.ldlt().solve(p.users[k].R_R).trace().real();
    REQUIRE(beta <= cap + 1e-9);
  }
}

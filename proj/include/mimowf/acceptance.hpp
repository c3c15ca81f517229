#ifndef MIMOWF_ACCEPTANCE_HPP
#define MIMOWF_ACCEPTANCE_HPP

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "mimowf/channel.hpp"
#include "mimowf/experiments.hpp"
#include "mimowf/mu_mimo.hpp"
#include "mimowf/network.hpp"
#include "mimowf/oracle.hpp"
#include "mimowf/su_perfect.hpp"
#include "mimowf/su_robust.hpp"
#include "mimowf/sweep.hpp"
#include "mimowf/waterfill.hpp"
#include "mimowf/wmmse.hpp"

namespace mimowf::acceptance {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

namespace detail {

inline CMat random_psd_pd(Rng& rng, int n, double ridge) {
  const CMat b = rng.cgaussian(n, n, 1.0);
  return hermitize(b * b.adjoint() + ridge * CMat::Identity(n, n));
}

template <typename Fn>
CriterionResult timed(int id, const std::string& name, Fn&& fn) {
  CriterionResult result;
  result.id = id;
  result.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    fn(result);
  } catch (const std::exception& e) {
    result.pass = false;
    result.detail = std::string("exception: ") + e.what();
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

}  // namespace detail

// 1. Theorem-1 certificate: 200 random stationarity systems, K in {1,2},
// dims <= 6; assembled covariances must certify with residuals <= 1e-8.
inline CriterionResult criterion_1() {
  return detail::timed(1, "water-filling certificate suite", [](CriterionResult& r) {
    Rng rng(20250801);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const int m = 1 + static_cast<int>(rng.uniform() * 6);
      const int n = 1 + static_cast<int>(rng.uniform() * 6);
      const int k = trial % 2 ? 2 : 1;
      WaterfillProblem problem{rng.cgaussian(m, n, 1.0),
                               detail::random_psd_pd(rng, m, 0.2),
                               detail::random_psd_pd(rng, n, 0.2), k};
      const CMat pi_is = psd_sqrt_pair(problem.Pi, true).inv_sqrt;
      const CMat phi_is = psd_sqrt_pair(problem.Phi, true).inv_sqrt;
      const RVec h = sorted_svd(pi_is * problem.H * phi_is).singular_values;
      if (h(0) <= 0.0) continue;
      const double mu = h(0) * h(0) * (0.02 + 0.95 * rng.uniform());
      const AssembledCovariance a = assemble_covariance(problem, mu);
      const KktResidual res = kkt_residual(problem, a.Q, mu);
      worst = std::max({worst, res.stationarity, res.complementarity});
    }
    r.pass = worst <= 1e-8;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "worst residual %.3e (tol 1e-8)", worst);
    r.detail = buf;
  });
}

// 2. Convex oracle equivalence on P1-P4: 50 instances each, dims <= 4,
// objective agreement <= 1e-6 relative.
inline CriterionResult criterion_2(unsigned threads) {
  return detail::timed(2, "convex oracle equivalence (P1-P4)", [threads](CriterionResult& r) {
    std::vector<double> gaps(200, 0.0);
    std::vector<int> statuses(200, 0);
    parallel_for_index(
        200,
        [&](std::size_t idx) {
          Rng rng(derive_seed(777001, idx));
          const int variant = static_cast<int>(idx / 50);  // 0..3 -> P1..P4
          const Objective obj =
              variant % 2 ? Objective::SumMse : Objective::Capacity;
          const int m = 2 + static_cast<int>(rng.uniform() * 3);
          const int n = 2 + static_cast<int>(rng.uniform() * 3);
          const CMat h = rng.cgaussian(m, n, 1.0);
          const CMat rn = detail::random_psd_pd(rng, m, 0.3);
          PowerConstraintSet constraints;
          if (variant < 2) {
            constraints.push_back(
                {detail::random_psd_pd(rng, n, 0.3), 1.0 + 2.0 * rng.uniform()});
          } else {
            RVec limits(n);
            for (int a = 0; a < n; ++a) limits(a) = 0.4 + 1.2 * rng.uniform();
            constraints = per_antenna_constraints(limits);
          }
          const Solution sol = solve_multi_constraint(h, rn, constraints, obj);
          ConvexCovarianceProblem cvx{{h}, rn, {constraints}, obj};
          OracleReport report;
          projected_gradient_solve(cvx, 1e-7, 6000, &report);
          gaps[idx] = std::abs(sol.diag.objective - report.objective) /
                      (1.0 + std::abs(report.objective));
          statuses[idx] = sol.diag.converged ? 0 : 1;
        },
        threads);
    double worst = 0.0;
    int unconverged = 0;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
      worst = std::max(worst, gaps[i]);
      unconverged += statuses[i];
    }
    r.pass = worst <= 1e-6;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "worst relative gap %.3e (tol 1e-6), %d unconverged solves",
                  worst, unconverged);
    r.detail = buf;
  });
}

// 3. Uplink study curve: iterative water-filling vs the convex oracle,
// SNR 0..30 dB, 100 realizations, per-point mean gap <= 1e-4 bits.
inline CriterionResult criterion_3(unsigned threads) {
  return detail::timed(3, "uplink capacity matches oracle over the SNR grid", [threads](CriterionResult& r) {
    const std::vector<double> snrs{0, 5, 10, 15, 20, 25, 30};
    const int realizations = 100;
    double worst = 0.0;
    for (double snr : snrs) {
      std::vector<double> diff(realizations, 0.0);
      parallel_for_index(
          realizations,
          [&](std::size_t i) {
            const UplinkStudy study =
                make_uplink_study(derive_seed(31001, i), snr, 0.4, 0.5, 0.0);
            const MuSolution sol = solve_uplink(study.problem);
            ConvexCovarianceProblem cvx;
            cvx.Rn = study.problem.Rn;
            cvx.objective = Objective::Capacity;
            for (const auto& u : study.problem.users) {
              cvx.H.push_back(u.H_hat);
              cvx.constraints.push_back(u.constraints);
            }
            OracleReport report;
            projected_gradient_solve(cvx, 5e-7, 20000, &report);
            diff[i] = sol.sum_capacity_bits - report.objective;
          },
          threads);
      double mean = 0.0;
      for (double d : diff) mean += d;
      mean /= realizations;
      worst = std::max(worst, std::abs(mean));
    }
    r.pass = worst <= 1e-4;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "worst per-point mean gap %.3e bits (tol 1e-4)",
                  worst);
    r.detail = buf;
  });
}

// 4. Special-case consistency: the general robust fixed point against the
// closed forms whenever a closed form applies; 50 instances per case.
inline CriterionResult criterion_4(unsigned threads) {
  return detail::timed(4, "robust special-case consistency", [threads](CriterionResult& r) {
    std::vector<double> gaps(200, 0.0);
    parallel_for_index(
        200,
        [&](std::size_t idx) {
          Rng rng(derive_seed(444001, idx));
          const int variant = static_cast<int>(idx / 50);
          // 0: P5 tx-white, 1: P5 rx-white, 2: P6 tx-white, 3: P6 rx-white
          const Objective obj = variant < 2 ? Objective::Capacity
                                            : Objective::SumMse;
          const bool tx_white = variant % 2 == 0;
          KroneckerSpec spec{tx_white ? 0.0 : 0.45, tx_white ? 0.5 : 0.0, 3, 3,
                             0.2 + 0.2 * rng.uniform(),
                             derive_seed(91, idx)};
          const GeneratedChannel g = generate_channel(spec);
          KroneckerErrorModel model{g.H_hat, g.R_R, g.R_T,
                                    0.5 + rng.uniform()};
          const double p = 1.5 + rng.uniform();
          RobustSolveOptions opts;
          opts.allow_dispatch = false;
          const Solution general = solve_robust_general(model, p, obj, opts);
          const Solution special = tx_white
                                       ? solve_robust_tx_white(model, p, obj)
                                       : solve_robust_rx_white(model, p, obj);
          gaps[idx] =
              (general.Q - special.Q).norm() / (1.0 + special.Q.norm());
        },
        threads);
    double worst_56 = 0.0;
    for (double gap : gaps) worst_56 = std::max(worst_56, gap);

    // P7 / P8 vs the Conclusion 7.1 / 8.1 closed form: the multi-constraint
    // solver must agree with the rx-white special map on sum power
    std::vector<double> gaps_78(100, 0.0);
    parallel_for_index(
        100,
        [&](std::size_t idx) {
          Rng rng(derive_seed(555001, idx));
          const Objective obj = idx % 2 ? Objective::SumMse : Objective::Capacity;
          KroneckerSpec spec{0.45, 0.0, 3, 3, 0.2 + 0.2 * rng.uniform(),
                             derive_seed(92, idx)};
          const GeneratedChannel g = generate_channel(spec);
          KroneckerErrorModel model{g.H_hat, g.R_R, g.R_T, 0.8};
          const double p = 2.0;
          const Solution multi = solve_robust_multi_constraint(
              model, sum_power_constraint(3, p), obj);
          const Solution special = solve_robust_rx_white(model, p, obj);
          gaps_78[idx] =
              (multi.Q - special.Q).norm() / (1.0 + special.Q.norm());
        },
        threads);
    double worst_78 = 0.0;
    for (double gap : gaps_78) worst_78 = std::max(worst_78, gap);

    r.pass = worst_56 <= 1e-7 && worst_78 <= 1e-7;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "P5/P6 worst gap %.3e, P7/P8 worst gap %.3e (tol 1e-7)",
                  worst_56, worst_78);
    r.detail = buf;
  });
}

// 5. Reduction lattice: multi->single (1e-9), MU->SU (1e-8),
// network->independent SU on decoupled topologies (1e-7).
inline CriterionResult criterion_5() {
  return detail::timed(5, "reduction lattice", [](CriterionResult& r) {
    Rng rng(550001);
    double worst_single = 0.0, worst_mu = 0.0, worst_net = 0.0;
    for (int t = 0; t < 20; ++t) {
      const int n = 2 + static_cast<int>(rng.uniform() * 3);
      const CMat h = rng.cgaussian(n, n, 1.0);
      const CMat rn = detail::random_psd_pd(rng, n, 0.3);
      const CMat w = detail::random_psd_pd(rng, n, 0.3);
      const double p = 1.0 + rng.uniform();
      const Objective obj = t % 2 ? Objective::SumMse : Objective::Capacity;
      const Solution a = solve_single_constraint(h, rn, w, p, obj);
      const Solution b = solve_multi_constraint(h, rn, {{w, p}}, obj);
      worst_single =
          std::max(worst_single, std::abs(a.diag.objective - b.diag.objective) /
                                     (1.0 + std::abs(a.diag.objective)));
    }
    for (int t = 0; t < 10; ++t) {
      RVec limits(3);
      limits << 1.0 + rng.uniform(), 0.8, 0.5;
      MuUplinkProblem up;
      up.Rn = detail::random_psd_pd(rng, 4, 0.3);
      MuUser u;
      u.H_hat = rng.cgaussian(4, 3, 1.0);
      u.constraints = per_antenna_constraints(limits);
      up.users = {u};
      const MuSolution mu_sol = solve_uplink(up);
      const Solution su = solve_multi_constraint(u.H_hat, up.Rn, u.constraints,
                                                 Objective::Capacity);
      worst_mu = std::max(worst_mu,
                          std::abs(mu_sol.sum_capacity_bits - su.diag.objective) /
                              (1.0 + std::abs(su.diag.objective)));

      MuDownlinkProblem dl;
      dl.H = {rng.cgaussian(3, 3, 1.0)};
      dl.Rn = {CMat::Identity(3, 3)};
      dl.constraints = per_antenna_constraints(limits);
      const MuSolution dl_sol = solve_downlink(dl);
      const Solution su_dl = solve_multi_constraint(
          dl.H[0], dl.Rn[0], dl.constraints, Objective::Capacity);
      worst_mu = std::max(
          worst_mu, std::abs(dl_sol.sum_capacity_bits - su_dl.diag.objective) /
                        (1.0 + std::abs(su_dl.diag.objective)));
    }
    for (int t = 0; t < 10; ++t) {
      const NetworkTopology net =
          make_decoupled_pairs(derive_seed(66001, t), 2, 3, 2.0, 0.8);
      const NetworkSolution sol = solve_network(net);
      double expect = 0.0;
      for (int k = 0; k < 2; ++k)
        expect += solve_single_constraint(net.links[k].H_hat, net.noise[k],
                                          CMat::Identity(3, 3), 2.0,
                                          Objective::Capacity)
                      .diag.objective;
      worst_net = std::max(worst_net, std::abs(sol.sum_capacity_bits - expect) /
                                          (1.0 + std::abs(expect)));
    }
    r.pass = worst_single <= 1e-9 && worst_mu <= 1e-8 && worst_net <= 1e-7;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "single %.2e (1e-9), MU->SU %.2e (1e-8), network %.2e (1e-7)",
                  worst_single, worst_mu, worst_net);
    r.detail = buf;
  });
}

// 6. Gradient identities: analytic forms for the capacity gradient, the
// equivalent-noise capacity gradient, and the equivalent-noise MSE gradient
// against central finite differences, 20 instances each, 1e-5 relative.
inline CriterionResult criterion_6() {
  return detail::timed(6, "gradient identity suite", [](CriterionResult& r) {
    Rng rng(660001);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const int m = 2 + static_cast<int>(rng.uniform() * 3);
      const int n = 2 + static_cast<int>(rng.uniform() * 3);
      const CMat h = rng.cgaussian(m, n, 1.0);
      const CMat q = detail::random_psd_pd(rng, n, 0.1);
      auto f = [&](const CMat& x) {
        const CMat a = CMat::Identity(m, m) + h * x * h.adjoint();
        return a.partialPivLu().matrixLU().diagonal().array().log().sum().real();
      };
      const CMat analytic = [&] {
        const CMat a = CMat::Identity(m, m) + h * q * h.adjoint();
        return CMat(
            hermitize(h.adjoint() * a.ldlt().solve(CMat::Identity(m, m)) * h));
      }();
      const CMat fd = finite_difference_gradient(f, q, 1e-5);
      worst = std::max(worst, (fd - analytic).norm() / (1.0 + analytic.norm()));
    }
    for (int variant = 0; variant < 2; ++variant) {
      for (int t = 0; t < 20; ++t) {
        const int m = 2 + static_cast<int>(rng.uniform() * 2);
        const int n = 2 + static_cast<int>(rng.uniform() * 2);
        KroneckerErrorModel model;
        model.H_hat = rng.cgaussian(m, n, 1.0);
        model.R_R = detail::random_psd_pd(rng, m, 0.2);
        model.R_T = 0.1 * detail::random_psd_pd(rng, n, 0.2);
        model.sigma_n2 = 0.6 + rng.uniform();
        const CMat q = detail::random_psd_pd(rng, n, 0.15);
        const CMat kn = equivalent_noise(q, model);
        CMat analytic;
        std::function<double(const CMat&)> f;
        if (variant == 0) {
          f = [&](const CMat& x) { return robust_capacity_bits(model, x) *
                                          std::log(2.0); };
          const CMat full =
              hermitize(kn + model.H_hat * q * model.H_hat.adjoint());
          const CMat id = CMat::Identity(m, m);
          analytic = hermitize(
              model.H_hat.adjoint() * full.ldlt().solve(id) * model.H_hat -
              (kn.ldlt().solve(id) * model.R_R).trace().real() * model.R_T +
              (full.ldlt().solve(id) * model.R_R).trace().real() * model.R_T);
        } else {
          f = [&](const CMat& x) { return robust_sum_mse(model, x); };
          analytic = hermitize(
              -robust_detail::stationarity_core(model, q, kn, Objective::SumMse) +
              gamma_scalar(model, q, kn) * model.R_T);
        }
        const CMat fd = finite_difference_gradient(f, q, 1e-5);
        worst = std::max(worst, (fd - analytic).norm() / (1.0 + analytic.norm()));
      }
    }
    r.pass = worst <= 1e-5;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "worst relative deviation %.3e (tol 1e-5)",
                  worst);
    r.detail = buf;
  });
}

// 7. Network study ordering: network >= wmmse >= fixed-diagonal at every SNR
// point, means over 100 realizations.
inline CriterionResult criterion_7(unsigned threads) {
  return detail::timed(7, "network study capacity ordering", [threads](CriterionResult& r) {
    const std::vector<double> snrs{0, 5, 10, 15, 20, 25, 30};
    const int realizations = 100;
    bool ordered = true;
    std::string detail;
    for (double snr : snrs) {
      std::vector<double> net_cap(realizations), wmmse_cap(realizations),
          fixed_cap(realizations);
      parallel_for_index(
          realizations,
          [&](std::size_t i) {
            const NetworkStudy study = make_network_study(
                derive_seed(770001, i), snr, 0.4, 0.5, 0.0);
            fixed_cap[i] = network_sum_capacity_bits(
                study.net, fixed_diagonal_covariances(study.net));
            const WmmseResult w = wmmse_solve(study.net, 120, 1e-7);
            wmmse_cap[i] = w.sum_capacity_bits;
            const NetworkSolution sol =
                solve_network(study.net, network_polish_options(w.Q));
            net_cap[i] = sol.sum_capacity_bits;
          },
          threads);
      double m_net = 0.0, m_w = 0.0, m_f = 0.0;
      for (int i = 0; i < realizations; ++i) {
        m_net += net_cap[i];
        m_w += wmmse_cap[i];
        m_f += fixed_cap[i];
      }
      m_net /= realizations;
      m_w /= realizations;
      m_f /= realizations;
      char buf[128];
      std::snprintf(buf, sizeof(buf), " [%gdB: %.3f/%.3f/%.3f]", snr, m_net,
                    m_w, m_f);
      detail += buf;
      if (!(m_net >= m_w - 1e-9 && m_w >= m_f - 1e-9)) ordered = false;
    }
    r.pass = ordered;
    r.detail = "mean capacity network/wmmse/fixed:" + detail;
  });
}

// 8. Robust-vs-non-robust margin under sampled true channels:
// paired mean difference larger than two standard errors.
inline CriterionResult criterion_8(unsigned threads) {
  return detail::timed(8, "robust beats non-robust beyond 2 standard errors", [threads](CriterionResult& r) {
    bool pass = true;
    std::string detail;
    for (double sigma_e2 : {0.05, 0.1}) {
      const int realizations = 100;
      std::vector<double> diff(realizations, 0.0);
      parallel_for_index(
          realizations,
          [&](std::size_t i) {
            const NetworkStudy study = make_network_study(
                derive_seed(880001, i), 15.0, 0.4, 0.5, sigma_e2);
            // robust: solves with the error model
            const WmmseResult w_rob = wmmse_solve(study.net, 120, 1e-7);
            const NetworkSolution robust =
                solve_network(study.net, network_polish_options(w_rob.Q));
            // non-robust: treats the estimate as exact
            NetworkTopology stripped = study.net;
            for (auto& link : stripped.links) {
              link.R_T = CMat();
              link.R_R = CMat();
            }
            const WmmseResult w_non = wmmse_solve(stripped, 120, 1e-7);
            const NetworkSolution naive =
                solve_network(stripped, network_polish_options(w_non.Q));
            diff[i] =
                network_sum_capacity_bits(study.net_true, robust.Q) -
                network_sum_capacity_bits(study.net_true, naive.Q);
          },
          threads);
      double mean = 0.0, var = 0.0;
      for (double d : diff) mean += d;
      mean /= realizations;
      for (double d : diff) var += (d - mean) * (d - mean);
      var /= (realizations - 1);
      const double stderr_ = std::sqrt(var / realizations);
      char buf[128];
      std::snprintf(buf, sizeof(buf), " [se2=%.2f: margin %.4f +- %.4f]",
                    sigma_e2, mean, stderr_);
      detail += buf;
      if (!(mean > 2.0 * stderr_)) pass = false;
    }
    r.pass = pass;
    r.detail = "paired capacity margins:" + detail;
  });
}

// 9. WMMSE objective monotone non-increasing over 50 random networks.
inline CriterionResult criterion_9() {
  return detail::timed(9, "WMMSE monotonicity", [](CriterionResult& r) {
    double worst_rise = 0.0;
    for (int t = 0; t < 50; ++t) {
      Rng rng(derive_seed(990001, t));
      const int pairs = 1 + t % 2;
      const int n = 2 + t % 2;
      NetworkTopology net;
      net.n_sources = pairs;
      net.n_destinations = pairs;
      for (int k = 0; k < pairs; ++k) {
        net.signals.push_back({k});
        net.noise.push_back((0.4 + rng.uniform()) * CMat::Identity(n, n));
        net.constraints.push_back(sum_power_constraint(n, 1.0 + rng.uniform()));
      }
      for (int s = 0; s < pairs; ++s)
        for (int d = 0; d < pairs; ++d) {
          LinkSpec link;
          link.source = s;
          link.dest = d;
          link.H_hat = rng.cgaussian(n, n, s == d ? 1.0 : 0.4);
          link.desired_signal = s == d ? s : -1;
          link.transmitted_signals = {s};
          net.links.push_back(link);
        }
      WmmseState state = wmmse_init(net);
      state = wmmse_step(net, state);
      double prev = wmmse_objective(net, state);
      for (int step = 0; step < 40; ++step) {
        state = wmmse_step(net, state);
        const double now = wmmse_objective(net, state);
        worst_rise =
            std::max(worst_rise, (now - prev) / (1.0 + std::abs(prev)));
        prev = now;
      }
    }
    r.pass = worst_rise <= 1e-12;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "worst relative rise %.3e (tol 1e-12)",
                  worst_rise);
    r.detail = buf;
  });
}

// 10. Bound validity: iterate scalars never exceed their upper bounds, for
// the single-user, uplink, and network budget terms.
inline CriterionResult criterion_10(unsigned threads) {
  return detail::timed(10, "error-budget bound validity", [threads](CriterionResult& r) {
    std::vector<double> margins(100, -1.0);  // positive margin = violation
    parallel_for_index(
        100,
        [&](std::size_t idx) {
          Rng rng(derive_seed(101001, idx));
          double margin = -1e300;
          if (idx < 40) {
            // single-user robust general fixed point
            KroneckerSpec spec{0.4, 0.5, 3, 3, 0.15 + 0.2 * rng.uniform(),
                               derive_seed(15, idx)};
            const GeneratedChannel g = generate_channel(spec);
            KroneckerErrorModel model{g.H_hat, g.R_R, g.R_T, 0.7};
            const double p = 2.0;
            RobustSolveOptions opts;
            opts.allow_dispatch = false;
            const Solution sol =
                solve_robust_general(model, p, idx % 2 ? Objective::SumMse
                                                       : Objective::Capacity,
                                     opts);
            const CMat kn = equivalent_noise(sol.Q, model);
            const double cap = kn.ldlt().solve(model.R_R).trace().real();
            margin = std::max(
                {alpha_scalar(model, sol.Q) - bound_scalars(model, p).alpha,
                 beta_scalar(model, sol.Q, kn) - cap,
                 gamma_scalar(model, sol.Q, kn) - 0.25 * cap});
          } else if (idx < 70) {
            // uplink budgets
            const UplinkStudy study = make_uplink_study(
                derive_seed(16, idx), 10.0, 0.4, 0.5, 0.1, 2, 3, 4);
            const MuSolution sol = solve_uplink(study.problem);
            const UplinkBounds bounds = uplink_bounds(study.problem, &sol.Q);
            double alpha = 0.0;
            for (std::size_t k = 0; k < 2; ++k)
              alpha += (study.problem.users[k].R_T * sol.Q[k]).trace().real();
            margin = alpha - bounds.alpha_max;
            for (std::size_t k = 0; k < 2; ++k) {
              const CMat err =
                  mu_detail::uplink_error_budget(study.problem, sol.Q);
              const CMat sigma = hermitize(
                  err + mu_detail::uplink_interference(study.problem, sol.Q, k));
              KroneckerErrorModel local{study.problem.users[k].H_hat,
                                        study.problem.users[k].R_R,
                                        study.problem.users[k].R_T, 1.0};
              const double cap =
                  sigma.ldlt().solve(study.problem.users[k].R_R).trace().real();
              margin = std::max(margin,
                                beta_scalar(local, sol.Q[k], sigma) - cap);
            }
          } else {
            // network budgets
            const NetworkStudy study = make_network_study(
                derive_seed(17, idx), 10.0, 0.4, 0.5, 0.1);
            const NetworkSolution sol =
                solve_network(study.net, network_polish_options());
            const NetworkBounds bounds = network_bounds(study.net, &sol.Q);
            for (std::size_t l = 0; l < study.net.links.size(); ++l) {
              const LinkSpec& link = study.net.links[l];
              CMat all = CMat::Zero(4, 4);
              for (int j : link.transmitted_signals) all += sol.Q[j];
              margin = std::max(margin, (link.R_T * all).trace().real() -
                                            bounds.link_trace_max[l]);
            }
          }
          margins[idx] = margin;
        },
        threads);
    double worst = -1e300;
    for (double m : margins) worst = std::max(worst, m);
    r.pass = worst <= 1e-8;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "worst bound overshoot %.3e (tol 1e-8)",
                  worst);
    r.detail = buf;
  });
}

inline std::vector<CriterionResult> run_all(unsigned threads = 0) {
  std::vector<CriterionResult> results;
  results.push_back(criterion_1());
  results.push_back(criterion_2(threads));
  results.push_back(criterion_3(threads));
  results.push_back(criterion_4(threads));
  results.push_back(criterion_5());
  results.push_back(criterion_6());
  results.push_back(criterion_7(threads));
  results.push_back(criterion_8(threads));
  results.push_back(criterion_9());
  results.push_back(criterion_10(threads));
  return results;
}

inline int report(const std::vector<CriterionResult>& results) {
  int failures = 0;
  for (const auto& res : results) {
    std::printf("CRITERION %2d [%s]: %s (%.1fs) %s\n", res.id,
                res.pass ? "PASS" : "FAIL", res.name.c_str(), res.seconds,
                res.detail.c_str());
    if (!res.pass) ++failures;
  }
  std::printf("%d/%zu criteria passed\n",
              static_cast<int>(results.size()) - failures, results.size());
  return failures == 0 ? 0 : 1;
}

}  // namespace mimowf::acceptance

#endif  // MIMOWF_ACCEPTANCE_HPP

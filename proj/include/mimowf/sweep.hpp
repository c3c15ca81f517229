#ifndef MIMOWF_SWEEP_HPP
#define MIMOWF_SWEEP_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mimowf/channel.hpp"
#include "mimowf/experiments.hpp"
#include "mimowf/mu_mimo.hpp"
#include "mimowf/network.hpp"
#include "mimowf/oracle.hpp"
#include "mimowf/su_perfect.hpp"
#include "mimowf/su_robust.hpp"
#include "mimowf/wmmse.hpp"

namespace mimowf {

// Realizations are embarrassingly parallel: per-realization seeds are fixed
// before fan-out and results land in index order, so the output does not
// depend on the thread count.
inline void parallel_for_index(std::size_t count,
                               const std::function<void(std::size_t)>& fn,
                               unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, count == 0 ? 1 : count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) break;
        fn(i);
      }
    });
  for (auto& th : pool) th.join();
}

struct SweepConfig {
  std::string problem = "p1";       // p1..p13, uplink, network, robust-network
  std::vector<std::string> solvers;  // per-problem defaults if empty
  double r_t = 0.4;
  double r_r = 0.5;
  double sigma_e2 = 0.0;
  int tx = 4;
  int rx = 4;
  std::vector<double> snr_db{0, 5, 10, 15, 20, 25, 30};
  int realizations = 100;
  std::uint64_t seed = 1;
  std::string out_path;
};

struct RealizationOutcome {
  double metric = 0.0;
  double iterations = 0.0;
  bool failed = false;
};

namespace sweep_detail {

inline RVec default_limits(int n) {
  RVec limits(n);
  for (int a = 0; a < n; ++a)
    limits(a) = std::max(1.6 - 0.4 * a, 0.2);
  return limits;
}

inline Objective objective_of(const std::string& problem) {
  if (problem == "p2" || problem == "p4" || problem == "p6" || problem == "p8")
    return Objective::SumMse;
  return Objective::Capacity;
}

// One realization of one solver curve. The channel draw depends only on
// (master seed, realization index); the SNR point scales the noise power.
inline RealizationOutcome run_one(const SweepConfig& cfg,
                                  const std::string& solver, double snr_db,
                                  std::uint64_t seed) {
  RealizationOutcome out;
  const std::string& p = cfg.problem;
  const RVec limits = default_limits(cfg.tx);
  const double p_budget = limits.sum();
  const double sigma_n2 = snr_to_sigma_n2(snr_db, p_budget);
  const Objective obj = objective_of(p);

  if (p == "p1" || p == "p2" || p == "p3" || p == "p4") {
    KroneckerSpec spec{cfg.r_t, cfg.r_r, cfg.rx, cfg.tx, 0.0, seed};
    const GeneratedChannel g = generate_channel(spec);
    const CMat rn = sigma_n2 * CMat::Identity(cfg.rx, cfg.rx);
    const PowerConstraintSet constraints =
        (p == "p1" || p == "p2")
            ? sum_power_constraint(cfg.tx, p_budget)
            : per_antenna_constraints(limits);
    if (solver == "oracle") {
      ConvexCovarianceProblem cvx{{g.H_hat}, rn, {constraints}, obj};
      OracleReport report;
      projected_gradient_solve(cvx, 1e-7, 4000, &report);
      out.metric = report.objective;
      out.iterations = report.iterations;
      out.failed = !report.converged && report.residual > 1e-4;
      return out;
    }
    const Solution sol = solve_multi_constraint(g.H_hat, rn, constraints, obj);
    out.metric = sol.diag.objective;
    out.iterations = sol.diag.iterations;
    out.failed = !sol.diag.converged;
    return out;
  }

  if (p == "p5" || p == "p6" || p == "p7" || p == "p8") {
    KroneckerSpec spec{cfg.r_t, cfg.r_r, cfg.rx, cfg.tx, cfg.sigma_e2, seed};
    const GeneratedChannel g = generate_channel(spec);
    KroneckerErrorModel model{g.H_hat, g.R_R, g.R_T, sigma_n2};
    Solution sol;
    if (p == "p5" || p == "p6") {
      RobustSolveOptions opts;
      if (solver == "general") opts.allow_dispatch = false;
      sol = solver == "general"
                ? solve_robust_general(model, p_budget, obj, opts)
                : solve_robust_sum_power(model, p_budget, obj, opts);
    } else {
      sol = solve_robust_multi_constraint(model, per_antenna_constraints(limits),
                                          obj);
    }
    out.metric = sol.diag.objective;
    out.iterations = sol.diag.iterations;
    out.failed = !sol.diag.converged;
    return out;
  }

  if (p == "p9" || p == "p10" || p == "uplink") {
    const double se = p == "p10" ? cfg.sigma_e2 : 0.0;
    const UplinkStudy study =
        make_uplink_study(seed, snr_db, cfg.r_t, cfg.r_r, se, 2, cfg.tx, cfg.rx);
    if (solver == "oracle") {
      ConvexCovarianceProblem cvx;
      cvx.Rn = study.problem.Rn;
      cvx.objective = Objective::Capacity;
      for (const auto& u : study.problem.users) {
        cvx.H.push_back(u.H_hat);
        cvx.constraints.push_back(u.constraints);
      }
      OracleReport report;
      projected_gradient_solve(cvx, 5e-7, 20000, &report);
      out.metric = report.objective;
      out.iterations = report.iterations;
      out.failed = !report.converged && report.residual > 1e-4;
      return out;
    }
    const MuSolution sol = solve_uplink(study.problem);
    out.metric = sol.sum_capacity_bits;
    out.iterations = sol.sweeps;
    out.failed = !sol.converged;
    return out;
  }

  if (p == "p11" || p == "p12" || p == "downlink") {
    const double se = p == "p12" ? cfg.sigma_e2 : 0.0;
    MuDownlinkProblem dl;
    for (int k = 0; k < 2; ++k) {
      KroneckerSpec spec{cfg.r_t, cfg.r_r, cfg.rx, cfg.tx, se,
                         derive_seed(seed, 100 + k)};
      const GeneratedChannel g = generate_channel(spec);
      dl.H.push_back(g.H_hat);
      dl.Rn.push_back(sigma_n2 * CMat::Identity(cfg.rx, cfg.rx));
      dl.R_R.push_back(g.R_R);
      if (se > 0.0 && dl.R_T.size() == 0) dl.R_T = g.R_T;
    }
    dl.constraints = per_antenna_constraints(limits);
    const MuSolution sol = solve_downlink(dl);
    out.metric = sol.sum_capacity_bits;
    out.iterations = sol.sweeps;
    out.failed = sol.max_constraint_violation > 1e-6;
    return out;
  }

  if (p == "p13" || p == "network") {
    const NetworkStudy study =
        make_network_study(seed, snr_db, cfg.r_t, cfg.r_r, cfg.sigma_e2, cfg.tx);
    if (solver == "fixed-diagonal") {
      const std::vector<CMat> q = fixed_diagonal_covariances(study.net);
      out.metric = network_sum_capacity_bits(study.net, q);
      out.iterations = 1;
      return out;
    }
    const WmmseResult w = wmmse_solve(study.net, 120, 1e-7);
    if (solver == "wmmse") {
      out.metric = w.sum_capacity_bits;
      out.iterations = w.steps;
      return out;
    }
    const NetworkSolution sol =
        solve_network(study.net, network_polish_options(w.Q));
    out.metric = sol.sum_capacity_bits;
    out.iterations = sol.sweeps;
    out.failed = sol.max_constraint_violation > 1e-6;
    return out;
  }

  if (p == "robust-network") {
    // metric: capacity achieved under the sampled true channels
    const NetworkStudy study =
        make_network_study(seed, snr_db, cfg.r_t, cfg.r_r, cfg.sigma_e2, cfg.tx);
    NetworkTopology input = study.net;
    if (solver == "non-robust") {
      for (auto& link : input.links) {
        link.R_T = CMat();
        link.R_R = CMat();
      }
    }
    const WmmseResult w = wmmse_solve(input, 120, 1e-7);
    const NetworkSolution sol =
        solve_network(input, network_polish_options(w.Q));
    out.metric = network_sum_capacity_bits(study.net_true, sol.Q);
    out.iterations = sol.sweeps;
    out.failed = sol.max_constraint_violation > 1e-6;
    return out;
  }

  throw InvalidInput("run_sweep: unknown problem id " + p);
}

inline std::vector<std::string> default_solvers(const std::string& problem) {
  if (problem == "p9" || problem == "uplink") return {"uplink", "oracle"};
  if (problem == "p13" || problem == "network")
    return {"network", "wmmse", "fixed-diagonal"};
  if (problem == "robust-network") return {"robust", "non-robust"};
  if (problem == "p10") return {"uplink"};
  if (problem == "p11" || problem == "p12" || problem == "downlink")
    return {"downlink"};
  if (problem == "p1" || problem == "p2" || problem == "p3" || problem == "p4")
    return {"waterfill", "oracle"};
  return {"robust"};
}

}  // namespace sweep_detail

struct SweepRow {
  double snr_db = 0.0;
  std::string solver;
  double metric_mean = 0.0;
  double metric_stderr = 0.0;
  double iters_mean = 0.0;
  int n_fail = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::string csv;
};

// Runs the configured sweep. Per-realization draws depend only on
// (seed, realization index), so the channel set matches across SNR points
// and the CSV is byte-identical for identical configs. Aborts when more
// than 5% of realizations fail for any row.
inline SweepResult run_sweep(const SweepConfig& cfg, unsigned threads = 0) {
  SweepResult result;
  std::vector<std::string> solvers =
      cfg.solvers.empty() ? sweep_detail::default_solvers(cfg.problem)
                          : cfg.solvers;

  std::ostringstream csv;
  csv << "snr_db,solver,metric_mean,metric_stderr,iters_mean,n_fail\n";
  for (double snr : cfg.snr_db) {
    for (const std::string& solver : solvers) {
      std::vector<RealizationOutcome> outcomes(cfg.realizations);
      parallel_for_index(
          cfg.realizations,
          [&](std::size_t i) {
            const std::uint64_t seed = derive_seed(cfg.seed, i);
            try {
              outcomes[i] = sweep_detail::run_one(cfg, solver, snr, seed);
            } catch (const std::exception&) {
              outcomes[i].failed = true;
            }
          },
          threads);

      SweepRow row;
      row.snr_db = snr;
      row.solver = solver;
      double sum = 0.0, sum2 = 0.0, iters = 0.0;
      int n_ok = 0;
      for (const auto& o : outcomes) {
        if (o.failed) {
          ++row.n_fail;
          continue;
        }
        sum += o.metric;
        sum2 += o.metric * o.metric;
        iters += o.iterations;
        ++n_ok;
      }
      if (row.n_fail * 20 > cfg.realizations)
        throw std::runtime_error("run_sweep: more than 5% of realizations "
                                 "failed for solver " + solver);
      if (n_ok > 0) {
        row.metric_mean = sum / n_ok;
        row.iters_mean = iters / n_ok;
        if (n_ok > 1) {
          const double var =
              std::max(0.0, (sum2 - sum * sum / n_ok) / (n_ok - 1));
          row.metric_stderr = std::sqrt(var / n_ok);
        }
      }
      result.rows.push_back(row);

      char line[256];
      std::snprintf(line, sizeof(line), "%.12g,%s,%.12g,%.12g,%.12g,%d\n",
                    row.snr_db, row.solver.c_str(), row.metric_mean,
                    row.metric_stderr, row.iters_mean, row.n_fail);
      csv << line;
    }
  }
  result.csv = csv.str();
  if (!cfg.out_path.empty()) {
    std::ofstream out(cfg.out_path, std::ios::binary);
    out << result.csv;
  }
  return result;
}

}  // namespace mimowf

#endif  // MIMOWF_SWEEP_HPP

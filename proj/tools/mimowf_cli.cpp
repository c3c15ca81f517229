// Command-line front end: single-instance solves, Monte-Carlo sweeps, the
// acceptance suite, and the gradient identity checks.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mimowf/acceptance.hpp"
#include "mimowf/network_io.hpp"
#include "mimowf/su_perfect.hpp"
#include "mimowf/su_robust.hpp"
#include "mimowf/sweep.hpp"
#include "mimowf/wmmse.hpp"

namespace {

using namespace mimowf;
using nlohmann::json;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file " + path);
  json j;
  in >> j;
  return j;
}

CMat matrix_field(const json& j, const std::string& key) {
  return io_detail::matrix_from_json(j.at(key));
}

PowerConstraintSet constraints_from(const json& j, int dim) {
  PowerConstraintSet set;
  if (j.contains("per_antenna")) {
    const auto limits = j["per_antenna"].get<std::vector<double>>();
    RVec v(limits.size());
    for (std::size_t i = 0; i < limits.size(); ++i) v(i) = limits[i];
    return per_antenna_constraints(v);
  }
  if (j.contains("constraints")) {
    for (const auto& c : j["constraints"])
      set.push_back({hermitize(io_detail::matrix_from_json(c.at("omega"))),
                     c.at("p").get<double>()});
    return set;
  }
  if (j.contains("W"))
    return {{hermitize(matrix_field(j, "W")), j.at("P").get<double>()}};
  if (j.contains("P")) return sum_power_constraint(dim, j["P"].get<double>());
  throw InvalidInput("config has no power constraints");
}

void print_solution(const std::string& label, const Solution& sol) {
  std::printf("solver: %s\n", label.c_str());
  std::printf("objective: %.12g\n", sol.diag.objective);
  std::printf("iterations: %d  converged: %s\n", sol.diag.iterations,
              sol.diag.converged ? "yes" : "no");
  std::printf("kkt stationarity: %.3e  complementarity: %.3e\n",
              sol.diag.kkt_stationarity, sol.diag.kkt_complementarity);
  std::printf("max constraint violation: %.3e\n",
              sol.diag.max_constraint_violation);
  std::printf("water level mu: %.12g\nmu_tilde:", sol.mu);
  for (double m : sol.mu_tilde) std::printf(" %.6g", m);
  std::printf("\nQ:\n%s", format_matrix(sol.Q).c_str());
  if (!sol.diag.note.empty()) std::printf("note: %s\n", sol.diag.note.c_str());
}

int cmd_solve(const std::string& config_path) {
  const json cfg = load_json(config_path);
  const std::string problem = cfg.value("problem", "su");
  const Objective obj =
      cfg.value("objective", std::string("capacity")) == "mse"
          ? Objective::SumMse
          : Objective::Capacity;

  if (problem == "network" || problem == "wmmse") {
    const NetworkTopology net =
        cfg.at("topology").is_string()
            ? load_topology(cfg["topology"].get<std::string>())
            : topology_from_json(cfg["topology"]);
    const auto issues = validate_topology(net);
    if (!issues.empty()) {
      for (const auto& issue : issues)
        std::printf("topology violation [%s]: %s\n", issue.rule.c_str(),
                    issue.detail.c_str());
      return 1;
    }
    if (problem == "wmmse") {
      const WmmseResult res = wmmse_solve(net, cfg.value("max_steps", 400),
                                          cfg.value("tol", 1e-9));
      std::printf("wmmse sum capacity: %.12g bits\nsteps: %d converged: %s\n",
                  res.sum_capacity_bits, res.steps,
                  res.converged ? "yes" : "no");
      for (std::size_t j = 0; j < res.Q.size(); ++j)
        std::printf("Q[%zu]:\n%s", j, format_matrix(res.Q[j]).c_str());
      return 0;
    }
    NetworkSolveOptions opts;
    if (cfg.value("bound_mode", false)) opts.bound_mode = true;
    const NetworkSolution sol = solve_network(net, opts);
    std::printf("network sum capacity: %.12g bits\n", sol.sum_capacity_bits);
    std::printf("sweeps: %d converged: %s\n", sol.sweeps,
                sol.converged ? "yes" : "no");
    std::printf("max block residual: %.3e  constraint violation: %.3e\n",
                sol.max_block_residual, sol.max_constraint_violation);
    for (std::size_t j = 0; j < sol.Q.size(); ++j)
      std::printf("Q[%zu]:\n%s", j, format_matrix(sol.Q[j]).c_str());
    if (!sol.note.empty()) std::printf("note: %s\n", sol.note.c_str());
    return 0;
  }

  const CMat h = matrix_field(cfg, "H");
  const int n = static_cast<int>(h.cols());
  const PowerConstraintSet constraints = constraints_from(cfg, n);

  if (problem == "robust" || cfg.contains("error")) {
    const json& e = cfg.at("error");
    KroneckerErrorModel model;
    model.H_hat = h;
    model.R_R = hermitize(io_detail::matrix_from_json(e.at("r_r")));
    model.R_T = hermitize(io_detail::matrix_from_json(e.at("r_t")));
    model.sigma_n2 = cfg.value("sigma_n2", 1.0);
    const bool sum_power =
        constraints.size() == 1 && is_scaled_identity(constraints[0].Omega);
    const Solution sol =
        sum_power
            ? solve_robust_sum_power(model, constraints[0].P, obj)
            : solve_robust_multi_constraint(model, constraints, obj);
    print_solution("robust", sol);
    return 0;
  }

  const CMat rn = cfg.contains("Rn")
                      ? hermitize(matrix_field(cfg, "Rn"))
                      : CMat(cfg.value("sigma_n2", 1.0) *
                             CMat::Identity(h.rows(), h.rows()));
  const Solution sol = solve_multi_constraint(h, rn, constraints, obj);
  print_solution("water-filling", sol);
  return 0;
}

int cmd_sweep(const std::string& config_path, std::optional<std::uint64_t> seed,
              std::optional<int> realizations, const std::string& out) {
  const json cfg = load_json(config_path);
  SweepConfig sweep;
  sweep.problem = cfg.value("problem", "p1");
  if (cfg.contains("solvers"))
    sweep.solvers = cfg["solvers"].get<std::vector<std::string>>();
  if (cfg.contains("channel")) {
    const json& ch = cfg["channel"];
    sweep.r_t = ch.value("r_t", sweep.r_t);
    sweep.r_r = ch.value("r_r", sweep.r_r);
    sweep.sigma_e2 = ch.value("sigma_e2", sweep.sigma_e2);
    sweep.tx = ch.value("tx", sweep.tx);
    sweep.rx = ch.value("rx", sweep.rx);
  }
  if (cfg.contains("snr_db"))
    sweep.snr_db = cfg["snr_db"].get<std::vector<double>>();
  sweep.realizations = cfg.value("realizations", sweep.realizations);
  sweep.seed = cfg.value("seed", sweep.seed);
  sweep.out_path = cfg.value("out", sweep.out_path);
  if (seed) sweep.seed = *seed;
  if (realizations) sweep.realizations = *realizations;
  if (!out.empty()) sweep.out_path = out;

  const SweepResult result = run_sweep(sweep);
  std::fputs(result.csv.c_str(), stdout);
  if (!sweep.out_path.empty())
    std::fprintf(stderr, "wrote %s\n", sweep.out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"water-filling covariance optimization toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out;
  double tol = 1e-8;

  CLI::App* solve = app.add_subcommand(
      "solve", "solve a single instance from a JSON config");
  solve->add_option("config", config_path, "config file")->required();
  solve->add_option("--tol", tol, "solver tolerance (informational)");

  CLI::App* sweep = app.add_subcommand(
      "sweep", "run a Monte-Carlo SNR sweep and emit CSV");
  sweep->add_option("config", config_path, "sweep config file")->required();
  std::uint64_t seed_value = 0;
  int realizations_value = 0;
  CLI::Option* seed_opt =
      sweep->add_option("--seed", seed_value, "master seed override");
  CLI::Option* realizations_opt = sweep->add_option(
      "--realizations", realizations_value, "realization count override");
  sweep->add_option("--out", out, "output CSV path override");

  CLI::App* verify =
      app.add_subcommand("verify", "run the acceptance criteria");
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "check the analytic matrix-derivative identities");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return cmd_solve(config_path);
    if (sweep->parsed()) {
      std::optional<std::uint64_t> seed;
      std::optional<int> realizations;
      if (!seed_opt->empty()) seed = seed_value;
      if (!realizations_opt->empty()) realizations = realizations_value;
      return cmd_sweep(config_path, seed, realizations, out);
    }
    if (verify->parsed())
      return mimowf::acceptance::report(mimowf::acceptance::run_all());
    if (gradcheck->parsed()) {
      const auto result = mimowf::acceptance::criterion_6();
      std::printf("gradient identities: %s (%s)\n",
                  result.pass ? "PASS" : "FAIL", result.detail.c_str());
      return result.pass ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

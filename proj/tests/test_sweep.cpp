#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "mimowf/network_io.hpp"
#include "mimowf/sweep.hpp"

using namespace mimowf;

TEST_CASE("sweep output is byte-identical across runs and thread counts") {
  SweepConfig cfg;
  cfg.problem = "p1";
  cfg.solvers = {"waterfill"};
  cfg.snr_db = {0.0, 10.0};
  cfg.realizations = 5;
  cfg.seed = 42;
  const SweepResult a = run_sweep(cfg, 1);
  const SweepResult b = run_sweep(cfg, 2);
  const SweepResult c = run_sweep(cfg, 2);
  CHECK(a.csv == b.csv);
  CHECK(b.csv == c.csv);
}

TEST_CASE("earlier realizations are unaffected by the realization count") {
  SweepConfig small;
  small.problem = "p1";
  small.solvers = {"waterfill"};
  small.snr_db = {5.0};
  small.realizations = 3;
  small.seed = 7;
  SweepConfig large = small;
  large.realizations = 6;
  // metric means differ, but the first three draws are the same seeds;
  // verify via the per-realization outcomes being prefix-stable
  std::vector<double> first, second;
  for (int i = 0; i < 6; ++i) {
    const std::uint64_t seed = derive_seed(7, i);
    const RealizationOutcome o =
        sweep_detail::run_one(small, "waterfill", 5.0, seed);
    if (i < 3) first.push_back(o.metric);
    second.push_back(o.metric);
  }
  for (int i = 0; i < 3; ++i) CHECK(first[i] == second[i]);
}

TEST_CASE("waterfill and oracle curves coincide on p1") {
  SweepConfig cfg;
  cfg.problem = "p1";
  cfg.snr_db = {10.0};
  cfg.realizations = 4;
  cfg.seed = 3;
  const SweepResult result = run_sweep(cfg);
  REQUIRE(result.rows.size() == 2);
  CHECK(std::abs(result.rows[0].metric_mean - result.rows[1].metric_mean) <=
        2e-5);
  CHECK(result.rows[0].n_fail == 0);
}

TEST_CASE("csv has the documented schema") {
  SweepConfig cfg;
  cfg.problem = "p2";
  cfg.solvers = {"waterfill"};
  cfg.snr_db = {0.0};
  cfg.realizations = 2;
  const SweepResult result = run_sweep(cfg);
  CHECK(result.csv.rfind("snr_db,solver,metric_mean,metric_stderr,iters_mean,"
                         "n_fail\n", 0) == 0);
  CHECK(result.rows[0].solver == "waterfill");
}

TEST_CASE("sweep writes the output file") {
  SweepConfig cfg;
  cfg.problem = "p1";
  cfg.solvers = {"waterfill"};
  cfg.snr_db = {0.0};
  cfg.realizations = 2;
  cfg.out_path = "/tmp/mimowf_sweep_test.csv";
  const SweepResult result = run_sweep(cfg);
  std::ifstream in(cfg.out_path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  CHECK(buffer.str() == result.csv);
  std::filesystem::remove(cfg.out_path);
}

TEST_CASE("unknown problem ids are rejected") {
  SweepConfig cfg;
  cfg.problem = "p99";
  cfg.snr_db = {0.0};
  cfg.realizations = 2;
  CHECK_THROWS(run_sweep(cfg));
}

TEST_CASE("topology json round trip") {
  nlohmann::json j;
  j["sources"] = {{{"antennas", 2}}};
  j["destinations"] = {{{"antennas", 2}, {"noise_sigma2", 0.5}}};
  j["signals"] = {{{"source", 0}}};
  j["constraints"] = {{{"source", 0}, {"per_antenna", {1.0, 0.5}}}};
  nlohmann::json link;
  link["source"] = 0;
  link["destination"] = 0;
  link["desired_signal"] = 0;
  link["channel"] = "2 2\n1 0\n0 1\n";
  j["links"] = {link};

  const NetworkTopology net = topology_from_json(j);
  CHECK(validate_topology(net).empty());
  CHECK(net.links[0].H_hat(0, 0) == Complex(1, 0));
  CHECK(net.constraints[0].size() == 2);
  CHECK(net.noise[0](0, 0).real() == Catch::Approx(0.5));

  // kronecker generator spec
  nlohmann::json k;
  k["source"] = 0;
  k["destination"] = 0;
  k["desired_signal"] = 0;
  k["channel"] = {
      {"kronecker",
       {{"r_t", 0.4}, {"r_r", 0.5}, {"sigma_e2", 0.1}, {"seed", 9}}}};
  j["links"] = {k};
  const NetworkTopology gen = topology_from_json(j);
  CHECK(validate_topology(gen).empty());
  CHECK(gen.links[0].R_T.norm() > 0.0);
}

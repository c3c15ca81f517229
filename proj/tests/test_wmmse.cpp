#include <catch2/catch_amalgamated.hpp>

#include "mimowf/experiments.hpp"
#include "mimowf/network.hpp"
#include "mimowf/su_perfect.hpp"
#include "mimowf/wmmse.hpp"

using namespace mimowf;

namespace {

NetworkTopology random_net(Rng& rng, int n_pairs, int n, double p,
                           double sigma_n2, bool cross_links) {
  NetworkTopology net;
  net.n_sources = n_pairs;
  net.n_destinations = n_pairs;
  for (int k = 0; k < n_pairs; ++k) {
    net.signals.push_back({k});
    net.noise.push_back(sigma_n2 * CMat::Identity(n, n));
    net.constraints.push_back(sum_power_constraint(n, p));
  }
  for (int s = 0; s < n_pairs; ++s)
    for (int d = 0; d < n_pairs; ++d) {
      if (s != d && !cross_links) continue;
      LinkSpec link;
      link.source = s;
      link.dest = d;
      link.H_hat = rng.cgaussian(n, n, s == d ? 1.0 : 0.3);
      link.desired_signal = s == d ? s : -1;
      link.transmitted_signals = {s};
      net.links.push_back(link);
    }
  return net;
}

}  // namespace

TEST_CASE("cold start recovers nonzero precoders") {
  Rng rng(1);
  NetworkTopology net = random_net(rng, 1, 3, 2.0, 1.0, false);
  WmmseState state = wmmse_init(net);
  state.F[0].setZero();
  // G-step from F=0 gives G=0, W-step gives W=I, and the F-step must fall
  // back to a nonzero feasible precoder rather than stay stuck at zero
  const WmmseState next = wmmse_step(net, state);
  CHECK(next.G[0].norm() == 0.0);
  CHECK((next.W[0] - CMat::Identity(3, 3)).norm() < 1e-9);
  CHECK(next.F[0].norm() > 0.0);
}

TEST_CASE("objective is monotone non-increasing across steps") {
  Rng rng(2);
  for (int trial = 0; trial < 12; ++trial) {
    const int pairs = 1 + trial % 3;
    NetworkTopology net =
        random_net(rng, pairs, 2 + trial % 2, 1.5, 0.8, trial % 2 == 0);
    WmmseState state = wmmse_init(net);
    state = wmmse_step(net, state);  // consistent (G, W) before measuring
    double prev = wmmse_objective(net, state);
    for (int step = 0; step < 50; ++step) {
      state = wmmse_step(net, state);
      const double now = wmmse_objective(net, state);
      REQUIRE(now <= prev + 1e-12 * (1.0 + std::abs(prev)));
      prev = now;
    }
  }
}

TEST_CASE("power feasibility after every step") {
  Rng rng(3);
  NetworkStudy study = make_network_study(17, 12.0, 0.4, 0.5, 0.0);
  WmmseState state = wmmse_init(study.net);
  for (int step = 0; step < 20; ++step) {
    state = wmmse_step(study.net, state);
    for (int s = 0; s < study.net.n_sources; ++s) {
      CMat total = CMat::Zero(4, 4);
      for (int j : signals_of_source(study.net, s))
        total += state.F[j] * state.F[j].adjoint();
      for (const auto& c : study.net.constraints[s])
        REQUIRE(herm_inner(c.Omega, total) <= c.P * (1.0 + 1e-8));
    }
  }
}

TEST_CASE("single-user reduction reaches the water-filling capacity") {
  Rng rng(4);
  for (int t = 0; t < 5; ++t) {
    NetworkTopology net = random_net(rng, 1, 3, 2.0, 1.0, false);
    const WmmseResult res = wmmse_solve(net, 600, 1e-11);
    const Solution p1 = solve_single_constraint(
        net.links[0].H_hat, net.noise[0], CMat::Identity(3, 3), 2.0,
        Objective::Capacity);
    REQUIRE(std::abs(res.sum_capacity_bits - p1.diag.objective) <= 1e-4);
  }
}

TEST_CASE("decoupled pairs approach the independent optima") {
  const NetworkTopology net = make_decoupled_pairs(23, 2, 3, 2.0, 0.7);
  const WmmseResult res = wmmse_solve(net, 800, 1e-11);
  const NetworkSolution sol = solve_network(net);
  REQUIRE(std::abs(res.sum_capacity_bits - sol.sum_capacity_bits) <= 1e-3);
}

TEST_CASE("study network: wmmse sits between fixed-diagonal and the solver") {
  for (int t = 0; t < 3; ++t) {
    const NetworkStudy study = make_network_study(900 + t, 10.0, 0.4, 0.5, 0.0);
    const WmmseResult w = wmmse_solve(study.net, 200, 1e-8);
    const double fixed = network_sum_capacity_bits(
        study.net, fixed_diagonal_covariances(study.net));
    const NetworkSolution polished =
        solve_network(study.net, network_polish_options(w.Q));
    REQUIRE(w.sum_capacity_bits >= fixed - 1e-9);
    REQUIRE(polished.sum_capacity_bits >= w.sum_capacity_bits - 1e-9);
  }
}

TEST_CASE("wmmse rejects invalid topologies") {
  Rng rng(5);
  NetworkTopology net = random_net(rng, 1, 2, 1.0, 1.0, false);
  net.links[0].dest = 7;
  CHECK_THROWS_AS(wmmse_solve(net, 10, 1e-6), InvalidInput);
}

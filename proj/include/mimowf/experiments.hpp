#ifndef MIMOWF_EXPERIMENTS_HPP
#define MIMOWF_EXPERIMENTS_HPP

#include <cstdint>
#include <vector>

#include "mimowf/channel.hpp"
#include "mimowf/complex_matrix.hpp"
#include "mimowf/mu_mimo.hpp"
#include "mimowf/network.hpp"

namespace mimowf {

// Study setups used across the test suites and the sweep runner. SNR is
// defined as P/sigma_n^2 with P the per-communication power budget (the sum
// of the per-antenna limits); sigma_n^2 is scaled, the limits stay fixed.

inline double snr_to_sigma_n2(double snr_db, double p_budget) {
  return p_budget / std::pow(10.0, snr_db / 10.0);
}

struct UplinkStudy {
  MuUplinkProblem problem;
  std::vector<CMat> H_true;  // per user
};

// Two users with 4 antennas each, an 8-antenna receiver, per-antenna limits
// 1.6/1.2/0.8/0.4, exponential Kronecker correlation.
inline UplinkStudy make_uplink_study(std::uint64_t seed, double snr_db,
                                     double r_t = 0.4, double r_r = 0.5,
                                     double sigma_e2 = 0.0, int n_users = 2,
                                     int n_tx = 4, int n_rx = 8) {
  RVec limits(n_tx);
  for (int a = 0; a < n_tx; ++a)
    limits(a) = 1.6 - 0.4 * a;
  const double p_budget = limits.sum();

  UplinkStudy study;
  study.problem.Rn =
      snr_to_sigma_n2(snr_db, p_budget) * CMat::Identity(n_rx, n_rx);
  for (int k = 0; k < n_users; ++k) {
    KroneckerSpec spec{r_t, r_r, n_rx, n_tx, sigma_e2, derive_seed(seed, k)};
    const GeneratedChannel g = generate_channel(spec);
    MuUser u;
    u.H_hat = g.H_hat;
    u.R_T = g.R_T;
    u.R_R = g.R_R;
    u.constraints = per_antenna_constraints(limits);
    study.problem.users.push_back(u);
    study.H_true.push_back(g.H_true);
  }
  return study;
}

struct NetworkStudy {
  NetworkTopology net;       // estimated channels + error model
  NetworkTopology net_true;  // true channels, no error terms
};

// Two sources and two destinations, four links, everyone with n antennas.
// Each source sends one signal to each destination; per-antenna limits are
// doubled at the sources (two simultaneous communications).
inline NetworkStudy make_network_study(std::uint64_t seed, double snr_db,
                                       double r_t = 0.4, double r_r = 0.5,
                                       double sigma_e2 = 0.0, int n = 4) {
  RVec limits(n);
  for (int a = 0; a < n; ++a) limits(a) = 2.0 * (1.6 - 0.4 * a);
  const double p_budget = limits.sum() / 2.0;  // per communication
  const double sigma_n2 = snr_to_sigma_n2(snr_db, p_budget);

  NetworkStudy study;
  NetworkTopology& net = study.net;
  net.n_sources = 2;
  net.n_destinations = 2;
  net.signals = {{0}, {0}, {1}, {1}};  // source 0 owns 0,1; source 1 owns 2,3
  net.noise.assign(2, sigma_n2 * CMat::Identity(n, n));
  net.constraints.assign(2, per_antenna_constraints(limits));

  study.net_true = net;
  int link_index = 0;
  for (int s = 0; s < 2; ++s) {
    for (int d = 0; d < 2; ++d) {
      KroneckerSpec spec{r_t, r_r, n, n, sigma_e2,
                         derive_seed(seed, 16 + link_index)};
      const GeneratedChannel g = generate_channel(spec);
      LinkSpec link;
      link.source = s;
      link.dest = d;
      link.H_hat = g.H_hat;
      link.R_T = g.R_T;
      link.R_R = g.R_R;
      link.desired_signal = 2 * s + d;
      link.transmitted_signals = {2 * s, 2 * s + 1};
      net.links.push_back(link);

      LinkSpec true_link = link;
      true_link.H_hat = g.H_true;
      true_link.R_T = CMat();
      true_link.R_R = CMat();
      study.net_true.links.push_back(true_link);
      ++link_index;
    }
  }
  return study;
}

// A topology of fully decoupled source-destination pairs (cross channels
// absent), useful as a reduction oracle.
inline NetworkTopology make_decoupled_pairs(std::uint64_t seed, int n_pairs,
                                            int n, double p, double sigma_n2) {
  NetworkTopology net;
  net.n_sources = n_pairs;
  net.n_destinations = n_pairs;
  for (int k = 0; k < n_pairs; ++k) {
    net.signals.push_back({k});
    net.noise.push_back(sigma_n2 * CMat::Identity(n, n));
    net.constraints.push_back(sum_power_constraint(n, p));
  }
  Rng rng(seed);
  for (int k = 0; k < n_pairs; ++k) {
    LinkSpec link;
    link.source = k;
    link.dest = k;
    link.H_hat = rng.cgaussian(n, n, 1.0);
    link.desired_signal = k;
    link.transmitted_signals = {k};
    net.links.push_back(link);
  }
  return net;
}

}  // namespace mimowf

#endif  // MIMOWF_EXPERIMENTS_HPP

#ifndef MIMOWF_WMMSE_HPP
#define MIMOWF_WMMSE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mimowf/complex_matrix.hpp"
#include "mimowf/decomp.hpp"
#include "mimowf/network.hpp"

namespace mimowf {

// Alternating weighted-MMSE benchmark over the same link-graph model as the
// network solver. Per destination r the transceiver is y_r = H_r F_r s_r +
// v_r with H_r the stacked desired-link channels, F_r the block-diagonal
// stack of the per-signal precoders, and v_r covering noise, interference
// and the CSI error budget. Unit signal covariance; square precoder blocks.
struct WmmseState {
  std::vector<CMat> F;  // per signal
  std::vector<CMat> G;  // per destination, stacked-signal rows
  std::vector<CMat> W;  // per destination, stacked-signal square
  std::vector<std::vector<double>> nu;  // per-source power multipliers, warm
};

namespace wmmse_detail {

struct DestView {
  std::vector<int> links;        // desired links into r, ascending
  std::vector<int> signals;     // v(link) per entry
  std::vector<int> offset;      // block offsets in the stacked signal vector
  int stacked_dim = 0;
  int rx_dim = 0;
};

inline DestView dest_view(const NetworkTopology& net, int r) {
  DestView view;
  view.links = desired_links_into(net, r);
  view.rx_dim = static_cast<int>(net.noise[r].rows());
  for (int l : view.links) {
    const LinkSpec& link = net.links[l];
    view.signals.push_back(link.desired_signal);
    view.offset.push_back(view.stacked_dim);
    view.stacked_dim += static_cast<int>(link.H_hat.cols());
  }
  return view;
}

inline CMat stacked_effective(const NetworkTopology& net, const DestView& view,
                              const std::vector<CMat>& f) {
  CMat hf = CMat::Zero(view.rx_dim, view.stacked_dim);
  for (std::size_t a = 0; a < view.links.size(); ++a) {
    const LinkSpec& link = net.links[view.links[a]];
    hf.middleCols(view.offset[a], link.H_hat.cols()) =
        link.H_hat * f[view.signals[a]];
  }
  return hf;
}

inline std::vector<CMat> covariances_of(const std::vector<CMat>& f) {
  std::vector<CMat> q(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) q[j] = hermitize(f[j] * f[j].adjoint());
  return q;
}

// MSE matrix E_r = (G H F - I)(G H F - I)^H + G Sigma_r G^H
inline CMat mse_matrix(const NetworkTopology& net, const DestView& view,
                       const WmmseState& state, int r) {
  const CMat hf = stacked_effective(net, view, state.F);
  const CMat sigma = interference_covariance(net, covariances_of(state.F), r);
  const CMat t = state.G[r] * hf -
                 CMat::Identity(view.stacked_dim, view.stacked_dim);
  return hermitize(t * t.adjoint() + state.G[r] * sigma * state.G[r].adjoint());
}

}  // namespace wmmse_detail

// sum_r Tr(W_r E_r) - log|W_r|
inline double wmmse_objective(const NetworkTopology& net,
                              const WmmseState& state) {
  double total = 0.0;
  for (int r = 0; r < net.n_destinations; ++r) {
    const wmmse_detail::DestView view = wmmse_detail::dest_view(net, r);
    if (view.links.empty()) continue;
    const CMat e = wmmse_detail::mse_matrix(net, view, state, r);
    total += (state.W[r] * e).trace().real();
    total -= state.W[r]
                 .partialPivLu()
                 .matrixLU()
                 .diagonal()
                 .array()
                 .log()
                 .sum()
                 .real();
  }
  return total;
}

// Feasible nonzero start: per source, identical scaled-identity precoders
// saturating the tightest constraint.
inline WmmseState wmmse_init(const NetworkTopology& net) {
  WmmseState state;
  state.F.resize(net.signals.size());
  for (int s = 0; s < net.n_sources; ++s) {
    const std::vector<int> owned = signals_of_source(net, s);
    if (owned.empty()) continue;
    const Eigen::Index n = net.constraints[s][0].Omega.rows();
    double c2 = std::numeric_limits<double>::infinity();
    for (const auto& c : net.constraints[s])
      c2 = std::min(c2, c.P / (static_cast<double>(owned.size()) *
                               c.Omega.trace().real()));
    for (int j : owned)
      state.F[j] = std::sqrt(std::max(c2, 0.0)) * CMat::Identity(n, n);
  }
  state.G.resize(net.n_destinations);
  state.W.resize(net.n_destinations);
  for (int r = 0; r < net.n_destinations; ++r) {
    const wmmse_detail::DestView view = wmmse_detail::dest_view(net, r);
    state.G[r] = CMat::Zero(view.stacked_dim, view.rx_dim);
    state.W[r] = CMat::Identity(view.stacked_dim, view.stacked_dim);
  }
  state.nu.resize(net.n_sources);
  for (int s = 0; s < net.n_sources; ++s)
    state.nu[s].assign(net.constraints[s].size(), 0.0);
  return state;
}

struct SingularMse : std::runtime_error {
  explicit SingularMse(const std::string& what) : std::runtime_error(what) {}
};

// One alternating pass: MMSE receivers, inverse-MSE weights, then the
// multiplier-form precoder update under the per-source power constraints.
inline WmmseState wmmse_step(const NetworkTopology& net, const WmmseState& in) {
  WmmseState state = in;
  std::vector<wmmse_detail::DestView> views(net.n_destinations);
  for (int r = 0; r < net.n_destinations; ++r)
    views[r] = wmmse_detail::dest_view(net, r);

  // (1) G-step: linear MMSE equalizers for the current precoders
  {
    const std::vector<CMat> q = wmmse_detail::covariances_of(state.F);
    for (int r = 0; r < net.n_destinations; ++r) {
      if (views[r].links.empty()) continue;
      const CMat hf = wmmse_detail::stacked_effective(net, views[r], state.F);
      const CMat sigma = interference_covariance(net, q, r);
      const CMat rx_cov = hermitize(hf * hf.adjoint() + sigma);
      state.G[r] = hf.adjoint() * rx_cov.ldlt().solve(
                                      CMat::Identity(views[r].rx_dim,
                                                     views[r].rx_dim));
    }
  }

  // (2) W-step: inverse MSE matrices, regularized against singularity
  for (int r = 0; r < net.n_destinations; ++r) {
    if (views[r].links.empty()) continue;
    CMat e = wmmse_detail::mse_matrix(net, views[r], state, r);
    const double reg = 1e-12 * e.trace().real() / static_cast<double>(e.rows());
    e += std::max(reg, 1e-300) * CMat::Identity(e.rows(), e.cols());
    const SortedEvd evd = sorted_evd(e);
    if (evd.eigenvalues(evd.eigenvalues.size() - 1) <= 0.0)
      throw SingularMse("wmmse_step: MSE matrix not invertible");
    state.W[r] = hermitize(evd.U * evd.eigenvalues.cwiseInverse().asDiagonal() *
                           evd.U.adjoint());
  }

  // (3) F-step: quadratic program per source, multipliers by cyclic bisection
  for (int s = 0; s < net.n_sources; ++s) {
    const std::vector<int> owned = signals_of_source(net, s);
    if (owned.empty()) continue;
    const PowerConstraintSet& cs = net.constraints[s];
    const Eigen::Index n = cs[0].Omega.rows();

    // quadratic and linear terms per signal
    std::vector<CMat> a_term(owned.size(), CMat::Zero(n, n));
    std::vector<CMat> b_term(owned.size(), CMat::Zero(n, n));
    for (std::size_t idx = 0; idx < owned.size(); ++idx) {
      const int j = owned[idx];
      for (int r = 0; r < net.n_destinations; ++r) {
        if (views[r].links.empty()) continue;
        // the link carrying source s into r
        int link_id = -1;
        for (int l : links_into(net, r))
          if (net.links[l].source == s) link_id = l;
        if (link_id < 0) continue;
        const LinkSpec& link = net.links[link_id];
        const CMat gw = state.G[r].adjoint() * state.W[r];
        a_term[idx] +=
            link.H_hat.adjoint() * gw * state.G[r] * link.H_hat;
        if (net_detail::link_has_error(link))
          a_term[idx] += (state.W[r] * state.G[r] * link.R_R *
                          state.G[r].adjoint())
                             .trace()
                             .real() *
                         link.R_T;
        // linear term only at the destination that decodes j
        for (std::size_t a = 0; a < views[r].links.size(); ++a) {
          if (views[r].signals[a] != j) continue;
          b_term[idx] =
              link.H_hat.adjoint() * gw.middleCols(views[r].offset[a], n);
        }
      }
      a_term[idx] = hermitize(a_term[idx]);
    }

    double b_norm = 0.0;
    for (const auto& b : b_term) b_norm += b.norm();
    if (b_norm <= 1e-300) {
      // degenerate receivers (cold start): fall back to the feasible
      // nonzero initialization for this source
      const WmmseState fresh = wmmse_init(net);
      for (int j : owned) state.F[j] = fresh.F[j];
      continue;
    }

    auto precoders_at = [&](const std::vector<double>& nu) {
      CMat shift = CMat::Zero(n, n);
      for (std::size_t m = 0; m < cs.size(); ++m) shift += nu[m] * cs[m].Omega;
      std::vector<CMat> f(owned.size());
      for (std::size_t idx = 0; idx < owned.size(); ++idx) {
        const CMat lhs = hermitize(a_term[idx] + shift) +
                         1e-13 * CMat::Identity(n, n);
        f[idx] = lhs.ldlt().solve(b_term[idx]);
      }
      return f;
    };
    auto power_of = [&](const std::vector<CMat>& f, std::size_t m) {
      double p = 0.0;
      for (const auto& fj : f) p += herm_inner(cs[m].Omega, fj * fj.adjoint());
      return p;
    };

    std::vector<double>& nu = state.nu[s];  // warm-started across steps
    std::vector<CMat> f = precoders_at(nu);
    for (int pass = 0; pass < 80; ++pass) {
      bool dirty = false;
      for (std::size_t m = 0; m < cs.size(); ++m) {
        const double p = power_of(f, m);
        if (p <= cs[m].P * (1.0 + 1e-12) &&
            (nu[m] == 0.0 || p >= cs[m].P * (1.0 - 1e-12)))
          continue;  // slack with zero multiplier, or tight
        dirty = true;
        std::vector<double> probe = nu;
        probe[m] = 0.0;
        if (power_of(precoders_at(probe), m) <= cs[m].P) {
          nu[m] = 0.0;  // constraint inactive
          f = precoders_at(nu);
          continue;
        }
        // power is decreasing in nu_m: bracket around the warm value, then
        // bisect to the tight point
        double lo = 0.0, hi = std::max(nu[m], 1e-6);
        if (nu[m] > 0.0 && p > cs[m].P) lo = nu[m];
        for (int guard = 0; guard < 200; ++guard) {
          probe[m] = hi;
          if (power_of(precoders_at(probe), m) <= cs[m].P) break;
          hi *= 4.0;
        }
        for (int it = 0; it < 100; ++it) {
          const double mid = 0.5 * (lo + hi);
          probe[m] = mid;
          if (power_of(precoders_at(probe), m) > cs[m].P)
            lo = mid;
          else
            hi = mid;
          if (hi - lo <= 1e-13 * (1.0 + hi)) break;
        }
        nu[m] = hi;
        f = precoders_at(nu);
      }
      if (!dirty) break;
    }
    // final safety: shrink into the feasible set if the multiplier cycle
    // left a hair of overshoot
    double shrink = 1.0;
    for (std::size_t m = 0; m < cs.size(); ++m) {
      const double p = power_of(f, m);
      if (p > cs[m].P) shrink = std::min(shrink, std::sqrt(cs[m].P / p));
    }
    for (std::size_t idx = 0; idx < owned.size(); ++idx)
      state.F[owned[idx]] = shrink * f[idx];
  }

  return state;
}

struct WmmseResult {
  std::vector<CMat> Q;
  double sum_capacity_bits = 0.0;
  int steps = 0;
  bool converged = false;
  std::vector<double> objective_trace;
};

inline WmmseResult wmmse_solve(const NetworkTopology& net, int max_steps = 400,
                               double tol = 1e-9) {
  const std::vector<ValidationIssue> issues = validate_topology(net);
  if (!issues.empty())
    throw InvalidInput("wmmse_solve: invalid topology: " + issues[0].rule);

  WmmseState state = wmmse_init(net);
  // one receiver/weight pass so the objective starts from a consistent state
  WmmseResult out;
  double prev = std::numeric_limits<double>::infinity();
  int step = 0;
  for (; step < max_steps; ++step) {
    state = wmmse_step(net, state);
    const double obj = wmmse_objective(net, state);
    out.objective_trace.push_back(obj);
    if (std::abs(prev - obj) <= tol * (1.0 + std::abs(obj))) {
      prev = obj;
      ++step;
      out.converged = true;
      break;
    }
    prev = obj;
  }
  out.steps = step;
  out.Q = wmmse_detail::covariances_of(state.F);
  out.sum_capacity_bits = network_sum_capacity_bits(net, out.Q);
  return out;
}

}  // namespace mimowf

#endif  // MIMOWF_WMMSE_HPP

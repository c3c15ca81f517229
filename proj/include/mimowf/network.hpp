#ifndef MIMOWF_NETWORK_HPP
#define MIMOWF_NETWORK_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "mimowf/complex_matrix.hpp"
#include "mimowf/decomp.hpp"
#include "mimowf/oracle.hpp"
#include "mimowf/su_perfect.hpp"
#include "mimowf/waterfill.hpp"

namespace mimowf {

// One wireless link. Every source-destination pair has a link; a link with
// desired_signal < 0 carries interference only (its signals are decoded
// elsewhere).
struct LinkSpec {
  int source = 0;
  int dest = 0;
  CMat H_hat;  // estimated channel, dest antennas x source antennas
  CMat R_T;    // transmit-side error factor (scaled); empty or zero => perfect
  CMat R_R;    // receive-side error correlation
  int desired_signal = -1;
  std::vector<int> transmitted_signals;  // everything this link's source emits
};

struct SignalSpec {
  int source = 0;
};

struct NetworkTopology {
  int n_sources = 0;
  int n_destinations = 0;
  std::vector<SignalSpec> signals;
  std::vector<LinkSpec> links;
  std::vector<CMat> noise;                       // per destination
  std::vector<PowerConstraintSet> constraints;   // per source
};

// --- derived index sets -------------------------------------------------------

inline std::vector<int> signals_of_source(const NetworkTopology& net, int s) {
  std::vector<int> out;
  for (std::size_t j = 0; j < net.signals.size(); ++j)
    if (net.signals[j].source == s) out.push_back(static_cast<int>(j));
  return out;
}

// links into destination r that carry a desired signal
inline std::vector<int> desired_links_into(const NetworkTopology& net, int r) {
  std::vector<int> out;
  for (std::size_t l = 0; l < net.links.size(); ++l)
    if (net.links[l].dest == r && net.links[l].desired_signal >= 0)
      out.push_back(static_cast<int>(l));
  return out;
}

// links into destination r carrying no desired signal (interference only)
inline std::vector<int> interference_links_into(const NetworkTopology& net,
                                                int r) {
  std::vector<int> out;
  for (std::size_t l = 0; l < net.links.size(); ++l)
    if (net.links[l].dest == r && net.links[l].desired_signal < 0)
      out.push_back(static_cast<int>(l));
  return out;
}

inline std::vector<int> links_into(const NetworkTopology& net, int r) {
  std::vector<int> out;
  for (std::size_t l = 0; l < net.links.size(); ++l)
    if (net.links[l].dest == r) out.push_back(static_cast<int>(l));
  return out;
}

// links on which a given signal rides: every link leaving its source
inline std::vector<int> links_carrying(const NetworkTopology& net, int signal) {
  std::vector<int> out;
  const int s = net.signals[signal].source;
  for (std::size_t l = 0; l < net.links.size(); ++l)
    if (net.links[l].source == s) out.push_back(static_cast<int>(l));
  return out;
}

// --- validation ----------------------------------------------------------------

struct ValidationIssue {
  std::string rule;
  std::string detail;
};

inline std::vector<ValidationIssue> validate_topology(const NetworkTopology& net) {
  std::vector<ValidationIssue> issues;
  auto add = [&](const std::string& rule, const std::string& detail) {
    issues.push_back({rule, detail});
  };

  if (net.n_sources <= 0 || net.n_destinations <= 0)
    add("node-counts", "need at least one source and one destination");
  if (static_cast<int>(net.noise.size()) != net.n_destinations)
    add("noise-per-destination", "one noise covariance per destination required");
  if (static_cast<int>(net.constraints.size()) != net.n_sources)
    add("constraints-per-source", "one constraint set per source required");

  for (std::size_t j = 0; j < net.signals.size(); ++j)
    if (net.signals[j].source < 0 || net.signals[j].source >= net.n_sources)
      add("signal-source-range",
          "signal " + std::to_string(j) + " references an undeclared source");

  std::vector<int> desired_on(net.signals.size(), -1);
  for (std::size_t l = 0; l < net.links.size(); ++l) {
    const LinkSpec& link = net.links[l];
    const std::string tag = "link " + std::to_string(l);
    if (link.source < 0 || link.source >= net.n_sources)
      add("link-source-range", tag + " references an undeclared source");
    if (link.dest < 0 || link.dest >= net.n_destinations)
      add("link-destination-range", tag + " references an undeclared destination");
    if (link.desired_signal >= static_cast<int>(net.signals.size()))
      add("desired-signal-range", tag + " references an undeclared signal");

    if (link.dest >= 0 && link.dest < net.n_destinations &&
        static_cast<std::size_t>(link.dest) < net.noise.size() &&
        link.H_hat.rows() != net.noise[link.dest].rows())
      add("channel-rows", tag + " channel rows do not match destination antennas");
    if (link.source >= 0 &&
        static_cast<std::size_t>(link.source) < net.constraints.size() &&
        !net.constraints[link.source].empty() &&
        link.H_hat.cols() != net.constraints[link.source][0].Omega.rows())
      add("channel-cols", tag + " channel columns do not match source antennas");
    if (link.R_R.size() && link.R_R.rows() != link.H_hat.rows())
      add("error-dims", tag + " receive correlation does not match channel rows");
    if (link.R_T.size() && link.R_T.rows() != link.H_hat.cols())
      add("error-dims", tag + " transmit factor does not match channel columns");

    // psi_l must equal xi_{S(l)}: a link carries everything its source emits
    if (link.source >= 0 && link.source < net.n_sources) {
      const std::vector<int> expected = signals_of_source(net, link.source);
      std::set<int> got(link.transmitted_signals.begin(),
                        link.transmitted_signals.end());
      std::set<int> want(expected.begin(), expected.end());
      if (got != want)
        add("transmitted-set",
            tag + " transmitted set differs from its source's signal set");
    }

    if (link.desired_signal >= 0 &&
        link.desired_signal < static_cast<int>(net.signals.size())) {
      if (net.signals[link.desired_signal].source != link.source)
        add("desired-signal-source",
            tag + " desires a signal its source does not emit");
      if (desired_on[link.desired_signal] >= 0)
        add("desired-once", "signal " + std::to_string(link.desired_signal) +
                                " is desired on more than one link");
      desired_on[link.desired_signal] = static_cast<int>(l);
      // a signal cannot be both desired and interference on the same link:
      // desired_signal must be in the transmitted set exactly once
      const auto count = std::count(link.transmitted_signals.begin(),
                                    link.transmitted_signals.end(),
                                    link.desired_signal);
      if (count != 1)
        add("desired-in-transmitted",
            tag + " desired signal must appear exactly once in its own link");
    }
  }
  return issues;
}

// --- interference-plus-noise covariance ----------------------------------------

// Sigma_r = R_n_r + sum over links i into r of the leakage of their
// non-desired signals, plus the error budgets Tr(sum_{j in psi_i} Q_j R_T,i)
// R_R,i. Interference-only links contribute all their signals.
inline CMat interference_covariance(const NetworkTopology& net,
                                    const std::vector<CMat>& q, int r) {
  CMat sigma = net.noise[r];
  for (int l : links_into(net, r)) {
    const LinkSpec& link = net.links[l];
    CMat interfering = CMat::Zero(link.H_hat.cols(), link.H_hat.cols());
    CMat all = CMat::Zero(link.H_hat.cols(), link.H_hat.cols());
    for (int j : link.transmitted_signals) {
      all += q[j];
      if (j != link.desired_signal) interfering += q[j];
    }
    sigma += link.H_hat * interfering * link.H_hat.adjoint();
    if (link.R_T.size() && link.R_R.size() && link.R_T.norm() > 0.0)
      sigma += (link.R_T * all).trace().real() * link.R_R;
  }
  return hermitize(sigma);
}

inline double network_sum_capacity_bits(const NetworkTopology& net,
                                        const std::vector<CMat>& q) {
  double total = 0.0;
  for (int r = 0; r < net.n_destinations; ++r) {
    const std::vector<int> desired = desired_links_into(net, r);
    if (desired.empty()) continue;
    const CMat sigma = interference_covariance(net, q, r);
    CMat sig = CMat::Zero(sigma.rows(), sigma.cols());
    for (int l : desired) {
      const LinkSpec& link = net.links[l];
      sig += link.H_hat * q[link.desired_signal] * link.H_hat.adjoint();
    }
    const CMat a =
        CMat::Identity(sigma.rows(), sigma.cols()) + sigma.ldlt().solve(sig);
    total += a.partialPivLu().matrixLU().diagonal().array().log().sum().real();
  }
  return total / std::log(2.0);
}

// fixed-diagonal baseline: per signal, a diagonal covariance so the source's
// constraints are saturated by the equal split across its signals
inline std::vector<CMat> fixed_diagonal_covariances(const NetworkTopology& net) {
  std::vector<CMat> q(net.signals.size());
  for (int s = 0; s < net.n_sources; ++s) {
    const std::vector<int> owned = signals_of_source(net, s);
    if (owned.empty()) continue;
    const PowerConstraintSet& cs = net.constraints[s];
    const Eigen::Index n = cs.empty() ? 0 : cs[0].Omega.rows();
    RVec diag = RVec::Ones(n);
    // per-antenna sets carry the limits onto the diagonal; otherwise a
    // uniform diagonal scaled to the tightest constraint
    bool per_antenna = cs.size() == static_cast<std::size_t>(n);
    if (per_antenna) {
      RVec limits = RVec::Zero(n);
      for (const auto& c : cs) {
        int axis = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d = std::abs(c.Omega(i, i));
          if (d > 0.5) {
            if (axis >= 0 || std::abs(d - 1.0) > 1e-12) axis = -2;
            if (axis == -1) axis = static_cast<int>(i);
          }
        }
        if (axis < 0 || c.Omega.norm() * c.Omega.norm() -
                                std::norm(c.Omega(axis, axis)) >
                            1e-20) {
          per_antenna = false;
          break;
        }
        limits(axis) = c.P;
      }
      if (per_antenna) diag = limits;
    }
    if (!per_antenna) {
      double scale = std::numeric_limits<double>::infinity();
      for (const auto& c : cs)
        scale = std::min(scale, c.P / c.Omega.trace().real());
      diag *= scale;
    }
    const double split = static_cast<double>(owned.size());
    for (int j : owned)
      q[j] = (diag / split).matrix().asDiagonal().toDenseMatrix().cast<Complex>();
  }
  return q;
}

// --- solver --------------------------------------------------------------------

struct NetworkSolveOptions {
  int max_sweeps = 200;
  int max_outer = 25;
  double objective_tol = 1e-8;
  double movement_tol = 1e-9;
  double damping = 1.0;       // per-source blend toward the fresh assembly
  int best_window = 60;       // sweeps without a best-objective improvement
  bool bound_mode = false;    // scalars frozen at their non-iterative bounds
  bool newton_polish = true;  // active-set refinement of the multipliers
  std::vector<CMat> init;     // warm-start covariances; empty means zeros
};

// Budget-limited profile for Monte-Carlo studies: capacity-grade accuracy,
// no multiplier certification.
inline NetworkSolveOptions network_polish_options(std::vector<CMat> init = {}) {
  NetworkSolveOptions opts;
  opts.max_sweeps = 90;
  opts.max_outer = 4;
  opts.objective_tol = 1e-7;
  opts.movement_tol = 1e-7;
  opts.best_window = 30;
  opts.newton_polish = false;
  opts.init = std::move(init);
  return opts;
}

struct NetworkSolution {
  std::vector<CMat> Q;                          // per signal
  std::vector<std::vector<double>> mu_tilde;    // per source, normalized
  std::vector<double> source_level;             // per source multiplier scale
  double sum_capacity_bits = 0.0;
  int sweeps = 0;
  bool converged = false;
  double max_block_residual = 0.0;
  double max_constraint_violation = 0.0;
  std::string note;
};

namespace net_detail {

struct SweepScalars {
  // per link i: lagged error budget Tr(sum_{j in psi_i} Q_j R_T,i)
  std::vector<double> error_trace;
  // per (l-link's view of link i): beta_{l,i} depends only on i
  std::vector<double> beta;
};

inline bool link_has_error(const LinkSpec& link) {
  return link.R_T.size() && link.R_R.size() && link.R_T.norm() > 0.0 &&
         link.R_R.norm() > 0.0;
}

// Sigma_r with the error budget frozen to the given per-link traces.
inline CMat sigma_with_frozen_error(const NetworkTopology& net,
                                    const std::vector<CMat>& q, int r,
                                    const std::vector<double>& error_trace) {
  CMat sigma = net.noise[r];
  for (int l : links_into(net, r)) {
    const LinkSpec& link = net.links[l];
    CMat interfering = CMat::Zero(link.H_hat.cols(), link.H_hat.cols());
    for (int j : link.transmitted_signals)
      if (j != link.desired_signal) interfering += q[j];
    sigma += link.H_hat * interfering * link.H_hat.adjoint();
    if (link_has_error(link)) sigma += error_trace[l] * link.R_R;
  }
  return hermitize(sigma);
}

inline SweepScalars refresh_scalars(const NetworkTopology& net,
                                    const std::vector<CMat>& q) {
  SweepScalars out;
  out.error_trace.assign(net.links.size(), 0.0);
  out.beta.assign(net.links.size(), 0.0);
  for (std::size_t l = 0; l < net.links.size(); ++l) {
    const LinkSpec& link = net.links[l];
    if (!link_has_error(link)) continue;
    CMat all = CMat::Zero(link.H_hat.cols(), link.H_hat.cols());
    for (int j : link.transmitted_signals) all += q[j];
    out.error_trace[l] = (link.R_T * all).trace().real();
  }
  for (std::size_t i = 0; i < net.links.size(); ++i) {
    const LinkSpec& link = net.links[i];
    if (!link_has_error(link)) continue;
    const int m = link.dest;
    const CMat sigma_m = sigma_with_frozen_error(net, q, m, out.error_trace);
    CMat desired = CMat::Zero(sigma_m.rows(), sigma_m.cols());
    for (int dl : desired_links_into(net, m)) {
      const LinkSpec& d = net.links[dl];
      desired += d.H_hat * q[d.desired_signal] * d.H_hat.adjoint();
    }
    const CMat id = CMat::Identity(sigma_m.rows(), sigma_m.cols());
    const CMat inv_a = sigma_m.ldlt().solve(id);
    const CMat inv_b = hermitize(sigma_m + desired).ldlt().solve(id);
    out.beta[i] = ((inv_a - inv_b) * link.R_R).trace().real();
  }
  return out;
}

// cross-link leakage and error-budget weight for link l's update
inline CMat link_extra_weight(const NetworkTopology& net,
                              const std::vector<CMat>& q, int l,
                              const SweepScalars& scalars) {
  const LinkSpec& link = net.links[l];
  const Eigen::Index n = link.H_hat.cols();
  CMat extra = CMat::Zero(n, n);
  for (int i : links_carrying(net, link.desired_signal)) {
    const LinkSpec& other = net.links[i];
    const int m = other.dest;
    if (link_has_error(other)) extra += scalars.beta[i] * other.R_T;
    if (i == l) continue;
    const CMat sigma_m = sigma_with_frozen_error(net, q, m, scalars.error_trace);
    CMat desired = CMat::Zero(sigma_m.rows(), sigma_m.cols());
    for (int dl : desired_links_into(net, m)) {
      const LinkSpec& d = net.links[dl];
      desired += d.H_hat * q[d.desired_signal] * d.H_hat.adjoint();
    }
    const CMat id = CMat::Identity(sigma_m.rows(), sigma_m.cols());
    const CMat inv_a = sigma_m.ldlt().solve(id);
    const CMat inv_b = hermitize(sigma_m + desired).ldlt().solve(id);
    extra += other.H_hat.adjoint() * (inv_a - inv_b) * other.H_hat;
  }
  return hermitize(extra);
}

inline CMat link_pi(const NetworkTopology& net, const std::vector<CMat>& q,
                    int l, const SweepScalars& scalars) {
  const LinkSpec& link = net.links[l];
  const int r = link.dest;
  CMat pi = sigma_with_frozen_error(net, q, r, scalars.error_trace);
  for (int i : desired_links_into(net, r)) {
    if (i == l) continue;
    const LinkSpec& d = net.links[i];
    pi += d.H_hat * q[d.desired_signal] * d.H_hat.adjoint();
  }
  return hermitize(pi);
}

}  // namespace net_detail

// Block-coordinate solver for the network capacity problem. Each sweep
// rebuilds, per source, the whitening matrices and weight terms of its
// desired-signal links, then assembles all of the source's covariances at a
// single multiplier scale chosen so the worst source constraint is exactly
// tight. Per-source normalized multipliers are tuned by a subgradient loop
// with an active-set Newton polish. Error-budget scalars are refreshed once
// per sweep from the previous covariances; bound_mode substitutes their
// non-iterative upper bounds instead and runs a single pass.
inline NetworkSolution solve_network(const NetworkTopology& net,
                                     const NetworkSolveOptions& opts = {}) {
  const std::vector<ValidationIssue> issues = validate_topology(net);
  if (!issues.empty())
    throw InvalidInput("solve_network: invalid topology: " + issues[0].rule +
                       " (" + issues[0].detail + ")");

  const std::size_t n_signals = net.signals.size();
  std::vector<CMat> q(n_signals);
  for (std::size_t j = 0; j < n_signals; ++j) {
    const Eigen::Index n = net.constraints[net.signals[j].source][0].Omega.rows();
    q[j] = CMat::Zero(n, n);
  }
  if (!opts.init.empty()) {
    if (opts.init.size() != n_signals)
      throw InvalidInput("solve_network: warm start size mismatch");
    q = opts.init;
  }

  std::vector<std::vector<double>> mu_tilde(net.n_sources);
  std::vector<double> level(net.n_sources, 1.0);
  for (int s = 0; s < net.n_sources; ++s) {
    mu_tilde[s].assign(net.constraints[s].size(), 1.0);
    detail::normalize_mu_tilde(net.constraints[s], mu_tilde[s]);
  }

  int sweeps_used = 0;
  bool monotone = true;

  // bound mode freezes the error scalars at their non-iterative upper bounds
  net_detail::SweepScalars frozen;
  if (opts.bound_mode) {
    frozen.error_trace.assign(net.links.size(), 0.0);
    frozen.beta.assign(net.links.size(), 0.0);
    for (std::size_t l = 0; l < net.links.size(); ++l) {
      const LinkSpec& link = net.links[l];
      if (!net_detail::link_has_error(link)) continue;
      frozen.error_trace[l] =
          psd_trace_max(link.R_T, net.constraints[link.source]);
    }
    for (std::size_t i = 0; i < net.links.size(); ++i) {
      const LinkSpec& link = net.links[i];
      if (!net_detail::link_has_error(link)) continue;
      const CMat sigma = net_detail::sigma_with_frozen_error(
          net, q, link.dest, frozen.error_trace);
      frozen.beta[i] = sigma.ldlt().solve(link.R_R).trace().real();
    }
  }

  auto source_traces = [&](const std::vector<CMat>& state, int s) {
    CMat total;
    for (int j : signals_of_source(net, s)) {
      if (total.size() == 0)
        total = state[j];
      else
        total += state[j];
    }
    return detail::constraint_traces(net.constraints[s], total);
  };

  auto sweep_once = [&](std::vector<CMat>& state) {
    net_detail::SweepScalars scalars =
        opts.bound_mode ? frozen : net_detail::refresh_scalars(net, state);
    for (int s = 0; s < net.n_sources; ++s) {
      // the source's desired-signal links, ascending link index
      std::vector<int> own_links;
      for (std::size_t l = 0; l < net.links.size(); ++l)
        if (net.links[l].source == s && net.links[l].desired_signal >= 0)
          own_links.push_back(static_cast<int>(l));
      if (own_links.empty()) continue;

      // Simultaneous diagonalization: with Phi(c) = c W + E and
      // W^{-1/2} E W^{-1/2} = U D U^H, Phi(c)^{-1/2} = W^{-1/2} U (cI+D)^{-1/2}
      // U^H up to a unitary that the SVD absorbs. One decomposition per link
      // per sweep serves every bisection evaluation.
      const CMat weight = detail::mix_weights(net.constraints[s], mu_tilde[s]);
      const CMat w_is = psd_sqrt_pair(weight, true).inv_sqrt;
      std::vector<CMat> a_pre(own_links.size());  // Pi^{-1/2} H W^{-1/2} U
      std::vector<CMat> m_pre(own_links.size());  // W^{-1/2} U
      std::vector<RVec> d_pre(own_links.size());
      for (std::size_t a = 0; a < own_links.size(); ++a) {
        const CMat pi = net_detail::link_pi(net, state, own_links[a], scalars);
        const CMat whitened =
            psd_sqrt_pair(pi, true).inv_sqrt * net.links[own_links[a]].H_hat;
        const CMat extra = net_detail::link_extra_weight(net, state,
                                                         own_links[a], scalars);
        const SortedEvd evd = sorted_evd(w_is * extra * w_is);
        d_pre[a] = evd.eigenvalues.cwiseMax(0.0);
        m_pre[a] = w_is * evd.U;
        a_pre[a] = whitened * m_pre[a];
      }

      auto assemble_source = [&](double c, std::vector<CMat>& into) {
        for (std::size_t a = 0; a < own_links.size(); ++a) {
          const LinkSpec& link = net.links[own_links[a]];
          const Eigen::Index n = m_pre[a].cols();
          RVec scale(n);
          for (Eigen::Index i = 0; i < n; ++i)
            scale(i) = 1.0 / std::sqrt(c + d_pre[a](i));
          const SortedSvd svd = sorted_svd(a_pre[a] * scale.asDiagonal());
          const int rank = effective_rank(svd.singular_values);
          if (rank == 0) {
            into[link.desired_signal] = CMat::Zero(n, n);
            continue;
          }
          const RVec a2 = mode_powers(svd.singular_values, 1.0, 1).head(rank);
          const CMat basis =
              m_pre[a] * scale.asDiagonal() * svd.V.leftCols(rank);
          into[link.desired_signal] =
              hermitize(basis * a2.asDiagonal() * basis.adjoint());
        }
      };
      auto worst_violation = [&](const std::vector<CMat>& qs) {
        const std::vector<double> traces = source_traces(qs, s);
        double v = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < traces.size(); ++i)
          v = std::max(v, (traces[i] - net.constraints[s][i].P) /
                              net.constraints[s][i].P);
        return v;
      };

      // warm bracket around the previous level; it barely moves between
      // sweeps once the iteration settles
      std::vector<CMat> trial = state;
      double lo = level[s] * 0.75, hi = level[s] * 1.25;
      assemble_source(lo, trial);
      for (int guard = 0; guard < 200 && worst_violation(trial) < 0.0; ++guard) {
        const double lo_next = lo * 0.25;
        if (lo_next < 1e-13) break;
        try {
          std::vector<CMat> probe = state;
          assemble_source(lo_next, probe);
          lo = lo_next;
          trial = std::move(probe);
        } catch (const SingularWeight&) {
          break;
        }
      }
      if (worst_violation(trial) < 0.0) {
        state = trial;
        level[s] = lo;
        continue;  // source budget is slack
      }
      std::vector<CMat> at_hi = state;
      assemble_source(hi, at_hi);
      for (int guard = 0; guard < 200 && worst_violation(at_hi) > 0.0; ++guard) {
        hi *= 4.0;
        assemble_source(hi, at_hi);
      }
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        std::vector<CMat> at_mid = state;
        assemble_source(mid, at_mid);
        if (worst_violation(at_mid) > 0.0) {
          lo = mid;
        } else {
          hi = mid;
          at_hi = std::move(at_mid);
        }
        if ((hi - lo) <= 1e-12 * hi) break;
      }
      // damped toward the fresh assembly; both points are feasible, so the
      // blend stays feasible. Damping quiets best-response oscillation on
      // strongly coupled instances.
      const double theta = opts.damping;
      for (int j : signals_of_source(net, s))
        state[j] = hermitize((1.0 - theta) * state[j] + theta * at_hi[j]);
      level[s] = hi;
    }
  };

  // best-objective iterate across the whole solve; the alternation carries
  // no ascent guarantee, so the best feasible point seen is what we keep
  std::vector<CMat> best_q = q;
  double best_obj = network_sum_capacity_bits(net, q);
  auto consider_best = [&](const std::vector<CMat>& state, double obj) {
    if (obj > best_obj) {
      best_obj = obj;
      best_q = state;
      return true;
    }
    return false;
  };

  auto run_sweeps = [&](std::vector<CMat>& state, int budget) {
    double prev = network_sum_capacity_bits(net, state);
    int stall = 0;
    int since_best = 0;
    for (int t = 0; t < budget; ++t) {
      const std::vector<CMat> before = state;
      sweep_once(state);
      ++sweeps_used;
      double movement = 0.0;
      for (std::size_t j = 0; j < n_signals; ++j)
        movement = std::max(movement, (state[j] - before[j]).norm() /
                                          (1.0 + state[j].norm()));
      const double now = network_sum_capacity_bits(net, state);
      if (now < prev - 1e-9 * (1.0 + std::abs(prev))) monotone = false;
      since_best = consider_best(state, now) ? 0 : since_best + 1;
      if (since_best >= opts.best_window) break;  // oscillating, cut it off
      const bool stalled = std::abs(now - prev) <=
                               opts.objective_tol * (1.0 + std::abs(now)) &&
                           movement <= opts.movement_tol;
      prev = now;
      stall = stalled ? stall + 1 : 0;
      if (stall >= 3) break;
    }
    return prev;
  };

  {
    run_sweeps(q, opts.max_sweeps);
    for (int outer = 0; outer < opts.max_outer; ++outer) {
      double comp = 0.0;
      for (int s = 0; s < net.n_sources; ++s) {
        const std::vector<double> traces = source_traces(q, s);
        for (std::size_t i = 0; i < traces.size(); ++i)
          if (mu_tilde[s][i] > 1e-6)
            comp = std::max(comp, std::abs(net.constraints[s][i].P - traces[i]) /
                                      net.constraints[s][i].P);
      }
      if (comp <= 1e-7) break;

      for (int s = 0; s < net.n_sources; ++s) {
        const std::vector<double> traces = source_traces(q, s);
        const std::size_t n_con = net.constraints[s].size();
        if (n_con <= 1) continue;
        std::vector<double> next = mu_tilde[s];
        const double step =
            0.25 / std::sqrt(static_cast<double>(outer + 1)) /
            (1.0 + *std::max_element(traces.begin(), traces.end()));
        for (std::size_t i = 0; i < n_con; ++i)
          next[i] = std::max(
              next[i] + step * (traces[i] - net.constraints[s][i].P), 1e-7);
        detail::normalize_mu_tilde(net.constraints[s], next);

        if (outer >= 2 && opts.newton_polish) {
          std::vector<std::size_t> active;
          for (std::size_t i = 0; i < n_con; ++i)
            if (mu_tilde[s][i] > 1e-8 ||
                traces[i] > net.constraints[s][i].P * (1.0 - 1e-9))
              active.push_back(i);
          if (!active.empty()) {
            Eigen::VectorXd f(active.size());
            for (std::size_t a = 0; a < active.size(); ++a)
              f(a) = traces[active[a]] - net.constraints[s][active[a]].P;
            Eigen::MatrixXd jac(active.size(), active.size());
            const double fd = 1e-6;
            const std::vector<double> mu_save = mu_tilde[s];
            bool ok = true;
            for (std::size_t b = 0; b < active.size() && ok; ++b) {
              mu_tilde[s] = mu_save;
              mu_tilde[s][active[b]] += fd;
              std::vector<CMat> probe = q;
              try {
                run_sweeps(probe, 10);
                const std::vector<double> tr_p = source_traces(probe, s);
                for (std::size_t a = 0; a < active.size(); ++a)
                  jac(a, b) = (tr_p[active[a]] - traces[active[a]]) / fd;
              } catch (const std::exception&) {
                ok = false;
              }
            }
            mu_tilde[s] = mu_save;
            if (ok) {
              const Eigen::VectorXd delta = jac.fullPivLu().solve(-f);
              if (delta.allFinite()) {
                std::vector<double> trial = mu_save;
                for (std::size_t a = 0; a < active.size(); ++a)
                  trial[active[a]] =
                      std::max(trial[active[a]] + delta(a), 1e-7);
                detail::normalize_mu_tilde(net.constraints[s], trial);
                std::vector<CMat> cand = q;
                mu_tilde[s] = trial;
                try {
                  run_sweeps(cand, 40);
                  const std::vector<double> tr_c = source_traces(cand, s);
                  double comp_c = 0.0;
                  for (std::size_t i = 0; i < n_con; ++i)
                    if (trial[i] > 1e-6)
                      comp_c = std::max(
                          comp_c, std::abs(net.constraints[s][i].P - tr_c[i]) /
                                      net.constraints[s][i].P);
                  double comp_old = 0.0;
                  for (std::size_t i = 0; i < n_con; ++i)
                    if (mu_save[i] > 1e-6)
                      comp_old = std::max(
                          comp_old, std::abs(net.constraints[s][i].P - traces[i]) /
                                        net.constraints[s][i].P);
                  if (comp_c <= comp_old) {
                    q = cand;
                    continue;
                  }
                } catch (const std::exception&) {
                }
                mu_tilde[s] = mu_save;
              }
            }
          }
        }
        mu_tilde[s] = next;
      }
      run_sweeps(q, 60);
    }
  }

  NetworkSolution out;
  const double final_obj = network_sum_capacity_bits(net, q);
  if (best_obj > final_obj + 1e-9 * (1.0 + std::abs(final_obj))) {
    q = best_q;
    out.note = "returned best-objective iterate (alternation regressed)";
  }
  out.Q = q;
  out.mu_tilde = mu_tilde;
  out.source_level = level;
  out.sum_capacity_bits = network_sum_capacity_bits(net, q);
  out.sweeps = sweeps_used;

  // block residuals with the per-source multipliers; in bound mode the
  // residual is measured against the true (refreshed) scalars, so it reports
  // the approximation gap honestly
  const net_detail::SweepScalars scalars = net_detail::refresh_scalars(net, q);
  double residual = 0.0;
  for (std::size_t l = 0; l < net.links.size(); ++l) {
    const LinkSpec& link = net.links[l];
    if (link.desired_signal < 0) continue;
    const CMat weight =
        detail::mix_weights(net.constraints[link.source], mu_tilde[link.source]);
    const CMat phi = hermitize(level[link.source] * weight +
                               net_detail::link_extra_weight(net, q, static_cast<int>(l), scalars));
    WaterfillProblem block{link.H_hat,
                           net_detail::link_pi(net, q, static_cast<int>(l), scalars),
                           phi, 1};
    const KktResidual res = kkt_residual(block, q[link.desired_signal], 1.0);
    residual = std::max({residual, res.stationarity, res.complementarity});
  }
  out.max_block_residual = residual;
  double violation = 0.0;
  for (int s = 0; s < net.n_sources; ++s) {
    const std::vector<double> traces = source_traces(q, s);
    violation = std::max(
        violation, detail::max_relative_violation(net.constraints[s], traces));
  }
  out.max_constraint_violation = violation;
  out.converged = !opts.bound_mode && residual <= 1e-5 && violation <= 1e-6;
  if (!monotone)
    out.note += out.note.empty() ? "objective was not monotone across sweeps"
                                 : "; objective was not monotone across sweeps";
  return out;
}

// --- scalar budget bounds ------------------------------------------------------

struct NetworkBounds {
  std::vector<double> alpha_max;               // per destination
  std::vector<double> link_trace_max;          // per link: bound on its error trace
  std::vector<std::vector<double>> beta_max;   // [l][i] over links carrying v(l)
};

inline NetworkBounds network_bounds(const NetworkTopology& net,
                                    const std::vector<CMat>* q = nullptr) {
  NetworkBounds out;
  out.link_trace_max.assign(net.links.size(), 0.0);
  for (std::size_t l = 0; l < net.links.size(); ++l) {
    const LinkSpec& link = net.links[l];
    if (!net_detail::link_has_error(link)) continue;
    out.link_trace_max[l] = psd_trace_max(link.R_T, net.constraints[link.source]);
  }
  out.alpha_max.assign(net.n_destinations, 0.0);
  for (int r = 0; r < net.n_destinations; ++r)
    for (int l : links_into(net, r)) out.alpha_max[r] += out.link_trace_max[l];

  std::vector<CMat> zeros;
  if (!q) {
    zeros.resize(net.signals.size());
    for (std::size_t j = 0; j < net.signals.size(); ++j) {
      const Eigen::Index n =
          net.constraints[net.signals[j].source][0].Omega.rows();
      zeros[j] = CMat::Zero(n, n);
    }
  }
  const std::vector<CMat>& state = q ? *q : zeros;

  out.beta_max.resize(net.links.size());
  for (std::size_t l = 0; l < net.links.size(); ++l) {
    const LinkSpec& link = net.links[l];
    if (link.desired_signal < 0) continue;
    for (int i : links_carrying(net, link.desired_signal)) {
      const LinkSpec& other = net.links[i];
      double value = 0.0;
      if (net_detail::link_has_error(other)) {
        const CMat sigma = net_detail::sigma_with_frozen_error(
            net, state, other.dest, out.link_trace_max);
        value = sigma.ldlt().solve(other.R_R).trace().real();
      }
      out.beta_max[l].push_back(value);
    }
  }
  return out;
}

}  // namespace mimowf

#endif  // MIMOWF_NETWORK_HPP

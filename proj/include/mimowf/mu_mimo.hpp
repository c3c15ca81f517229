#ifndef MIMOWF_MU_MIMO_HPP
#define MIMOWF_MU_MIMO_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mimowf/complex_matrix.hpp"
#include "mimowf/decomp.hpp"
#include "mimowf/oracle.hpp"
#include "mimowf/su_perfect.hpp"
#include "mimowf/su_robust.hpp"
#include "mimowf/waterfill.hpp"

namespace mimowf {

// --- uplink -------------------------------------------------------------------

struct MuUser {
  CMat H_hat;  // user -> BS channel (estimate under CSI error)
  CMat R_T;    // per-user transmit error factor; empty or zero => perfect CSI
  CMat R_R;    // BS-side receive error correlation for this user
  PowerConstraintSet constraints;
};

struct MuUplinkProblem {
  std::vector<MuUser> users;
  CMat Rn;  // BS noise covariance (white for the imperfect-CSI model)
};

struct MuSolution {
  std::vector<CMat> Q;
  std::vector<double> mu;                       // per-user water levels
  std::vector<std::vector<double>> mu_tilde;    // per-user normalized multipliers
  double sum_capacity_bits = 0.0;
  int sweeps = 0;
  bool converged = false;
  double max_block_residual = 0.0;
  double max_constraint_violation = 0.0;
  std::string note;
};

namespace mu_detail {

inline bool user_has_error(const MuUser& u) {
  return u.R_T.size() != 0 && u.R_R.size() != 0 && u.R_T.norm() > 0.0 &&
         u.R_R.norm() > 0.0;
}

// sigma_n^2 I + sum_k Tr(Q_k R_T,k) R_R,k  (the uplink equivalent noise)
inline CMat uplink_error_budget(const MuUplinkProblem& problem,
                                const std::vector<CMat>& q) {
  CMat acc = problem.Rn;
  for (std::size_t k = 0; k < problem.users.size(); ++k) {
    const MuUser& u = problem.users[k];
    if (user_has_error(u))
      acc += (u.R_T * q[k]).trace().real() * u.R_R;
  }
  return hermitize(acc);
}

inline CMat uplink_interference(const MuUplinkProblem& problem,
                                const std::vector<CMat>& q, std::size_t skip) {
  CMat acc = CMat::Zero(problem.Rn.rows(), problem.Rn.cols());
  for (std::size_t j = 0; j < problem.users.size(); ++j) {
    if (j == skip) continue;
    acc += problem.users[j].H_hat * q[j] * problem.users[j].H_hat.adjoint();
  }
  return acc;
}

}  // namespace mu_detail

inline double uplink_sum_capacity_bits(const MuUplinkProblem& problem,
                                       const std::vector<CMat>& q) {
  const CMat noise = mu_detail::uplink_error_budget(problem, q);
  CMat sig = CMat::Zero(noise.rows(), noise.cols());
  for (std::size_t k = 0; k < problem.users.size(); ++k)
    sig += problem.users[k].H_hat * q[k] * problem.users[k].H_hat.adjoint();
  const CMat a =
      CMat::Identity(noise.rows(), noise.cols()) + noise.ldlt().solve(sig);
  return a.partialPivLu().matrixLU().diagonal().array().log().sum().real() /
         std::log(2.0);
}

struct MuSolveOptions {
  int max_sweeps = 1000;
  double objective_tol = 1e-9;
  MultiConstraintOptions multiplier;
};

// Iterative water-filling over users, ascending index, one full per-user
// multiplier solve per sweep. Error-budget scalars are refreshed once per
// sweep from the previous sweep's covariances.
inline MuSolution solve_uplink(const MuUplinkProblem& problem,
                               const MuSolveOptions& opts = {}) {
  const std::size_t n_users = problem.users.size();
  if (n_users == 0) throw InvalidInput("solve_uplink: no users");

  MuSolution out;
  out.Q.resize(n_users);
  out.mu.assign(n_users, 1.0);
  out.mu_tilde.resize(n_users);
  std::vector<Solution> last(n_users);
  for (std::size_t k = 0; k < n_users; ++k) {
    const Eigen::Index n = problem.users[k].H_hat.cols();
    out.Q[k] = CMat::Zero(n, n);
  }

  double obj = uplink_sum_capacity_bits(problem, out.Q);
  int sweep = 0;
  for (; sweep < opts.max_sweeps; ++sweep) {
    // lazy per-sweep refresh of the error scalars
    const CMat error_noise = mu_detail::uplink_error_budget(problem, out.Q);
    std::vector<double> beta(n_users, 0.0);
    for (std::size_t k = 0; k < n_users; ++k) {
      const MuUser& u = problem.users[k];
      if (!mu_detail::user_has_error(u)) continue;
      const CMat sigma_k =
          hermitize(error_noise + mu_detail::uplink_interference(problem, out.Q, k));
      KroneckerErrorModel local{u.H_hat, u.R_R, u.R_T, 1.0};
      beta[k] = beta_scalar(local, out.Q[k], sigma_k);
    }

    double movement = 0.0;
    for (std::size_t k = 0; k < n_users; ++k) {
      const MuUser& u = problem.users[k];
      const CMat pi =
          hermitize(error_noise + mu_detail::uplink_interference(problem, out.Q, k));
      const CMat extra = mu_detail::user_has_error(u)
                             ? CMat(hermitize(beta[k] * u.R_T))
                             : CMat();
      const Solution sol = solve_weighted_multi_constraint(
          u.H_hat, pi, u.constraints, Objective::Capacity, extra,
          opts.multiplier);
      movement = std::max(movement,
                          (sol.Q - out.Q[k]).norm() / (1.0 + sol.Q.norm()));
      out.Q[k] = sol.Q;
      out.mu[k] = sol.mu;
      out.mu_tilde[k] = sol.mu_tilde;
      last[k] = sol;
    }

    const double obj_next = uplink_sum_capacity_bits(problem, out.Q);
    // objective stall alone is too loose for covariance-level agreement;
    // require the sweep to have stopped moving as well
    const bool stalled = std::abs(obj_next - obj) <=
                             opts.objective_tol * (1.0 + std::abs(obj_next)) &&
                         movement <= 1e-10;
    obj = obj_next;
    if (stalled) {
      ++sweep;
      break;
    }
  }

  out.sum_capacity_bits = obj;
  out.sweeps = sweep;
  out.max_block_residual = 0.0;
  out.max_constraint_violation = 0.0;
  for (std::size_t k = 0; k < n_users; ++k) {
    out.max_block_residual =
        std::max({out.max_block_residual, last[k].diag.kkt_stationarity,
                  last[k].diag.kkt_complementarity});
    out.max_constraint_violation = std::max(
        out.max_constraint_violation, last[k].diag.max_constraint_violation);
  }
  out.converged = sweep < opts.max_sweeps &&
                  out.max_block_residual <= 1e-6 &&
                  out.max_constraint_violation <= 1e-6;
  if (!out.converged && sweep >= opts.max_sweeps)
    out.note = "sweep budget exhausted";
  return out;
}

// --- downlink -----------------------------------------------------------------

struct MuDownlinkProblem {
  std::vector<CMat> H;          // BS -> user k channels (estimates under error)
  std::vector<CMat> Rn;         // per-user noise covariance
  PowerConstraintSet constraints;  // shared BS-side constraints
  CMat R_T;                     // shared BS transmit error factor; empty => perfect
  std::vector<CMat> R_R;        // per-user receive error correlation
};

namespace mu_detail {

inline bool downlink_has_error(const MuDownlinkProblem& p) {
  if (p.R_T.size() == 0 || p.R_T.norm() == 0.0) return false;
  for (const auto& r : p.R_R)
    if (r.size() != 0 && r.norm() > 0.0) return true;
  return false;
}

// Sigma_k = Rn_k + Tr(sum_j Q_j R_T) R_R,k + H_k (sum_{j != k} Q_j) H_k^H
inline CMat downlink_sigma(const MuDownlinkProblem& p, const std::vector<CMat>& q,
                           std::size_t k, double alpha) {
  CMat sigma = p.Rn[k];
  if (downlink_has_error(p) && p.R_R[k].size()) sigma += alpha * p.R_R[k];
  CMat others = CMat::Zero(p.H[k].cols(), p.H[k].cols());
  for (std::size_t j = 0; j < q.size(); ++j)
    if (j != k) others += q[j];
  sigma += p.H[k] * others * p.H[k].adjoint();
  return hermitize(sigma);
}

// H_j^H (Sigma_j^{-1} - (Sigma_j + H_j Q_j H_j^H)^{-1}) H_j summed over j != k
inline CMat downlink_leakage(const MuDownlinkProblem& p, const std::vector<CMat>& q,
                             std::size_t k, double alpha) {
  const Eigen::Index n = p.H[0].cols();
  CMat acc = CMat::Zero(n, n);
  for (std::size_t j = 0; j < q.size(); ++j) {
    if (j == k) continue;
    const CMat sigma_j = downlink_sigma(p, q, j, alpha);
    const Eigen::Index m = sigma_j.rows();
    const CMat id = CMat::Identity(m, m);
    const CMat inv_a = sigma_j.ldlt().solve(id);
    const CMat full = hermitize(sigma_j + p.H[j] * q[j] * p.H[j].adjoint());
    const CMat inv_b = full.ldlt().solve(id);
    acc += p.H[j].adjoint() * (inv_a - inv_b) * p.H[j];
  }
  return hermitize(acc);
}

inline double downlink_alpha(const MuDownlinkProblem& p,
                             const std::vector<CMat>& q) {
  if (!downlink_has_error(p)) return 0.0;
  CMat total = CMat::Zero(p.H[0].cols(), p.H[0].cols());
  for (const auto& qk : q) total += qk;
  return (p.R_T * total).trace().real();
}

// beta = sum_k Tr((Sigma_k^{-1} - (Sigma_k + H_k Q_k H_k^H)^{-1}) R_R,k)
inline double downlink_beta(const MuDownlinkProblem& p, const std::vector<CMat>& q,
                            double alpha) {
  if (!downlink_has_error(p)) return 0.0;
  double beta = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (p.R_R[k].size() == 0) continue;
    const CMat sigma_k = downlink_sigma(p, q, k, alpha);
    const Eigen::Index m = sigma_k.rows();
    const CMat id = CMat::Identity(m, m);
    const CMat inv_a = sigma_k.ldlt().solve(id);
    const CMat full = hermitize(sigma_k + p.H[k] * q[k] * p.H[k].adjoint());
    const CMat inv_b = full.ldlt().solve(id);
    beta += ((inv_a - inv_b) * p.R_R[k]).trace().real();
  }
  return beta;
}

}  // namespace mu_detail

inline double downlink_sum_capacity_bits(const MuDownlinkProblem& p,
                                         const std::vector<CMat>& q) {
  const double alpha = mu_detail::downlink_alpha(p, q);
  double total = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    const CMat sigma_k = mu_detail::downlink_sigma(p, q, k, alpha);
    total += capacity_bits(p.H[k], sigma_k, q[k]);
  }
  return total;
}

// Alternating per-user water-filling for the downlink. Each user's weight
// matrix carries the shared constraint multipliers plus the other users'
// leakage terms (and the error budget under CSI error); the per-user scalar
// cancels, so covariances are assembled at a single source-level water level
// that keeps the coupled constraints feasible on every sweep. The shared
// multipliers are tuned by a subgradient outer loop with an active-set
// Newton polish. The problem is nonconvex: the result is a KKT certificate,
// not a global-optimality claim, and objective dips across sweeps are
// reported rather than hidden.
inline MuSolution solve_downlink(const MuDownlinkProblem& problem,
                                 const MuSolveOptions& opts = {}) {
  const std::size_t n_users = problem.H.size();
  if (n_users == 0) throw InvalidInput("solve_downlink: no users");
  if (problem.Rn.size() != n_users)
    throw InvalidInput("solve_downlink: need one noise covariance per user");
  const Eigen::Index n_tx = problem.H[0].cols();
  const PowerConstraintSet& constraints = problem.constraints;
  if (constraints.empty())
    throw InvalidInput("solve_downlink: empty constraint set");

  std::vector<double> mu_tilde(constraints.size(), 1.0);
  detail::normalize_mu_tilde(constraints, mu_tilde);

  std::vector<CMat> q(n_users, CMat::Zero(n_tx, n_tx));
  double objective = 0.0;
  double level = 1.0;
  bool monotone = true;

  // One sweep: rebuild the weight matrices, then set the single multiplier
  // scale c (the source water level) so the worst coupled constraint is
  // exactly tight. c scales only the constraint part of the weight; the
  // leakage and error terms come from the objective and stay unscaled.
  auto sweep_once = [&](std::vector<CMat>& state, double& level_io) {
    const double alpha = mu_detail::downlink_alpha(problem, state);
    const double beta = mu_detail::downlink_beta(problem, state, alpha);
    const CMat weight = detail::mix_weights(constraints, mu_tilde);

    std::vector<CMat> extra(n_users);
    std::vector<CMat> sigma(n_users);
    for (std::size_t k = 0; k < n_users; ++k) {
      CMat e = mu_detail::downlink_leakage(problem, state, k, alpha);
      if (mu_detail::downlink_has_error(problem)) e += beta * problem.R_T;
      extra[k] = hermitize(e);
      sigma[k] = mu_detail::downlink_sigma(problem, state, k, alpha);
    }

    auto assemble_all = [&](double c) {
      std::vector<CMat> qs(n_users);
      for (std::size_t k = 0; k < n_users; ++k) {
        WaterfillProblem sub{problem.H[k], sigma[k],
                             hermitize(c * weight + extra[k]), 1};
        qs[k] = assemble_covariance(sub, 1.0).Q;
      }
      return qs;
    };
    auto worst_violation = [&](const std::vector<CMat>& qs) {
      CMat total = CMat::Zero(n_tx, n_tx);
      for (const auto& qk : qs) total += qk;
      double v = -std::numeric_limits<double>::infinity();
      for (const auto& c : constraints)
        v = std::max(v, (herm_inner(c.Omega, total) - c.P) / c.P);
      return v;
    };

    double lo = level_io, hi = level_io;
    std::vector<CMat> at_lo = assemble_all(lo);
    for (int guard = 0; guard < 200 && worst_violation(at_lo) < 0.0; ++guard) {
      const double lo_next = lo * 0.25;
      if (lo_next < 1e-13) break;
      try {
        std::vector<CMat> probe = assemble_all(lo_next);
        lo = lo_next;
        at_lo = std::move(probe);
      } catch (const SingularWeight&) {
        break;  // leakage-only weight too ill-conditioned; budget is slack
      }
    }
    if (worst_violation(at_lo) < 0.0) {
      state = at_lo;  // constraints slack even at vanishing level
      level_io = lo;
      return;
    }
    std::vector<CMat> at_hi = assemble_all(hi);
    for (int guard = 0; guard < 200 && worst_violation(at_hi) > 0.0; ++guard) {
      hi *= 4.0;
      at_hi = assemble_all(hi);
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      std::vector<CMat> at_mid = assemble_all(mid);
      if (worst_violation(at_mid) > 0.0) {
        lo = mid;
      } else {
        hi = mid;
        at_hi = at_mid;
      }
      if ((hi - lo) <= 1e-13 * hi) break;
    }
    state = at_hi;
    level_io = hi;
  };

  auto traces_of = [&](const std::vector<CMat>& qs) {
    CMat total = CMat::Zero(n_tx, n_tx);
    for (const auto& qk : qs) total += qk;
    return detail::constraint_traces(constraints, total);
  };

  // sweeps to a stall for the current multipliers
  int sweeps_used = 0;
  auto run_sweeps = [&](std::vector<CMat>& state, double& lvl, int budget) {
    double prev = downlink_sum_capacity_bits(problem, state);
    int stall = 0;
    for (int s = 0; s < budget; ++s) {
      const std::vector<CMat> before = state;
      sweep_once(state, lvl);
      ++sweeps_used;
      double movement = 0.0;
      for (std::size_t k = 0; k < n_users; ++k)
        movement = std::max(movement, (state[k] - before[k]).norm() /
                                          (1.0 + state[k].norm()));
      const double now = downlink_sum_capacity_bits(problem, state);
      if (now < prev - 1e-9 * (1.0 + std::abs(prev))) monotone = false;
      const bool stalled = std::abs(now - prev) <=
                               opts.objective_tol * (1.0 + std::abs(now)) &&
                           movement <= 1e-11;
      prev = now;
      stall = stalled ? stall + 1 : 0;
      if (stall >= 3) break;
    }
    return prev;
  };

  const std::size_t n_con = constraints.size();
  objective = run_sweeps(q, level, opts.max_sweeps);
  for (int outer = 0; outer < 80; ++outer) {
    const std::vector<double> traces = traces_of(q);
    // complementary slackness: any carried multiplier must sit on a tight
    // constraint (the common level keeps iterates feasible throughout)
    double comp = 0.0;
    for (std::size_t i = 0; i < n_con; ++i)
      if (mu_tilde[i] > 1e-6)
        comp = std::max(comp, std::abs(constraints[i].P - traces[i]) /
                                  constraints[i].P);
    if (comp <= 1e-7 || n_con == 1) break;

    std::vector<double> next = mu_tilde;
    const double step = 0.25 / std::sqrt(static_cast<double>(outer + 1)) /
                        (1.0 + *std::max_element(traces.begin(), traces.end()));
    for (std::size_t i = 0; i < n_con; ++i)
      next[i] = std::max(next[i] + step * (traces[i] - constraints[i].P), 1e-7);
    detail::normalize_mu_tilde(constraints, next);

    // active-set Newton polish on Tr(Omega_i sum_k Q_k)(mu_tilde) = P_i
    if (outer >= 2) {
      std::vector<std::size_t> active;
      for (std::size_t i = 0; i < n_con; ++i)
        if (mu_tilde[i] > 1e-8 ||
            traces[i] > constraints[i].P * (1.0 - 1e-9))
          active.push_back(i);
      if (!active.empty()) {
        Eigen::VectorXd f(active.size());
        for (std::size_t a = 0; a < active.size(); ++a)
          f(a) = traces[active[a]] - constraints[active[a]].P;
        Eigen::MatrixXd jac(active.size(), active.size());
        const double fd = 1e-6;
        const std::vector<double> mu_save = mu_tilde;
        bool ok = true;
        for (std::size_t b = 0; b < active.size() && ok; ++b) {
          mu_tilde = mu_save;
          mu_tilde[active[b]] += fd;
          std::vector<CMat> probe = q;
          double lvl = level;
          try {
            run_sweeps(probe, lvl, 40);
            const std::vector<double> tr_p = traces_of(probe);
            for (std::size_t a = 0; a < active.size(); ++a)
              jac(a, b) = (tr_p[active[a]] - traces[active[a]]) / fd;
          } catch (const std::exception&) {
            ok = false;
          }
        }
        mu_tilde = mu_save;
        if (ok) {
          const Eigen::VectorXd delta = jac.fullPivLu().solve(-f);
          if (delta.allFinite()) {
            std::vector<double> trial = mu_save;
            for (std::size_t a = 0; a < active.size(); ++a)
              trial[active[a]] = std::max(trial[active[a]] + delta(a), 1e-7);
            detail::normalize_mu_tilde(constraints, trial);
            mu_tilde = trial;
            std::vector<CMat> cand = q;
            double lvl = level;
            try {
              run_sweeps(cand, lvl, 60);
              const std::vector<double> tr_c = traces_of(cand);
              double comp_c = 0.0;
              for (std::size_t i = 0; i < n_con; ++i)
                if (mu_tilde[i] > 1e-6)
                  comp_c = std::max(comp_c,
                                    std::abs(constraints[i].P - tr_c[i]) /
                                        constraints[i].P);
              if (comp_c <= comp) {
                q = cand;
                level = lvl;
                continue;  // accepted; re-check convergence at loop head
              }
            } catch (const std::exception&) {
            }
            mu_tilde = mu_save;
          }
        }
      }
    }

    mu_tilde = next;
    objective = run_sweeps(q, level, 120);
  }
  objective = downlink_sum_capacity_bits(problem, q);
  const int sweep = sweeps_used;

  MuSolution out;
  out.Q = q;
  out.mu.assign(n_users, level);
  out.mu_tilde.assign(n_users, mu_tilde);
  out.sum_capacity_bits = objective;
  out.sweeps = sweep;

  // per-user KKT block residuals with the shared multipliers level * mu_tilde
  const double alpha = mu_detail::downlink_alpha(problem, q);
  const double beta = mu_detail::downlink_beta(problem, q, alpha);
  const CMat weight = detail::mix_weights(constraints, mu_tilde);
  double residual = 0.0;
  for (std::size_t k = 0; k < n_users; ++k) {
    CMat phi = level * weight + mu_detail::downlink_leakage(problem, q, k, alpha);
    if (mu_detail::downlink_has_error(problem)) phi += beta * problem.R_T;
    WaterfillProblem block{problem.H[k],
                           mu_detail::downlink_sigma(problem, q, k, alpha),
                           hermitize(phi), 1};
    const KktResidual res = kkt_residual(block, q[k], 1.0);
    residual = std::max({residual, res.stationarity, res.complementarity});
  }
  out.max_block_residual = residual;
  out.max_constraint_violation = [&] {
    const std::vector<double> traces = traces_of(q);
    return detail::max_relative_violation(constraints, traces);
  }();
  out.converged = out.max_block_residual <= 1e-5 &&
                  out.max_constraint_violation <= 1e-6;
  if (!monotone) out.note = "objective was not monotone across sweeps";
  return out;
}

// --- scalar budget bounds (non-iterative approximations) ----------------------

struct UplinkBounds {
  double alpha_max = 0.0;               // max sum_k Tr(Q_k R_T,k)
  std::vector<double> beta_max;         // Tr(Sigma_k^{-1} R_R,k) at the bound
};

// alpha decouples across users: each term is a PSD-constrained linear
// maximization over that user's own constraint set. Sigma_k for the beta
// bound carries the alpha_max error budget and the given interference.
inline UplinkBounds uplink_bounds(const MuUplinkProblem& problem,
                                  const std::vector<CMat>* q_interference =
                                      nullptr) {
  UplinkBounds out;
  const std::size_t n_users = problem.users.size();
  std::vector<double> per_user(n_users, 0.0);
  for (std::size_t k = 0; k < n_users; ++k) {
    const MuUser& u = problem.users[k];
    if (!mu_detail::user_has_error(u)) continue;
    per_user[k] = psd_trace_max(u.R_T, u.constraints);
    out.alpha_max += per_user[k];
  }
  out.beta_max.assign(n_users, 0.0);
  CMat budget = problem.Rn;
  for (std::size_t k = 0; k < n_users; ++k)
    if (mu_detail::user_has_error(problem.users[k]))
      budget += per_user[k] * problem.users[k].R_R;
  for (std::size_t k = 0; k < n_users; ++k) {
    if (!mu_detail::user_has_error(problem.users[k])) continue;
    CMat sigma = budget;
    if (q_interference) {
      for (std::size_t j = 0; j < n_users; ++j)
        if (j != k)
          sigma += problem.users[j].H_hat * (*q_interference)[j] *
                   problem.users[j].H_hat.adjoint();
    }
    out.beta_max[k] =
        hermitize(sigma).ldlt().solve(problem.users[k].R_R).trace().real();
  }
  return out;
}

struct DownlinkBounds {
  double alpha_max = 0.0;
  double beta_max = 0.0;
};

inline DownlinkBounds downlink_bounds(const MuDownlinkProblem& problem) {
  DownlinkBounds out;
  if (!mu_detail::downlink_has_error(problem)) return out;
  out.alpha_max = psd_trace_max(problem.R_T, problem.constraints);
  for (std::size_t k = 0; k < problem.H.size(); ++k) {
    if (problem.R_R[k].size() == 0) continue;
    const CMat sigma = hermitize(problem.Rn[k] + out.alpha_max * problem.R_R[k]);
    out.beta_max += sigma.ldlt().solve(problem.R_R[k]).trace().real();
  }
  return out;
}

}  // namespace mimowf

#endif  // MIMOWF_MU_MIMO_HPP

#ifndef MIMOWF_SU_PERFECT_HPP
#define MIMOWF_SU_PERFECT_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mimowf/complex_matrix.hpp"
#include "mimowf/decomp.hpp"
#include "mimowf/waterfill.hpp"

namespace mimowf {

enum class Objective { Capacity, SumMse };

inline int kkt_exponent(Objective obj) {
  return obj == Objective::Capacity ? 1 : 2;
}

struct PowerConstraint {
  CMat Omega;  // PSD weight matrix
  double P = 0.0;
};
using PowerConstraintSet = std::vector<PowerConstraint>;

inline PowerConstraintSet per_antenna_constraints(const RVec& limits) {
  PowerConstraintSet set;
  const Eigen::Index n = limits.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    CMat omega = CMat::Zero(n, n);
    omega(i, i) = 1.0;
    set.push_back({omega, limits(i)});
  }
  return set;
}

inline PowerConstraintSet sum_power_constraint(int n, double p) {
  return {{CMat::Identity(n, n), p}};
}

// log2 |I + Rn^{-1} H Q H^H|
inline double capacity_bits(const CMat& h, const CMat& rn, const CMat& q) {
  const Eigen::Index m = rn.rows();
  const CMat a = CMat::Identity(m, m) + rn.ldlt().solve(h * q * h.adjoint());
  const Complex logdet = a.partialPivLu().matrixLU().diagonal().array().log().sum();
  return logdet.real() / std::log(2.0);
}

// Tr((I + Rn^{-1} H Q H^H)^{-1})
inline double sum_mse(const CMat& h, const CMat& rn, const CMat& q) {
  const Eigen::Index m = rn.rows();
  const CMat a = CMat::Identity(m, m) + rn.ldlt().solve(h * q * h.adjoint());
  return a.partialPivLu().solve(CMat::Identity(m, m)).trace().real();
}

inline double objective_value(Objective obj, const CMat& h, const CMat& rn,
                              const CMat& q) {
  return obj == Objective::Capacity ? capacity_bits(h, rn, q) : sum_mse(h, rn, q);
}

struct SolveDiagnostics {
  int iterations = 0;
  bool converged = true;
  double objective = 0.0;
  double kkt_stationarity = 0.0;
  double kkt_complementarity = 0.0;
  double max_constraint_violation = 0.0;  // relative
  double dual_change = 0.0;
  std::string note;
};

struct Solution {
  CMat Q;
  double mu = 1.0;
  std::vector<double> mu_tilde;  // normalized multipliers, one per constraint
  CMat Psi;
  SolveDiagnostics diag;
};

struct SuProblem {
  CMat H;
  CMat Rn;  // noise covariance, positive definite
  Objective objective = Objective::Capacity;
  PowerConstraintSet constraints;
};

// Weighted sum power constraint Tr(W Q) <= P: one water-fill, closed form.
inline Solution solve_single_constraint(const CMat& h, const CMat& rn,
                                        const CMat& w, double p,
                                        Objective objective) {
  WaterfillProblem problem{h, rn, w, kkt_exponent(objective)};
  const CMat pi_is = psd_sqrt_pair(rn, true).inv_sqrt;
  const CMat phi_is = psd_sqrt_pair(w, true).inv_sqrt;
  const SortedSvd svd = sorted_svd(pi_is * h * phi_is);
  const double mu = water_level(svd.singular_values, problem.K, p);
  const AssembledCovariance asm_q = assemble_covariance(problem, mu);
  const KktResidual res = kkt_residual(problem, asm_q.Q, mu);

  Solution sol;
  sol.Q = asm_q.Q;
  sol.mu = mu;
  sol.mu_tilde = {1.0};
  sol.Psi = res.Psi;
  sol.diag.iterations = 1;
  sol.diag.objective = objective_value(objective, h, rn, asm_q.Q);
  sol.diag.kkt_stationarity = res.stationarity;
  sol.diag.kkt_complementarity = res.complementarity;
  const double used = (w * asm_q.Q).trace().real();
  sol.diag.max_constraint_violation = std::abs(used - p) / p;
  return sol;
}

namespace detail {

inline CMat mix_weights(const PowerConstraintSet& constraints,
                        const std::vector<double>& mu_tilde) {
  CMat phi = CMat::Zero(constraints[0].Omega.rows(), constraints[0].Omega.cols());
  for (std::size_t i = 0; i < constraints.size(); ++i)
    phi += mu_tilde[i] * constraints[i].Omega;
  return hermitize(phi);
}

// Normalize so that sum_i mu_tilde_i * P_i == sum_i P_i.
inline void normalize_mu_tilde(const PowerConstraintSet& constraints,
                               std::vector<double>& mu_tilde) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    num += constraints[i].P;
    den += mu_tilde[i] * constraints[i].P;
  }
  if (den <= 0.0) {
    std::fill(mu_tilde.begin(), mu_tilde.end(), 1.0);
    return;
  }
  for (double& v : mu_tilde) v *= num / den;
}

inline std::vector<double> constraint_traces(const PowerConstraintSet& constraints,
                                             const CMat& q) {
  std::vector<double> tr(constraints.size());
  for (std::size_t i = 0; i < constraints.size(); ++i)
    tr[i] = (constraints[i].Omega * q).trace().real();
  return tr;
}

inline double max_relative_violation(const PowerConstraintSet& constraints,
                                     const std::vector<double>& traces) {
  double v = 0.0;
  for (std::size_t i = 0; i < constraints.size(); ++i)
    v = std::max(v, (traces[i] - constraints[i].P) / constraints[i].P);
  return std::max(v, 0.0);
}

// Inner map of the multiplier searches. Solves the stationarity system with
// Phi(mu) = mu * sum_i mu_tilde_i Omega_i + extra for the scalar mu that
// meets the trace target Tr((sum_i mu_tilde_i Omega_i) Q) == sum_i P_i.
// `extra` is a constant PSD weight term (the CSI error budget); pass an
// empty matrix when absent, which reduces to the classic water level.
// Tr(T Q(mu)) is non-increasing in mu, so bisection applies.
inline AssembledCovariance weighted_inner(const CMat& h, const CMat& pi,
                                          const PowerConstraintSet& constraints,
                                          const std::vector<double>& mu_tilde,
                                          Objective objective, const CMat& extra,
                                          double* mu_out) {
  const CMat t = mix_weights(constraints, mu_tilde);
  double target = 0.0;
  for (const auto& c : constraints) target += c.P;
  const int kexp = kkt_exponent(objective);

  if (extra.size() == 0 || extra.norm() == 0.0) {
    WaterfillProblem problem{h, pi, t, kexp};
    const CMat pi_is = psd_sqrt_pair(pi, true).inv_sqrt;
    const CMat t_is = psd_sqrt_pair(t, true).inv_sqrt;
    const SortedSvd svd = sorted_svd(pi_is * h * t_is);
    const double mu = water_level(svd.singular_values, kexp, target);
    if (mu_out) *mu_out = mu;
    return assemble_covariance(problem, mu);
  }

  auto eval = [&](double mu) {
    WaterfillProblem problem{h, pi, hermitize(mu * t + extra), kexp};
    return assemble_covariance(problem, 1.0);
  };
  auto traced = [&](const AssembledCovariance& a) {
    return (t * a.Q).trace().real();
  };

  double lo = 1.0, hi = 1.0;
  AssembledCovariance a_lo = eval(lo);
  for (int guard = 0; guard < 200 && traced(a_lo) < target; ++guard) {
    const double lo_next = lo * 0.25;
    if (lo_next < 1e-14) break;
    try {
      AssembledCovariance probe = eval(lo_next);
      lo = lo_next;
      a_lo = std::move(probe);
    } catch (const SingularWeight&) {
      break;  // extra term alone is too ill-conditioned to whiten
    }
  }
  if (traced(a_lo) < target) {
    // The error-budget weight alone caps the useful power below the budget;
    // the constraints end up slack and mu sits at zero.
    if (mu_out) *mu_out = lo;
    return a_lo;
  }
  AssembledCovariance a_hi = eval(hi);
  for (int guard = 0; guard < 200 && traced(a_hi) > target; ++guard) {
    hi *= 4.0;
    a_hi = eval(hi);
  }
  AssembledCovariance out = a_lo;
  double mu = lo;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    AssembledCovariance a_mid = eval(mid);
    if (traced(a_mid) >= target) {
      lo = mid;
      a_lo = a_mid;
    } else {
      hi = mid;
    }
    out = a_lo;
    mu = lo;
    if ((hi - lo) <= 1e-13 * hi) break;
  }
  if (mu_out) *mu_out = mu;
  return out;
}

}  // namespace detail

struct MultiConstraintOptions {
  int max_outer = 2000;
  double feasibility_tol = 1e-7;  // relative overshoot
  double dual_tol = 1e-10;
  // Slack-constraint multipliers are floored so Phi stays invertible; the
  // floor perturbs Q well below the 1e-7 solve tolerances.
  double mu_floor = 1e-9;
};

namespace detail {

struct MultiplierSearchResult {
  std::vector<double> mu_tilde;
  CMat Q;
  double mu = 1.0;
  int iterations = 0;
  bool converged = false;
  double max_violation = 0.0;
  double dual_change = 0.0;
};

// Outer multiplier loop shared by the multi-constraint solvers. `inner` maps
// normalized multipliers to a covariance (reporting its water level); the
// loop runs diminishing-step subgradient ascent on mu_tilde with the Eq.-49
// style normalization, plus an active-set Newton refinement once the iterate
// is near-feasible. Newton steps are accepted only when they do not worsen
// feasibility, so a wrong active set falls back to the subgradient path.
template <typename InnerMap>
inline MultiplierSearchResult multiplier_search(
    const PowerConstraintSet& constraints, InnerMap&& inner,
    const MultiConstraintOptions& opts) {
  const std::size_t n_con = constraints.size();
  std::vector<double> mu_tilde(n_con, 1.0);
  normalize_mu_tilde(constraints, mu_tilde);

  double p_max = 0.0;
  for (const auto& c : constraints) p_max = std::max(p_max, c.P);
  const double step_c = 1.0 / (1.0 + p_max);

  double mu = 1.0;
  CMat cur = inner(mu_tilde, &mu);
  std::vector<double> traces = constraint_traces(constraints, cur);
  double best_violation = max_relative_violation(constraints, traces);
  MultiplierSearchResult best;
  best.Q = cur;
  best.mu = mu;
  best.mu_tilde = mu_tilde;

  int it = 1;
  double dual_change = n_con == 1 ? 0.0 : 1.0;
  for (; it <= opts.max_outer; ++it) {
    if (best_violation <= opts.feasibility_tol && dual_change <= opts.dual_tol)
      break;

    const double step = step_c / std::sqrt(static_cast<double>(it));
    std::vector<double> next = mu_tilde;
    for (std::size_t i = 0; i < n_con; ++i) {
      next[i] = std::max(next[i] + step * (traces[i] - constraints[i].P),
                         opts.mu_floor);
    }
    normalize_mu_tilde(constraints, next);

    if (it > 5 && best_violation < 1e-2 && n_con > 1) {
      std::vector<std::size_t> active;
      for (std::size_t i = 0; i < n_con; ++i)
        if (mu_tilde[i] > 1e-8 || traces[i] > constraints[i].P * (1.0 - 1e-9))
          active.push_back(i);
      if (!active.empty()) {
        Eigen::VectorXd f(active.size());
        for (std::size_t a = 0; a < active.size(); ++a)
          f(a) = traces[active[a]] - constraints[active[a]].P;
        Eigen::MatrixXd jac(active.size(), active.size());
        const double fd = 1e-6;
        bool ok = true;
        for (std::size_t b = 0; b < active.size() && ok; ++b) {
          std::vector<double> pert = mu_tilde;
          pert[active[b]] += fd;
          try {
            const CMat probe = inner(pert, nullptr);
            const std::vector<double> tr_p = constraint_traces(constraints, probe);
            for (std::size_t a = 0; a < active.size(); ++a)
              jac(a, b) = (tr_p[active[a]] - traces[active[a]]) / fd;
          } catch (const std::exception&) {
            ok = false;
          }
        }
        if (ok) {
          Eigen::VectorXd delta = jac.fullPivLu().solve(-f);
          if (delta.allFinite()) {
            std::vector<double> trial = mu_tilde;
            for (std::size_t a = 0; a < active.size(); ++a)
              trial[active[a]] =
                  std::max(trial[active[a]] + delta(a), opts.mu_floor);
            normalize_mu_tilde(constraints, trial);
            try {
              const CMat cand = inner(trial, nullptr);
              const std::vector<double> tr_c = constraint_traces(constraints, cand);
              const double v_c = max_relative_violation(constraints, tr_c);
              if (v_c <= std::max(best_violation, opts.feasibility_tol)) {
                next = trial;
              }
            } catch (const std::exception&) {
            }
          }
        }
      }
    }

    dual_change = 0.0;
    for (std::size_t i = 0; i < n_con; ++i)
      dual_change = std::max(dual_change, std::abs(next[i] - mu_tilde[i]));
    mu_tilde = next;
    cur = inner(mu_tilde, &mu);
    traces = constraint_traces(constraints, cur);
    const double violation = max_relative_violation(constraints, traces);
    if (violation <= best_violation + 1e-15) {
      best_violation = violation;
      best.Q = cur;
      best.mu = mu;
      best.mu_tilde = mu_tilde;
    }
  }

  best.iterations = it;
  best.converged = best_violation <= opts.feasibility_tol;
  best.max_violation = best_violation;
  best.dual_change = dual_change;
  return best;
}

}  // namespace detail

// Multiple weighted power constraints Tr(Omega_i Q) <= P_i over a general
// noise-side matrix Pi, optionally with a constant PSD `extra` term inside
// the weight matrix (the robust solvers put their error budget there).
// Outer search on the normalized multipliers mu_tilde_i = mu_i / mu; the
// inner map is the closed-form water-fill with Phi = sum mu_tilde_i Omega_i.
// Diminishing-step subgradient ascent plus an active-set Newton refinement
// once the iterate is near-feasible; plain subgradient alone cannot reach
// the 1e-7 stop criterion within the iteration budget.
inline Solution solve_weighted_multi_constraint(
    const CMat& h, const CMat& pi, const PowerConstraintSet& constraints,
    Objective objective, const CMat& extra,
    const MultiConstraintOptions& opts = {}) {
  if (constraints.empty())
    throw InvalidInput("solve_weighted_multi_constraint: empty constraint set");

  auto inner = [&](const std::vector<double>& mu_tilde, double* mu_out) {
    return detail::weighted_inner(h, pi, constraints, mu_tilde, objective, extra,
                                  mu_out)
        .Q;
  };
  const detail::MultiplierSearchResult found =
      detail::multiplier_search(constraints, inner, opts);

  Solution best;
  best.Q = found.Q;
  best.mu = found.mu;
  best.mu_tilde = found.mu_tilde;

  CMat phi = detail::mix_weights(constraints, best.mu_tilde) * best.mu;
  if (extra.size() != 0) phi += extra;
  WaterfillProblem certificate{h, pi, hermitize(phi), kkt_exponent(objective)};
  const KktResidual res = kkt_residual(certificate, best.Q, 1.0);
  best.Psi = res.Psi;
  best.diag.iterations = found.iterations;
  best.diag.converged = found.converged;
  best.diag.objective = objective_value(objective, h, pi, best.Q);
  best.diag.kkt_stationarity = res.stationarity;
  best.diag.kkt_complementarity = res.complementarity;
  best.diag.max_constraint_violation = found.max_violation;
  best.diag.dual_change = found.dual_change;
  if (!best.diag.converged)
    best.diag.note = "multiplier search hit iteration cap; best iterate returned";
  return best;
}

// Perfect-CSI multi-constraint solver (no error-budget term).
inline Solution solve_multi_constraint(const CMat& h, const CMat& rn,
                                       const PowerConstraintSet& constraints,
                                       Objective objective,
                                       const MultiConstraintOptions& opts = {}) {
  if (constraints.size() == 1)
    return solve_single_constraint(h, rn, constraints[0].Omega, constraints[0].P,
                                   objective);
  return solve_weighted_multi_constraint(h, rn, constraints, objective, CMat(),
                                         opts);
}

inline Solution solve_su(const SuProblem& problem,
                         const MultiConstraintOptions& opts = {}) {
  return solve_multi_constraint(problem.H, problem.Rn, problem.constraints,
                                problem.objective, opts);
}

}  // namespace mimowf

#endif  // MIMOWF_SU_PERFECT_HPP

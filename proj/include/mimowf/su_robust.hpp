#ifndef MIMOWF_SU_ROBUST_HPP
#define MIMOWF_SU_ROBUST_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mimowf/complex_matrix.hpp"
#include "mimowf/decomp.hpp"
#include "mimowf/su_perfect.hpp"
#include "mimowf/waterfill.hpp"

namespace mimowf {

// Kronecker CSI error: H = H_hat + dH with E[dH X dH^H] = Tr(R_T X) R_R.
// R_T carries the error variance scaling; R_T = 0 (or R_R = 0) is perfect CSI.
struct KroneckerErrorModel {
  CMat H_hat;
  CMat R_R;
  CMat R_T;
  double sigma_n2 = 1.0;
};

// K_n = sigma_n^2 I + Tr(R_T Q) R_R
inline CMat equivalent_noise(const CMat& q, const KroneckerErrorModel& model) {
  const Eigen::Index m = model.H_hat.rows();
  CMat kn = model.sigma_n2 * CMat::Identity(m, m);
  if (model.R_T.size() && model.R_R.size())
    kn += (model.R_T * q).trace().real() * model.R_R;
  return hermitize(kn);
}

inline bool error_free(const KroneckerErrorModel& model) {
  return model.R_T.size() == 0 || model.R_R.size() == 0 ||
         model.R_T.norm() == 0.0 || model.R_R.norm() == 0.0;
}

// R proportional to the identity: |R - (Tr R / n) I|_F <= 1e-10 Tr R.
inline bool is_scaled_identity(const CMat& r, double rel_tol = 1e-10) {
  if (r.rows() != r.cols() || r.rows() == 0) return false;
  const double t = r.trace().real();
  if (t <= 0.0) return false;
  const double s = t / static_cast<double>(r.rows());
  return (r - s * CMat::Identity(r.rows(), r.cols())).norm() <= rel_tol * t;
}

inline double robust_capacity_bits(const KroneckerErrorModel& model,
                                   const CMat& q) {
  return capacity_bits(model.H_hat, equivalent_noise(q, model), q);
}

inline double robust_sum_mse(const KroneckerErrorModel& model, const CMat& q) {
  return sum_mse(model.H_hat, equivalent_noise(q, model), q);
}

inline double robust_objective(const KroneckerErrorModel& model, const CMat& q,
                               Objective objective) {
  return objective == Objective::Capacity ? robust_capacity_bits(model, q)
                                          : robust_sum_mse(model, q);
}

// --- the three fixed-point scalars ------------------------------------------

inline double alpha_scalar(const KroneckerErrorModel& model, const CMat& q) {
  return model.R_T.size() ? (model.R_T * q).trace().real() : 0.0;
}

// beta = Tr((Kn^{-1} - (Kn + H Q H^H)^{-1}) R_R)
inline double beta_scalar(const KroneckerErrorModel& model, const CMat& q,
                          const CMat& kn) {
  if (error_free(model)) return 0.0;
  const Eigen::Index m = kn.rows();
  const CMat id = CMat::Identity(m, m);
  const CMat kn_inv = kn.ldlt().solve(id);
  const CMat full = hermitize(kn + model.H_hat * q * model.H_hat.adjoint());
  const CMat full_inv = full.ldlt().solve(id);
  return ((kn_inv - full_inv) * model.R_R).trace().real();
}

// gamma = Tr(Kn^{-1} H Q^{1/2} (I + Q^{1/2} H^H Kn^{-1} H Q^{1/2})^{-2}
//            Q^{1/2} H^H Kn^{-1} R_R)
inline double gamma_scalar(const KroneckerErrorModel& model, const CMat& q,
                           const CMat& kn) {
  if (error_free(model)) return 0.0;
  const CMat q_sqrt = psd_sqrt_pair(q, false).sqrt;
  const Eigen::Index n = q.rows();
  const CMat kn_inv = kn.ldlt().solve(CMat::Identity(kn.rows(), kn.cols()));
  const CMat b = kn_inv * model.H_hat * q_sqrt;  // Kn^{-1} H Q^{1/2}
  const CMat m_in =
      hermitize(CMat::Identity(n, n) + q_sqrt * model.H_hat.adjoint() * b);
  const CMat m_inv = m_in.ldlt().solve(CMat::Identity(n, n));
  const CMat core = b * m_inv * m_inv * b.adjoint();
  return (core * model.R_R).trace().real();
}

inline double error_budget_scalar(const KroneckerErrorModel& model, const CMat& q,
                                  const CMat& kn, Objective objective) {
  return objective == Objective::Capacity ? beta_scalar(model, q, kn)
                                          : gamma_scalar(model, q, kn);
}

struct FixedPointScalars {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

// Upper bounds used by the non-iterative approximation:
// alpha_max = lambda_max(R_T) P_total, beta_max = Tr(Kn^{-1} R_R) with Kn
// built from alpha_max, gamma_max = beta_max / 4.
inline FixedPointScalars bound_scalars(const KroneckerErrorModel& model,
                                       double p_total) {
  FixedPointScalars out;
  if (error_free(model)) return out;
  const SortedEvd evd = sorted_evd(model.R_T);
  out.alpha = std::max(evd.eigenvalues(0), 0.0) * p_total;
  const Eigen::Index m = model.H_hat.rows();
  const CMat kn =
      hermitize(model.sigma_n2 * CMat::Identity(m, m) + out.alpha * model.R_R);
  out.beta = kn.ldlt().solve(model.R_R).trace().real();
  out.gamma = 0.25 * out.beta;
  return out;
}

// --- robust KKT certificate --------------------------------------------------

struct RobustKkt {
  double stationarity = 0.0;
  double complementarity = 0.0;
  double feasibility = 0.0;
  double mu = 0.0;
  CMat Psi;

  double max_residual() const {
    return std::max({stationarity, complementarity, feasibility});
  }
};

namespace robust_detail {

// Gradient core H^H Kn^{-1/2} (I + Kn^{-1/2} H Q H^H Kn^{-1/2})^{-K}
// Kn^{-1/2} H evaluated at the model's equivalent noise.
inline CMat stationarity_core(const KroneckerErrorModel& model, const CMat& q,
                              const CMat& kn, Objective objective) {
  const CMat kn_is = psd_sqrt_pair(kn, true).inv_sqrt;
  const CMat wh = kn_is * model.H_hat;
  const Eigen::Index m = kn.rows();
  const CMat inner = hermitize(CMat::Identity(m, m) + wh * q * wh.adjoint());
  CMat inv = inner.ldlt().solve(CMat::Identity(m, m));
  if (objective == Objective::SumMse) inv = inv * inv;
  return hermitize(wh.adjoint() * inv * wh);
}

inline RobustKkt certificate(const KroneckerErrorModel& model, const CMat& q,
                             Objective objective, const CMat& weight,
                             double weighted_budget, double used_budget) {
  const CMat kn = equivalent_noise(q, model);
  const CMat grad = stationarity_core(model, q, kn, objective);
  const double c = error_budget_scalar(model, q, kn, objective);
  CMat base = weight;
  // The free scalar mu is fitted from Tr(Psi Q) = 0; the stationarity
  // residual then measures the structural mismatch that no mu absorbs.
  const CMat err_term =
      model.R_T.size() ? CMat(c * model.R_T)
                       : CMat(CMat::Zero(q.rows(), q.cols()));
  const double tr_wq = (base * q).trace().real();
  double mu = 0.0;
  if (tr_wq > 0.0)
    mu = ((grad - err_term) * q).trace().real() / tr_wq;
  mu = std::max(mu, 0.0);
  const CMat psi = hermitize(mu * base + err_term - grad);

  RobustKkt out;
  const SortedEvd evd = sorted_evd(psi);
  double neg2 = 0.0;
  for (Eigen::Index i = 0; i < evd.eigenvalues.size(); ++i)
    if (evd.eigenvalues(i) < 0.0) neg2 += evd.eigenvalues(i) * evd.eigenvalues(i);
  const double lmax = evd.eigenvalues.size() ? std::abs(evd.eigenvalues(0)) : 0.0;
  out.stationarity = std::sqrt(neg2) / (1.0 + lmax);
  out.complementarity =
      std::abs((psi * q).trace().real()) / (1.0 + std::abs(mu * tr_wq));
  out.feasibility = weighted_budget > 0.0
                        ? std::abs(used_budget - weighted_budget) / weighted_budget
                        : 0.0;
  out.mu = mu;
  out.Psi = hermitize(evd.U * evd.eigenvalues.cwiseMax(0.0).asDiagonal() *
                      evd.U.adjoint());
  return out;
}

}  // namespace robust_detail

// Full Eq.-57/83-style residual for the total power constraint Tr(Q) <= P.
inline RobustKkt robust_kkt_residual(const KroneckerErrorModel& model,
                                     const CMat& q, Objective objective,
                                     double p) {
  const Eigen::Index n = q.rows();
  return robust_detail::certificate(model, q, objective, CMat::Identity(n, n), p,
                                    q.trace().real());
}

// Residual for multiple weighted constraints with normalized multipliers.
inline RobustKkt robust_kkt_residual_multi(const KroneckerErrorModel& model,
                                           const CMat& q, Objective objective,
                                           const PowerConstraintSet& constraints,
                                           const std::vector<double>& mu_tilde) {
  const CMat weight = detail::mix_weights(constraints, mu_tilde);
  double budget = 0.0;
  for (std::size_t i = 0; i < constraints.size(); ++i)
    budget += mu_tilde[i] * constraints[i].P;
  RobustKkt out = robust_detail::certificate(model, q, objective, weight, budget,
                                             (weight * q).trace().real());
  // fold hard-constraint overshoot into the feasibility figure
  const std::vector<double> traces = detail::constraint_traces(constraints, q);
  out.feasibility = std::max(
      out.feasibility, detail::max_relative_violation(constraints, traces));
  return out;
}

struct RobustSolveOptions {
  int max_passes = 500;
  double residual_tol = 1e-8;
  double theta = 0.5;  // fixed-point damping
  bool allow_dispatch = true;
  MultiConstraintOptions multiplier;
};

// Conclusion 5.1 / 6.1: R_T = r_b I makes K_n constant; one closed-form
// water-fill of K_n^{-1/2} H_hat against Tr(Q) = P.
inline Solution solve_robust_tx_white(const KroneckerErrorModel& model, double p,
                                      Objective objective) {
  const Eigen::Index n = model.H_hat.cols();
  const Eigen::Index m = model.H_hat.rows();
  const double r_b = model.R_T.size() ? model.R_T.trace().real() /
                                            static_cast<double>(n)
                                      : 0.0;
  const CMat kn =
      hermitize(model.sigma_n2 * CMat::Identity(m, m) +
                (model.R_R.size() ? CMat(r_b * p * model.R_R)
                                  : CMat(CMat::Zero(m, m))));
  Solution sol = solve_single_constraint(model.H_hat, kn, CMat::Identity(n, n), p,
                                         objective);
  const RobustKkt cert = robust_kkt_residual(model, sol.Q, objective, p);
  sol.diag.kkt_stationarity = cert.stationarity;
  sol.diag.kkt_complementarity = cert.complementarity;
  sol.diag.objective = robust_objective(model, sol.Q, objective);
  sol.Psi = cert.Psi;
  return sol;
}

// Conclusion 5.2 / 6.2: R_R = r_a I. Water-fill H_hat Phi^{-1/2} with
// Phi = sigma_n^2 I + r_a P R_T normalized by Tr(Phi Qtilde) = P, then
// Q = (P / Tr(Qtilde)) Qtilde.
inline Solution solve_robust_rx_white(const KroneckerErrorModel& model, double p,
                                      Objective objective) {
  const Eigen::Index n = model.H_hat.cols();
  const Eigen::Index m = model.H_hat.rows();
  const double r_a = model.R_R.size() ? model.R_R.trace().real() /
                                            static_cast<double>(m)
                                      : 0.0;
  const CMat phi =
      hermitize(model.sigma_n2 * CMat::Identity(n, n) +
                (model.R_T.size() ? CMat(r_a * p * model.R_T)
                                  : CMat(CMat::Zero(n, n))));
  Solution sol = solve_single_constraint(model.H_hat, CMat::Identity(m, m), phi,
                                         p, objective);
  const double tr_qt = sol.Q.trace().real();
  if (tr_qt <= 0.0) throw AllZeroChannel("solve_robust_rx_white: zero channel");
  sol.Q = (p / tr_qt) * sol.Q;
  const RobustKkt cert = robust_kkt_residual(model, sol.Q, objective, p);
  sol.diag.kkt_stationarity = cert.stationarity;
  sol.diag.kkt_complementarity = cert.complementarity;
  sol.diag.max_constraint_violation = std::abs(sol.Q.trace().real() - p) / p;
  sol.diag.objective = robust_objective(model, sol.Q, objective);
  sol.Psi = cert.Psi;
  return sol;
}

// General fixed point of Conclusions 5 / 6: iterate the scalar terms
// (alpha, beta or gamma) through the water-filling map, damped, initialized
// from the bound-approximation solve. Damping keeps Tr(Q) = P at every pass;
// a pass that increases the KKT residual is retried with halved damping.
inline Solution solve_robust_general(const KroneckerErrorModel& model, double p,
                                     Objective objective,
                                     const RobustSolveOptions& opts = {}) {
  const Eigen::Index n = model.H_hat.cols();
  const Eigen::Index m = model.H_hat.rows();
  const PowerConstraintSet sum_con = sum_power_constraint(static_cast<int>(n), p);
  const std::vector<double> ones{1.0};

  auto inner = [&](double alpha, double budget, double* mu_out) {
    const CMat kn = hermitize(model.sigma_n2 * CMat::Identity(m, m) +
                              alpha * model.R_R);
    const CMat extra = budget > 0.0 ? CMat(budget * model.R_T)
                                    : CMat(CMat::Zero(n, n));
    return detail::weighted_inner(model.H_hat, kn, sum_con, ones, objective,
                                  extra, mu_out)
        .Q;
  };

  // bound-approximation start (also the non-iterative approximate solution)
  const FixedPointScalars bounds = bound_scalars(model, p);
  double mu = 1.0;
  CMat q = inner(bounds.alpha,
                 objective == Objective::Capacity ? bounds.beta : bounds.gamma,
                 &mu);
  RobustKkt cert = robust_kkt_residual(model, q, objective, p);

  int pass = 1;
  for (; pass <= opts.max_passes; ++pass) {
    if (cert.max_residual() <= opts.residual_tol) break;
    const CMat kn = equivalent_noise(q, model);
    const double alpha = alpha_scalar(model, q);
    const double budget = error_budget_scalar(model, q, kn, objective);
    double mu_map = mu;
    const CMat q_map = inner(alpha, budget, &mu_map);

    double theta = opts.theta;
    bool accepted = false;
    for (int tries = 0; tries < 7; ++tries) {
      const CMat q_c = hermitize((1.0 - theta) * q + theta * q_map);
      const RobustKkt cert_c = robust_kkt_residual(model, q_c, objective, p);
      if (cert_c.max_residual() <= cert.max_residual() * (1.0 + 1e-12) ||
          tries == 6) {
        const double move = (q_c - q).norm();
        q = q_c;
        cert = cert_c;
        mu = mu_map;
        accepted = move > 1e-15 * (1.0 + q.norm());
        break;
      }
      theta *= 0.5;
    }
    if (!accepted) break;  // stalled
  }

  Solution sol;
  sol.Q = q;
  sol.mu = cert.mu;
  sol.mu_tilde = {1.0};
  sol.Psi = cert.Psi;
  sol.diag.iterations = pass;
  sol.diag.converged = cert.max_residual() <= 1e-6;
  sol.diag.objective = robust_objective(model, q, objective);
  sol.diag.kkt_stationarity = cert.stationarity;
  sol.diag.kkt_complementarity = cert.complementarity;
  sol.diag.max_constraint_violation = std::abs(q.trace().real() - p) / p;
  if (!sol.diag.converged)
    sol.diag.note = "fixed point stalled above residual target";
  return sol;
}

// P5 / P6 front end: dispatches reducible models to the closed forms.
inline Solution solve_robust_sum_power(const KroneckerErrorModel& model, double p,
                                       Objective objective,
                                       const RobustSolveOptions& opts = {}) {
  const Eigen::Index n = model.H_hat.cols();
  const Eigen::Index m = model.H_hat.rows();
  if (error_free(model)) {
    const CMat rn = model.sigma_n2 * CMat::Identity(m, m);
    Solution sol = solve_single_constraint(model.H_hat, rn,
                                           CMat::Identity(n, n), p, objective);
    return sol;
  }
  if (opts.allow_dispatch) {
    if (is_scaled_identity(model.R_T))
      return solve_robust_tx_white(model, p, objective);
    if (is_scaled_identity(model.R_R))
      return solve_robust_rx_white(model, p, objective);
  }
  return solve_robust_general(model, p, objective, opts);
}

// P7 / P8: multiple weighted power constraints under CSI error.
// Outer subgradient search on the normalized multipliers wrapped around
// either the closed-form special-case map (R_R proportional to I,
// Conclusions 7.1 / 8.1) or the general fixed-point map (Conclusions 7 / 8).
inline Solution solve_robust_multi_constraint(const KroneckerErrorModel& model,
                                              const PowerConstraintSet& constraints,
                                              Objective objective,
                                              const RobustSolveOptions& opts = {}) {
  const Eigen::Index n = model.H_hat.cols();
  const Eigen::Index m = model.H_hat.rows();
  if (constraints.empty())
    throw InvalidInput("solve_robust_multi_constraint: empty constraint set");
  if (error_free(model)) {
    const CMat rn = model.sigma_n2 * CMat::Identity(m, m);
    return solve_multi_constraint(model.H_hat, rn, constraints, objective,
                                  opts.multiplier);
  }

  double p_sum = 0.0;
  for (const auto& c : constraints) p_sum += c.P;

  Solution sol;
  if (is_scaled_identity(model.R_R)) {
    // Conclusion 7.1 / 8.1 closed-form inner map.
    const double r_a = model.R_R.trace().real() / static_cast<double>(m);
    auto inner = [&](const std::vector<double>& mu_tilde, double* mu_out) {
      double weighted_budget = 0.0;
      for (std::size_t i = 0; i < constraints.size(); ++i)
        weighted_budget += mu_tilde[i] * constraints[i].P;
      CMat phi = model.sigma_n2 * detail::mix_weights(constraints, mu_tilde) +
                 r_a * weighted_budget * model.R_T;
      phi = hermitize(phi);
      const CMat phi_is = psd_sqrt_pair(phi, true).inv_sqrt;
      const SortedSvd svd = sorted_svd(model.H_hat * phi_is);
      const int kexp = kkt_exponent(objective);
      const double level = water_level(svd.singular_values, kexp, p_sum);
      if (mu_out) *mu_out = level;
      WaterfillProblem problem{model.H_hat, CMat::Identity(m, m), phi, kexp};
      const CMat q_tilde = assemble_covariance(problem, level).Q;
      const CMat t = detail::mix_weights(constraints, mu_tilde);
      const double used = (t * q_tilde).trace().real();
      if (used <= 0.0) return CMat(CMat::Zero(n, n));
      return CMat((p_sum / used) * q_tilde);
    };
    const detail::MultiplierSearchResult found =
        detail::multiplier_search(constraints, inner, opts.multiplier);
    sol.Q = found.Q;
    sol.mu = found.mu;
    sol.mu_tilde = found.mu_tilde;
    sol.diag.iterations = found.iterations;
    sol.diag.converged = found.converged;
    sol.diag.max_constraint_violation = found.max_violation;
    sol.diag.dual_change = found.dual_change;
  } else {
    // General fixed point per mu_tilde: iterate (alpha, budget) through the
    // weighted water-fill, warm-started across outer iterations. The start
    // point substitutes the scalar upper bounds, with the total-power proxy
    // Tr(Q) <= sum_i P_i * lambda_max((sum_i Omega_i)^{-1}).
    const CMat omega_sum = [&] {
      CMat s = CMat::Zero(n, n);
      for (const auto& c : constraints) s += c.Omega;
      return CMat(hermitize(s));
    }();
    const SortedEvd omega_evd = sorted_evd(omega_sum);
    if (omega_evd.eigenvalues(n - 1) <= 0.0)
      throw SingularWeight(
          "solve_robust_multi_constraint: constraint weights do not cover all "
          "directions");
    const double p_proxy = p_sum / omega_evd.eigenvalues(n - 1);
    const FixedPointScalars bounds = bound_scalars(model, p_proxy);
    CMat q_state = CMat::Zero(n, n);
    bool have_state = false;
    auto inner = [&](const std::vector<double>& mu_tilde, double* mu_out) {
      double alpha = bounds.alpha;
      double budget = objective == Objective::Capacity ? bounds.beta : bounds.gamma;
      CMat q = q_state;
      if (have_state) {
        const CMat kn = equivalent_noise(q, model);
        alpha = alpha_scalar(model, q);
        budget = error_budget_scalar(model, q, kn, objective);
      }
      double mu = 1.0;
      RobustKkt cert;
      double res = std::numeric_limits<double>::infinity();
      for (int pass = 0; pass < 200; ++pass) {
        const CMat kn = hermitize(model.sigma_n2 * CMat::Identity(m, m) +
                                  alpha * model.R_R);
        const CMat extra = hermitize(budget * model.R_T);
        const CMat q_map = detail::weighted_inner(model.H_hat, kn, constraints,
                                                  mu_tilde, objective, extra, &mu)
                               .Q;
        const CMat q_next =
            have_state || pass > 0 ? CMat(hermitize(0.5 * q + 0.5 * q_map)) : q_map;
        const RobustKkt cert_next = robust_kkt_residual_multi(
            model, q_next, objective, constraints, mu_tilde);
        const double move = (q_next - q).norm();
        q = q_next;
        cert = cert_next;
        const CMat kn_q = equivalent_noise(q, model);
        alpha = alpha_scalar(model, q);
        budget = error_budget_scalar(model, q, kn_q, objective);
        res = std::max(cert.stationarity, cert.complementarity);
        if (res <= opts.residual_tol || move <= 1e-13 * (1.0 + q.norm())) break;
      }
      q_state = q;
      have_state = true;
      if (mu_out) *mu_out = mu;
      return q;
    };
    const detail::MultiplierSearchResult found =
        detail::multiplier_search(constraints, inner, opts.multiplier);
    sol.Q = found.Q;
    sol.mu = found.mu;
    sol.mu_tilde = found.mu_tilde;
    sol.diag.iterations = found.iterations;
    sol.diag.converged = found.converged;
    sol.diag.max_constraint_violation = found.max_violation;
    sol.diag.dual_change = found.dual_change;
  }

  const RobustKkt cert = robust_kkt_residual_multi(model, sol.Q, objective,
                                                   constraints, sol.mu_tilde);
  sol.Psi = cert.Psi;
  sol.diag.kkt_stationarity = cert.stationarity;
  sol.diag.kkt_complementarity = cert.complementarity;
  sol.diag.objective = robust_objective(model, sol.Q, objective);
  sol.diag.converged = sol.diag.converged && cert.max_residual() <= 1e-6;
  return sol;
}

}  // namespace mimowf

#endif  // MIMOWF_SU_ROBUST_HPP

#ifndef MIMOWF_ORACLE_HPP
#define MIMOWF_ORACLE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "mimowf/complex_matrix.hpp"
#include "mimowf/decomp.hpp"
#include "mimowf/su_perfect.hpp"

namespace mimowf {

// Convex problem classes P1-P4 and the coupled uplink P9: fixed noise, linear
// trace constraints, capacity or sum-MSE objective. The independent check for
// the water-filling solvers.
struct ConvexCovarianceProblem {
  std::vector<CMat> H;                          // one channel per user
  CMat Rn;                                      // shared noise covariance
  std::vector<PowerConstraintSet> constraints;  // per user
  Objective objective = Objective::Capacity;
};

namespace oracle_detail {

inline CMat project_psd(const CMat& a) {
  const SortedEvd evd = sorted_evd(a);
  return hermitize(evd.U * evd.eigenvalues.cwiseMax(0.0).asDiagonal() *
                   evd.U.adjoint());
}

inline CMat project_halfspace(const CMat& a, const CMat& omega, double p) {
  const double v = herm_inner(omega, a) - p;
  if (v <= 0.0) return a;
  const double w2 = herm_inner(omega, omega);
  return a - (v / w2) * omega;
}

}  // namespace oracle_detail

// Dykstra alternating projections onto {Q >= 0} cap {Tr(Omega_i Q) <= P_i},
// finished with a PSD clip and a scale-down so the returned point is feasible
// even when the pass budget runs out far from the set.
inline CMat project_feasible(const CMat& q, const PowerConstraintSet& constraints,
                             double tol = 1e-10, int max_passes = 500) {
  CMat x = hermitize(q);
  const std::size_t m = constraints.size() + 1;
  std::vector<CMat> correction(m, CMat::Zero(q.rows(), q.cols()));
  for (int pass = 0; pass < max_passes; ++pass) {
    for (std::size_t c = 0; c < m; ++c) {
      const CMat y = x + correction[c];
      CMat proj;
      if (c == 0)
        proj = oracle_detail::project_psd(y);
      else
        proj = oracle_detail::project_halfspace(y, constraints[c - 1].Omega,
                                                constraints[c - 1].P);
      correction[c] = y - proj;
      x = proj;
    }
    double violation = 0.0;
    const SortedEvd evd = sorted_evd(x);
    if (evd.eigenvalues.size())
      violation = std::max(violation, -evd.eigenvalues.minCoeff());
    for (const auto& csts : constraints)
      violation = std::max(violation, herm_inner(csts.Omega, x) - csts.P);
    if (violation <= tol) break;
  }
  x = oracle_detail::project_psd(x);
  double shrink = 1.0;
  for (const auto& c : constraints) {
    const double used = herm_inner(c.Omega, x);
    if (used > c.P) shrink = std::min(shrink, c.P / used);
  }
  if (shrink < 1.0) x *= shrink;
  return hermitize(x);
}

struct OracleReport {
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  double residual = 0.0;
};

// Projected gradient on the convex classes. Gradient ascent for capacity,
// descent for sum MSE, Armijo backtracking along the projection arc,
// projection by Dykstra passes. First-order residual uses a unit probe step.
inline std::vector<CMat> projected_gradient_solve(
    const ConvexCovarianceProblem& problem, double tol = 1e-7,
    int max_iters = 3000, OracleReport* report = nullptr) {
  const std::size_t n_users = problem.H.size();
  if (n_users == 0 || n_users != problem.constraints.size())
    throw InvalidInput("projected_gradient_solve: malformed problem");
  const Eigen::Index m = problem.Rn.rows();
  const CMat identity = CMat::Identity(m, m);

  std::vector<CMat> q(n_users);
  for (std::size_t k = 0; k < n_users; ++k) {
    const Eigen::Index n = problem.H[k].cols();
    q[k] = CMat::Zero(n, n);
  }

  // Maximize f = capacity_nats, or f = -sum_mse.
  auto objective_of = [&](const std::vector<CMat>& qs) {
    CMat x = problem.Rn;
    for (std::size_t k = 0; k < n_users; ++k)
      x += problem.H[k] * qs[k] * problem.H[k].adjoint();
    x = hermitize(x);
    if (problem.objective == Objective::Capacity) {
      const CMat a = problem.Rn.ldlt().solve(x);
      return a.partialPivLu().matrixLU().diagonal().array().log().sum().real();
    }
    const CMat inv = x.ldlt().solve(identity);
    return -(problem.Rn * inv).trace().real();
  };
  auto gradients = [&](const std::vector<CMat>& qs) {
    CMat x = problem.Rn;
    for (std::size_t k = 0; k < n_users; ++k)
      x += problem.H[k] * qs[k] * problem.H[k].adjoint();
    x = hermitize(x);
    const CMat xinv = x.ldlt().solve(identity);
    std::vector<CMat> g(n_users);
    if (problem.objective == Objective::Capacity) {
      for (std::size_t k = 0; k < n_users; ++k)
        g[k] = hermitize(problem.H[k].adjoint() * xinv * problem.H[k]);
    } else {
      const CMat core = xinv * problem.Rn * xinv;
      for (std::size_t k = 0; k < n_users; ++k)
        g[k] = hermitize(problem.H[k].adjoint() * core * problem.H[k]);
    }
    return g;
  };

  // FISTA-style accelerated projected gradient with a monotone restart;
  // plain projected gradient zig-zags for thousands of iterations on the
  // flat high-SNR instances.
  double f = objective_of(q);
  std::vector<CMat> y = q;
  double t_momentum = 1.0;
  double step = 1.0;
  double residual = 1.0;
  int stalled_iters = 0;
  int it = 0;
  for (; it < max_iters; ++it) {
    const std::vector<CMat> g = gradients(y);

    std::vector<CMat> trial(n_users);
    double f_trial = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      double inner = 0.0, dist2 = 0.0;
      for (std::size_t k = 0; k < n_users; ++k) {
        trial[k] = project_feasible(y[k] + step * g[k], problem.constraints[k]);
        inner += herm_inner(g[k], trial[k] - y[k]);
        dist2 += (trial[k] - y[k]).squaredNorm();
      }
      f_trial = objective_of(trial);
      const double f_y = objective_of(y);
      if (f_trial >= f_y + inner - dist2 / (2.0 * step) - 1e-15) break;
      step *= 0.5;
    }

    if (f_trial < f - 1e-15) {
      // momentum overshot: restart from the best point
      y = q;
      t_momentum = 1.0;
      if (it % 4 == 3) {
        // residual check on restart iterations to avoid stalling forever
        double res = 0.0, scale = 0.0;
        const std::vector<CMat> gq = gradients(q);
        for (std::size_t k = 0; k < n_users; ++k) {
          const CMat probe =
              project_feasible(q[k] + gq[k], problem.constraints[k]);
          res += (probe - q[k]).squaredNorm();
          scale += q[k].squaredNorm();
        }
        residual = std::sqrt(res) / (1.0 + std::sqrt(scale));
        if (residual <= tol) break;
      }
      continue;
    }

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum *
                                                           t_momentum));
    for (std::size_t k = 0; k < n_users; ++k)
      y[k] = trial[k] + ((t_momentum - 1.0) / t_next) * (trial[k] - q[k]);
    // objective-stall cut: the first-order residual can hover above a tight
    // tolerance long after the objective has converged to machine flatness
    stalled_iters = f_trial - f <= 1e-13 * (1.0 + std::abs(f)) ? stalled_iters + 1
                                                               : 0;
    q = trial;
    f = f_trial;
    t_momentum = t_next;
    step = std::min(step * 1.2, 64.0);
    if (stalled_iters >= 40) break;

    if (it % 5 == 4 || it + 1 == max_iters) {
      double res = 0.0, scale = 0.0;
      const std::vector<CMat> gq = gradients(q);
      for (std::size_t k = 0; k < n_users; ++k) {
        const CMat probe = project_feasible(q[k] + gq[k], problem.constraints[k]);
        res += (probe - q[k]).squaredNorm();
        scale += q[k].squaredNorm();
      }
      residual = std::sqrt(res) / (1.0 + std::sqrt(scale));
      if (residual <= tol) break;
    }
  }

  if (report) {
    report->iterations = it;
    report->converged = residual <= tol;
    report->residual = residual;
    double obj = objective_of(q);
    report->objective = problem.objective == Objective::Capacity
                            ? obj / std::log(2.0)
                            : -obj;
  }
  return q;
}

// Hermitian-constrained central-difference gradient: the matrix G with
// df = Tr(G dQ) for Hermitian perturbations dQ, assembled entrywise from the
// real and imaginary directions and Hermitian by construction. Matches the
// d/dQ* convention the analytic identities are stated in.
inline CMat finite_difference_gradient(
    const std::function<double(const CMat&)>& f, const CMat& q, double h = 1e-6) {
  const Eigen::Index n = q.rows();
  CMat g = CMat::Zero(n, n);
  auto diff = [&](const CMat& dir) {
    return (f(hermitize(q + h * dir)) - f(hermitize(q - h * dir))) / (2.0 * h);
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    CMat e = CMat::Zero(n, n);
    e(i, i) = 1.0;
    g(i, i) = diff(e);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      CMat s = CMat::Zero(n, n);
      s(i, j) = 1.0;
      s(j, i) = 1.0;
      const double re = 0.5 * diff(s);
      CMat a = CMat::Zero(n, n);
      a(i, j) = Complex(0.0, 1.0);
      a(j, i) = Complex(0.0, -1.0);
      const double im = 0.5 * diff(a);
      g(i, j) = Complex(re, im);
      g(j, i) = Complex(re, -im);
    }
  }
  return g;
}

// Certified maximum of Tr(X R) over {X >= 0, Tr(Omega_i X) <= P_i}.
// Exact closed forms for a single weighted constraint and for the
// diagonal-R/per-antenna case; otherwise the dual-side bound
//   b(w) = lambda_max(W^{-1/2} R W^{-1/2}) * sum_i w_i P_i,  W = sum w_i Omega_i,
// minimized over w >= 0, which is valid for every w and tight at the dual
// optimum. The returned value is always an upper bound of the true maximum.
inline double psd_trace_max(const CMat& r, const PowerConstraintSet& constraints) {
  if (constraints.empty()) throw InvalidInput("psd_trace_max: no constraints");
  const Eigen::Index n = r.rows();

  auto bound_at = [&](const std::vector<double>& w) {
    CMat mix = CMat::Zero(n, n);
    double budget = 0.0;
    for (std::size_t i = 0; i < constraints.size(); ++i) {
      mix += w[i] * constraints[i].Omega;
      budget += w[i] * constraints[i].P;
    }
    const SortedEvd evd = sorted_evd(mix);
    if (evd.eigenvalues(n - 1) <= 1e-14 * std::max(evd.eigenvalues(0), 1.0))
      return std::numeric_limits<double>::infinity();
    const CMat wis = psd_sqrt_pair(mix, true).inv_sqrt;
    const SortedEvd core = sorted_evd(wis * r * wis);
    return std::max(core.eigenvalues(0), 0.0) * budget;
  };

  if (constraints.size() == 1) return bound_at({1.0});

  // per-antenna constraints with diagonal R: a plain LP on the diagonal
  bool per_antenna = constraints.size() == static_cast<std::size_t>(n);
  if (per_antenna) {
    std::vector<bool> seen(n, false);
    for (const auto& c : constraints) {
      int axis = -1;
      bool ok = true;
      for (Eigen::Index i = 0; i < n && ok; ++i)
        for (Eigen::Index j = 0; j < n && ok; ++j) {
          const Complex v = c.Omega(i, j);
          if (i == j && std::abs(v - Complex(1, 0)) < 1e-14) {
            if (axis >= 0 && axis != i) ok = false;
            axis = static_cast<int>(i);
          } else if (std::abs(v) > 1e-14) {
            ok = false;
          }
        }
      if (!ok || axis < 0 || seen[axis]) {
        per_antenna = false;
        break;
      }
      seen[axis] = true;
    }
    if (per_antenna) {
      double offdiag = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          if (i != j) offdiag = std::max(offdiag, std::abs(r(i, j)));
      if (offdiag <= 1e-13 * std::max(1.0, r.norm())) {
        double total = 0.0;
        for (const auto& c : constraints) {
          int axis = 0;
          for (Eigen::Index i = 0; i < n; ++i)
            if (std::abs(c.Omega(i, i)) > 0.5) axis = static_cast<int>(i);
          total += r(axis, axis).real() * c.P;
        }
        return total;
      }
    }
  }

  // general case: coordinate descent on the dual-side bound
  std::vector<double> w(constraints.size(), 1.0);
  double best = bound_at(w);
  const double factors[] = {0.25, 0.5, 0.8, 0.95, 1.05, 1.25, 2.0, 4.0};
  for (int pass = 0; pass < 60; ++pass) {
    bool improved = false;
    for (std::size_t i = 0; i < w.size(); ++i) {
      for (const double fac : factors) {
        std::vector<double> trial = w;
        trial[i] = std::max(w[i] * fac, 1e-12);
        const double b = bound_at(trial);
        if (b < best - 1e-14 * std::abs(best)) {
          best = b;
          w = trial;
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
  return best;
}

}  // namespace mimowf

#endif  // MIMOWF_ORACLE_HPP

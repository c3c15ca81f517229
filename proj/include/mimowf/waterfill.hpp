#ifndef MIMOWF_WATERFILL_HPP
#define MIMOWF_WATERFILL_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "mimowf/complex_matrix.hpp"
#include "mimowf/decomp.hpp"

namespace mimowf {

// One instance of the generic stationarity system
//
//   H^H Pi^{-1/2} (I + Pi^{-1/2} H Q H^H Pi^{-1/2})^{-K} Pi^{-1/2} H
//       = mu * Phi - Psi,     Tr(Psi Q) = 0,
//
// whose solutions carry the water-filling structure assembled below.
// K = 1 drives the capacity solvers, K = 2 the sum-MSE solvers; the engine
// accepts any K >= 1.
struct WaterfillProblem {
  CMat H;    // channel
  CMat Pi;   // noise-side matrix, positive definite
  CMat Phi;  // weight-side matrix, positive definite
  int K = 1;
};

struct ModeAllocation {
  RVec whitened_singulars;  // h_i of Pi^{-1/2} H Phi^{-1/2}, non-increasing
  RVec mode_powers;         // a_i^2, zero beyond active_count
  double mu = 0.0;
  int active_count = 0;
};

// a_i^2 = (h_i^2)^{1/K} / h_i^2 * ( mu^{-1/K} - (h_i^2)^{-1/K} )^+,
// with a_i^2 = 0 where h_i = 0. Mode i is active iff h_i^2 > mu.
inline RVec mode_powers(const RVec& h, double mu, int K) {
  if (!(mu > 0.0)) throw NonPositiveMu("mode_powers: mu must be positive");
  if (K < 1) throw InvalidInput("mode_powers: K must be a positive integer");
  RVec a2 = RVec::Zero(h.size());
  const double inv_k = 1.0 / static_cast<double>(K);
  const double mu_term = std::pow(mu, -inv_k);
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const double h2 = h(i) * h(i);
    if (h2 <= 0.0) continue;
    const double gain = std::pow(h2, inv_k);
    const double level = mu_term - 1.0 / gain;
    a2(i) = level > 0.0 ? gain / h2 * level : 0.0;
  }
  return a2;
}

namespace detail {

// Total weighted power sum_i c_i * a_i^2(mu); weights c_i >= 0 make this
// strictly decreasing in mu wherever it is positive, which the bisection
// below relies on.
inline double weighted_power(const RVec& h, double mu, int K, const RVec& c) {
  const RVec a2 = mode_powers(h, mu, K);
  return c.size() ? c.dot(a2) : a2.sum();
}

inline double bisect_water_level(const RVec& h, int K, double target,
                                 const RVec& weights) {
  if (!(target > 0.0)) throw InvalidInput("water_level: target must be positive");
  double h_max = 0.0;
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const bool usable = weights.size() == 0 || weights(i) > 0.0;
    if (usable) h_max = std::max(h_max, h(i));
  }
  if (h_max <= 0.0) throw AllZeroChannel("water_level: all channel modes are zero");

  // Power is zero for mu >= max h_i^2 and diverges as mu -> 0.
  double hi = h_max * h_max;
  double lo = hi;
  for (int guard = 0; guard < 4096; ++guard) {
    lo *= 0.5;
    if (weighted_power(h, lo, K, weights) >= target) break;
  }
  if (weighted_power(h, lo, K, weights) < target)
    throw InvalidInput("water_level: target unreachable");

  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (weighted_power(h, mid, K, weights) >= target)
      lo = mid;
    else
      hi = mid;
    if ((hi - lo) <= 1e-12 * hi) break;
  }
  // lo has power >= target, hi has power <= target; refine by secant on the
  // closed bracket for the last digits.
  double mu = lo;
  double p_lo = weighted_power(h, lo, K, weights);
  double p_hi = weighted_power(h, hi, K, weights);
  if (p_lo > p_hi) {
    const double t = (p_lo - target) / (p_lo - p_hi);
    mu = lo + t * (hi - lo);
    if (!(mu > 0.0) || weighted_power(h, mu, K, weights) < 0.0) mu = lo;
  }
  return mu;
}

}  // namespace detail

// Water level mu with sum_i a_i^2(mu) == target. With Phi-whitened modes this
// normalizes Tr(Phi Q) to the target.
inline double water_level(const RVec& h, int K, double target) {
  return detail::bisect_water_level(h, K, target, RVec());
}

// Water level for a general linear functional sum_i c_i a_i^2(mu) == target,
// c_i >= 0. Used when the power target is Tr(T Q) for T != Phi.
inline double water_level_weighted(const RVec& h, int K, const RVec& weights,
                                   double target) {
  return detail::bisect_water_level(h, K, target, weights);
}

struct AssembledCovariance {
  CMat Q;
  ModeAllocation alloc;
  SortedSvd whitened_svd;  // of Pi^{-1/2} H Phi^{-1/2}
  CMat phi_inv_sqrt;
  int rank = 0;
};

// Q = Phi^{-1/2} [V]_{:,1:N} diag(a^2) [V]^H_{:,1:N} Phi^{-1/2} with
// a^2 = mode_powers(h, mu, K) and N the effective rank of the whitened
// channel. Tr(Phi Q) equals sum_i a_i^2.
inline AssembledCovariance assemble_covariance(const WaterfillProblem& problem,
                                               double mu) {
  if (!(mu > 0.0)) throw NonPositiveMu("assemble_covariance: mu must be positive");
  const CMat pi_is = psd_sqrt_pair(problem.Pi, true).inv_sqrt;
  const CMat phi_is = psd_sqrt_pair(problem.Phi, true).inv_sqrt;
  const CMat whitened = pi_is * problem.H * phi_is;
  const SortedSvd svd = sorted_svd(whitened);
  const int rank = effective_rank(svd.singular_values);

  AssembledCovariance out;
  out.whitened_svd = svd;
  out.phi_inv_sqrt = phi_is;
  out.rank = rank;
  out.alloc.whitened_singulars = svd.singular_values;
  out.alloc.mu = mu;
  out.alloc.mode_powers = mode_powers(svd.singular_values, mu, problem.K);
  for (Eigen::Index i = rank; i < out.alloc.mode_powers.size(); ++i)
    out.alloc.mode_powers(i) = 0.0;
  out.alloc.active_count = 0;
  for (Eigen::Index i = 0; i < out.alloc.mode_powers.size(); ++i)
    if (out.alloc.mode_powers(i) > 0.0) ++out.alloc.active_count;

  const Eigen::Index n = problem.Phi.rows();
  if (rank == 0) {
    out.Q = CMat::Zero(n, n);
    return out;
  }
  const CMat v_n = svd.V.leftCols(rank);
  const RVec a2 = out.alloc.mode_powers.head(rank);
  out.Q = hermitize(phi_is * v_n * a2.asDiagonal() * v_n.adjoint() * phi_is);
  return out;
}

struct KktResidual {
  double stationarity = 0.0;     // norm of the negative part of Psi, relative
  double complementarity = 0.0;  // |Tr(Psi Q)| / (1 + |Tr(Phi Q)|)
  CMat Psi;                      // reconstructed multiplier, clipped PSD
};

// Reconstructs Psi := mu*Phi - H^H Pi^{-1/2} (I + Pi^{-1/2} H Q H^H
// Pi^{-1/2})^{-K} Pi^{-1/2} H and reports how far (Q, mu) is from
// certifying the stationarity system. Diagnostic: reports, never rejects.
inline KktResidual kkt_residual(const WaterfillProblem& problem, const CMat& q,
                                double mu) {
  const CMat pi_is = psd_sqrt_pair(problem.Pi, true).inv_sqrt;
  const CMat wh = pi_is * problem.H;  // Pi^{-1/2} H
  const Eigen::Index m = problem.Pi.rows();
  const CMat inner = hermitize(CMat::Identity(m, m) + wh * q * wh.adjoint());
  // (I + ...)^{-K} via solving K times; dims are small.
  CMat inv = inner.ldlt().solve(CMat::Identity(m, m));
  CMat inv_k = inv;
  for (int k = 1; k < problem.K; ++k) inv_k = inv_k * inv;
  const CMat grad = hermitize(wh.adjoint() * inv_k * wh);
  CMat psi = hermitize(mu * problem.Phi - grad);

  const SortedEvd evd = sorted_evd(psi);
  double neg_norm2 = 0.0;
  const double lmax = evd.eigenvalues.size() ? std::abs(evd.eigenvalues(0)) : 0.0;
  RVec clipped = evd.eigenvalues;
  for (Eigen::Index i = 0; i < clipped.size(); ++i) {
    if (clipped(i) < 0.0) {
      neg_norm2 += clipped(i) * clipped(i);
      // eigenvalues in [-1e-10, 0) are round-off: clip so the returned Psi is
      // a usable PSD certificate whenever the residuals pass
      if (clipped(i) >= -1e-10) clipped(i) = 0.0;
    }
  }
  KktResidual out;
  out.Psi = hermitize(evd.U * clipped.cwiseMax(0.0).asDiagonal() * evd.U.adjoint());
  out.stationarity = std::sqrt(neg_norm2) / (1.0 + lmax);
  const double tr_psi_q = (psi * q).trace().real();
  const double tr_phi_q = (problem.Phi * q).trace().real();
  out.complementarity = std::abs(tr_psi_q) / (1.0 + std::abs(tr_phi_q));
  return out;
}

}  // namespace mimowf

#endif  // MIMOWF_WATERFILL_HPP

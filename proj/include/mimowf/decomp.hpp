#ifndef MIMOWF_DECOMP_HPP
#define MIMOWF_DECOMP_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "mimowf/complex_matrix.hpp"

namespace mimowf {

// SVD with singular values sorted non-increasing, U m-by-m and V n-by-n
// full unitary factors.
struct SortedSvd {
  CMat U;
  RVec singular_values;
  CMat V;

  CMat reconstruct() const {
    CMat sigma = CMat::Zero(U.cols(), V.cols());
    const Eigen::Index k = singular_values.size();
    for (Eigen::Index i = 0; i < k; ++i) sigma(i, i) = singular_values(i);
    return U * sigma * V.adjoint();
  }
};

inline SortedSvd sorted_svd(const CMat& m) {
  if (!all_finite(m)) throw InvalidInput("sorted_svd: non-finite input");
  Eigen::JacobiSVD<CMat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  // Eigen already returns singular values in decreasing order.
  return SortedSvd{svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

// Eigen-decomposition of a Hermitian matrix, eigenvalues non-increasing.
struct SortedEvd {
  CMat U;
  RVec eigenvalues;
};

inline SortedEvd sorted_evd(const CMat& a) {
  if (!all_finite(a)) throw InvalidInput("sorted_evd: non-finite input");
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(a));
  if (es.info() != Eigen::Success)
    throw InvalidInput("sorted_evd: eigendecomposition failed");
  const Eigen::Index n = a.rows();
  CMat u(n, n);
  RVec ev(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    u.col(i) = es.eigenvectors().col(n - 1 - i);
    ev(i) = es.eigenvalues()(n - 1 - i);
  }
  return SortedEvd{u, ev};
}

struct PsdSqrtPair {
  CMat sqrt;      // A^{1/2}, Hermitian PSD
  CMat inv_sqrt;  // A^{-1/2}; empty unless require_pd
  bool has_inverse = false;
};

// Hermitian square root (and inverse square root when require_pd).
// Throws SingularWeight when require_pd and the smallest eigenvalue is below
// dim * 1e-12 * lambda_max: a zero eigenvalue in a weight matrix leaves a
// direction unconstrained.
inline PsdSqrtPair psd_sqrt_pair(const CMat& a, bool require_pd) {
  const SortedEvd evd = sorted_evd(a);
  const Eigen::Index n = a.rows();
  const double lmax = n ? evd.eigenvalues(0) : 0.0;
  PsdSqrtPair out;
  RVec clipped = evd.eigenvalues.cwiseMax(0.0);
  if (require_pd) {
    const double floor = static_cast<double>(n) * 1e-12 * std::max(lmax, 0.0);
    if (n == 0 || evd.eigenvalues(n - 1) <= floor)
      throw SingularWeight("psd_sqrt_pair: matrix numerically singular");
    RVec inv_root = clipped.cwiseSqrt().cwiseInverse();
    out.inv_sqrt = hermitize(evd.U * inv_root.asDiagonal() * evd.U.adjoint());
    out.has_inverse = true;
  }
  out.sqrt = hermitize(evd.U * clipped.cwiseSqrt().asDiagonal() * evd.U.adjoint());
  return out;
}

// N = count of sigma_i > rel_tol * sigma_1 on a non-increasing vector.
inline int effective_rank(const RVec& singular_values, double rel_tol = 1e-12) {
  if (singular_values.size() == 0) return 0;
  const double s1 = singular_values(0);
  if (s1 <= 0.0) return 0;
  int n = 0;
  for (Eigen::Index i = 0; i < singular_values.size(); ++i)
    if (singular_values(i) > rel_tol * s1) ++n;
  return n;
}

}  // namespace mimowf

#endif  // MIMOWF_DECOMP_HPP

#ifndef MIMOWF_COMPLEX_MATRIX_HPP
#define MIMOWF_COMPLEX_MATRIX_HPP

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mimowf {

using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using Complex = std::complex<double>;

struct InvalidInput : std::runtime_error {
  explicit InvalidInput(const std::string& what) : std::runtime_error(what) {}
};

// A weight/noise matrix that must be positive definite is numerically singular.
// A zero eigenvalue in a weight matrix means an unconstrained direction.
struct SingularWeight : std::runtime_error {
  explicit SingularWeight(const std::string& what) : std::runtime_error(what) {}
};

struct NonPositiveMu : std::runtime_error {
  explicit NonPositiveMu(const std::string& what) : std::runtime_error(what) {}
};

struct AllZeroChannel : std::runtime_error {
  explicit AllZeroChannel(const std::string& what) : std::runtime_error(what) {}
};

inline bool all_finite(const CMat& m) {
  return m.allFinite();
}

// (A + A^H)/2: kills round-off drift before Hermitian decompositions.
inline CMat hermitize(const CMat& a) {
  return 0.5 * (a + a.adjoint());
}

inline bool is_hermitian(const CMat& a, double rel_tol = 1e-12) {
  if (a.rows() != a.cols()) return false;
  const double scale = a.norm();
  return (a - a.adjoint()).norm() <= rel_tol * std::max(scale, 1.0);
}

// Hermitian PSD check: A == A^H within rel_tol and
// lambda_min >= -abs_floor * max(lambda_max, 1).
inline bool is_hermitian_psd(const CMat& a, double rel_tol = 1e-12,
                             double eig_floor = 1e-10) {
  if (!is_hermitian(a, rel_tol)) return false;
  Eigen::SelfAdjointEigenSolver<CMat> es(hermitize(a),
                                         Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return false;
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  return lmin >= -eig_floor * std::max(lmax, 1.0);
}

inline double trace_real(const CMat& a) {
  return a.trace().real();
}

// <A, B> = Re Tr(A^H B); the Frobenius inner product on Hermitian matrices.
inline double herm_inner(const CMat& a, const CMat& b) {
  return (a.adjoint() * b).trace().real();
}

// --- repo-wide matrix text format -------------------------------------------
//
// One header line "m n", then m lines of n complex entries. Entries are
// "re+imj" tokens ("1.5-2j", "3", "0.25j"); a bare real is accepted.

inline Complex parse_complex_token(const std::string& tok) {
  if (tok.empty()) throw InvalidInput("empty complex token");
  std::string s = tok;
  bool imag_only = false;
  if (s.back() == 'j' || s.back() == 'i') {
    s.pop_back();
    imag_only = true;
  }
  // Split at the last +/- that is not part of an exponent and not leading.
  std::size_t split = std::string::npos;
  for (std::size_t k = s.size(); k-- > 1;) {
    const char c = s[k];
    if ((c == '+' || c == '-') && s[k - 1] != 'e' && s[k - 1] != 'E') {
      split = k;
      break;
    }
  }
  try {
    if (!imag_only) {
      return Complex(std::stod(s), 0.0);
    }
    if (split == std::string::npos) {
      // pure imaginary: "2j", "j", "-j"
      if (s.empty() || s == "+") return Complex(0.0, 1.0);
      if (s == "-") return Complex(0.0, -1.0);
      return Complex(0.0, std::stod(s));
    }
    const double re = std::stod(s.substr(0, split));
    std::string im = s.substr(split);
    if (im == "+") im = "1";
    if (im == "-") im = "-1";
    return Complex(re, std::stod(im));
  } catch (const std::exception&) {
    throw InvalidInput("bad complex token: " + tok);
  }
}

inline CMat parse_matrix(std::istream& in) {
  Eigen::Index m = 0, n = 0;
  if (!(in >> m >> n) || m <= 0 || n <= 0)
    throw InvalidInput("matrix header must be two positive integers");
  CMat out(m, n);
  std::string tok;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!(in >> tok)) throw InvalidInput("matrix body truncated");
      out(i, j) = parse_complex_token(tok);
    }
  return out;
}

inline CMat parse_matrix(const std::string& text) {
  std::istringstream in(text);
  return parse_matrix(in);
}

inline void format_matrix(std::ostream& out, const CMat& a) {
  out << a.rows() << ' ' << a.cols() << '\n';
  out.precision(17);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (j) out << ' ';
      const Complex z = a(i, j);
      out << z.real() << (z.imag() < 0 ? "" : "+") << z.imag() << 'j';
    }
    out << '\n';
  }
}

inline std::string format_matrix(const CMat& a) {
  std::ostringstream out;
  format_matrix(out, a);
  return out.str();
}

}  // namespace mimowf

#endif  // MIMOWF_COMPLEX_MATRIX_HPP

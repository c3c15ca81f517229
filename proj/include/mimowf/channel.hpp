#ifndef MIMOWF_CHANNEL_HPP
#define MIMOWF_CHANNEL_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

#include "mimowf/complex_matrix.hpp"
#include "mimowf/decomp.hpp"

namespace mimowf {

// splitmix64: decorrelates (master_seed, index) pairs into per-realization
// sub-seeds so a realization's draws do not depend on the realization count.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// mt19937_64 with a hand-rolled Box-Muller; std::normal_distribution is not
// bit-stable across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() {
    // 53-bit mantissa in [0,1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // CN(0, var): real and imaginary parts N(0, var/2)
  Complex cnormal(double var) {
    const double s = std::sqrt(var / 2.0);
    return Complex(s * normal(), s * normal());
  }

  CMat cgaussian(Eigen::Index rows, Eigen::Index cols, double var) {
    CMat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = cnormal(var);
    return m;
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Exponential correlation [R]_{i,j} = r^{|i-j|}, positive definite for
// r in [0, 1).
inline CMat exp_correlation(int n, double r) {
  if (n <= 0 || r < 0.0 || r >= 1.0)
    throw InvalidInput("exp_correlation: need n > 0 and r in [0,1)");
  CMat out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = std::pow(r, std::abs(i - j));
  return out;
}

struct KroneckerSpec {
  double r_t = 0.0;      // transmit correlation coefficient
  double r_r = 0.0;      // receive correlation coefficient
  int rx_dim = 0;
  int tx_dim = 0;
  double sigma_e2 = 0.0;  // per-element CSI error variance
  std::uint64_t seed = 0;
};

struct GeneratedChannel {
  CMat H_true;
  CMat H_hat;
  CMat R_R;  // receive correlation (unit diagonal)
  CMat R_T;  // transmit error factor, already scaled by sigma_e2:
             // E[dH X dH^H] = Tr(R_T X) R_R
};

// H_hat = R_R^{1/2} Hw_hat R_T^{1/2} with Hw_hat entries CN(0, 1-sigma_e2),
// dH likewise with variance sigma_e2, H_true = H_hat + dH. Every element of
// H_true has unit variance. sigma_e2 = 0 gives H_true == H_hat exactly and a
// zero error factor.
inline GeneratedChannel generate_channel(const KroneckerSpec& spec) {
  if (spec.rx_dim <= 0 || spec.tx_dim <= 0 || spec.sigma_e2 < 0.0 ||
      spec.sigma_e2 > 1.0)
    throw InvalidInput("generate_channel: invalid spec");
  Rng rng(spec.seed);
  const CMat r_r = exp_correlation(spec.rx_dim, spec.r_r);
  const CMat r_t = exp_correlation(spec.tx_dim, spec.r_t);
  const CMat r_r_sqrt = psd_sqrt_pair(r_r, false).sqrt;
  const CMat r_t_sqrt = psd_sqrt_pair(r_t, false).sqrt;

  GeneratedChannel out;
  out.R_R = r_r;
  out.R_T = spec.sigma_e2 * r_t;
  out.H_hat =
      r_r_sqrt * rng.cgaussian(spec.rx_dim, spec.tx_dim, 1.0 - spec.sigma_e2) *
      r_t_sqrt;
  if (spec.sigma_e2 > 0.0) {
    const CMat delta =
        r_r_sqrt * rng.cgaussian(spec.rx_dim, spec.tx_dim, spec.sigma_e2) *
        r_t_sqrt;
    out.H_true = out.H_hat + delta;
  } else {
    out.H_true = out.H_hat;
    out.R_T = CMat::Zero(spec.tx_dim, spec.tx_dim);
  }
  return out;
}

}  // namespace mimowf

#endif  // MIMOWF_CHANNEL_HPP

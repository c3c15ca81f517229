#include <catch2/catch_amalgamated.hpp>

#include "mimowf/channel.hpp"
#include "mimowf/complex_matrix.hpp"
#include "mimowf/decomp.hpp"

using namespace mimowf;

namespace {

CMat random_cmat(Rng& rng, int m, int n) { return rng.cgaussian(m, n, 1.0); }

CMat random_psd(Rng& rng, int n) {
  const CMat b = rng.cgaussian(n, n, 1.0);
  return hermitize(b * b.adjoint());
}

}  // namespace

TEST_CASE("sorted_svd identity") {
  const SortedSvd svd = sorted_svd(CMat::Identity(2, 2));
  CHECK(svd.singular_values(0) == Catch::Approx(1.0));
  CHECK(svd.singular_values(1) == Catch::Approx(1.0));
  CHECK((svd.U * svd.U.adjoint() - CMat::Identity(2, 2)).norm() < 1e-10);
  CHECK((svd.reconstruct() - CMat::Identity(2, 2)).norm() < 1e-10);
}

TEST_CASE("sorted_svd orders diag(1,2)") {
  CMat m = CMat::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = 2.0;
  const SortedSvd svd = sorted_svd(m);
  CHECK(svd.singular_values(0) == Catch::Approx(2.0));
  CHECK(svd.singular_values(1) == Catch::Approx(1.0));
  CHECK(std::abs(svd.V(1, 0)) == Catch::Approx(1.0));  // strong mode on axis 2
}

TEST_CASE("sorted_svd rejects non-finite input") {
  CMat m = CMat::Zero(2, 2);
  m(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sorted_svd(m), InvalidInput);
}

TEST_CASE("sorted_svd reconstruction and unitarity on random matrices") {
  Rng rng(1234);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + static_cast<int>(rng.uniform() * 8);
    const int n = 1 + static_cast<int>(rng.uniform() * 8);
    const CMat a = random_cmat(rng, m, n);
    const SortedSvd svd = sorted_svd(a);
    REQUIRE((svd.U.adjoint() * svd.U - CMat::Identity(m, m)).norm() < 1e-10);
    REQUIRE((svd.V.adjoint() * svd.V - CMat::Identity(n, n)).norm() < 1e-10);
    REQUIRE((svd.reconstruct() - a).norm() <= 1e-10 * std::max(1.0, a.norm()));
    for (Eigen::Index i = 0; i + 1 < svd.singular_values.size(); ++i)
      REQUIRE(svd.singular_values(i) >= svd.singular_values(i + 1));
  }
}

TEST_CASE("psd_sqrt_pair identity and analytic diagonal") {
  const PsdSqrtPair id = psd_sqrt_pair(CMat::Identity(3, 3), true);
  CHECK((id.sqrt - CMat::Identity(3, 3)).norm() < 1e-12);
  CHECK((id.inv_sqrt - CMat::Identity(3, 3)).norm() < 1e-12);

  CMat d = CMat::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 9.0;
  const PsdSqrtPair p = psd_sqrt_pair(d, true);
  CHECK(p.sqrt(0, 0).real() == Catch::Approx(2.0));
  CHECK(p.sqrt(1, 1).real() == Catch::Approx(3.0));
  CHECK(p.inv_sqrt(0, 0).real() == Catch::Approx(0.5));
  CHECK(p.inv_sqrt(1, 1).real() == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("psd_sqrt_pair random reconstruction") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 8);
    const CMat a = random_psd(rng, n);
    const PsdSqrtPair p = psd_sqrt_pair(a, false);
    REQUIRE(is_hermitian_psd(p.sqrt));
    REQUIRE((p.sqrt * p.sqrt - a).norm() <= 1e-10 * std::max(1.0, a.norm()));
  }
}

TEST_CASE("psd_sqrt_pair inverse identity when positive definite") {
  Rng rng(91);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform() * 6);
    CMat a = random_psd(rng, n);
    a += 0.1 * CMat::Identity(n, n);
    const PsdSqrtPair p = psd_sqrt_pair(a, true);
    REQUIRE(p.has_inverse);
    REQUIRE((p.inv_sqrt * a * p.inv_sqrt - CMat::Identity(n, n)).norm() < 1e-9);
  }
}

TEST_CASE("psd_sqrt_pair flags singular weights") {
  CMat s = CMat::Zero(2, 2);
  s(0, 0) = 1.0;
  CHECK_THROWS_AS(psd_sqrt_pair(s, true), SingularWeight);
  CHECK_NOTHROW(psd_sqrt_pair(s, false));
}

TEST_CASE("effective_rank basics") {
  RVec v(3);
  v << 2, 1, 0;
  CHECK(effective_rank(v, 1e-12) == 2);
  RVec w(2);
  w << 1, 1e-15;
  CHECK(effective_rank(w, 1e-12) == 1);
  RVec z = RVec::Zero(2);
  CHECK(effective_rank(z, 1e-12) == 0);
}

TEST_CASE("effective_rank monotone in tolerance") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 8);
    RVec v(n);
    for (int i = 0; i < n; ++i) v(i) = std::pow(10.0, -3.0 * rng.uniform() * i);
    std::sort(v.data(), v.data() + n, std::greater<double>());
    int prev = n + 1;
    for (double tol : {1e-15, 1e-12, 1e-9, 1e-6, 1e-3, 1e-1}) {
      const int r = effective_rank(v, tol);
      REQUIRE(r <= prev);
      prev = r;
    }
  }
}

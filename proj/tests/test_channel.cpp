#include <catch2/catch_amalgamated.hpp>

#include "mimowf/channel.hpp"

using namespace mimowf;

TEST_CASE("exponential correlation entries") {
  const CMat r = exp_correlation(4, 0.5);
  CHECK(r(0, 0).real() == Catch::Approx(1.0));
  CHECK(r(0, 2).real() == Catch::Approx(0.25));
  CHECK(r(3, 1).real() == Catch::Approx(0.25));
  CHECK(is_hermitian_psd(r));
  CHECK_THROWS_AS(exp_correlation(4, 1.0), InvalidInput);
}

TEST_CASE("zero error variance gives exact channel knowledge") {
  KroneckerSpec spec{0.4, 0.5, 4, 4, 0.0, 99};
  const GeneratedChannel g = generate_channel(spec);
  CHECK((g.H_true - g.H_hat).norm() == 0.0);
  CHECK(g.R_T.norm() == 0.0);
}

TEST_CASE("generation is deterministic in the seed") {
  KroneckerSpec spec{0.3, 0.6, 3, 5, 0.1, 1234};
  const GeneratedChannel a = generate_channel(spec);
  const GeneratedChannel b = generate_channel(spec);
  CHECK((a.H_true - b.H_true).norm() == 0.0);
  spec.seed = 1235;
  const GeneratedChannel c = generate_channel(spec);
  CHECK((a.H_true - c.H_true).norm() != 0.0);
}

TEST_CASE("uncorrelated entries have unit sample variance") {
  double sum2 = 0.0;
  std::size_t count = 0;
  for (int i = 0; i < 2500; ++i) {
    KroneckerSpec spec{0.0, 0.0, 2, 2, 0.2, derive_seed(777, i)};
    const GeneratedChannel g = generate_channel(spec);
    sum2 += g.H_true.squaredNorm();
    count += 4;
  }
  const double var = sum2 / static_cast<double>(count);
  CHECK(var == Catch::Approx(1.0).epsilon(0.05));
}

TEST_CASE("error factor reproduces the Kronecker second moment") {
  // E[dH X dH^H] == Tr(R_T X) R_R, checked by Monte Carlo on X = I
  KroneckerSpec proto{0.4, 0.5, 3, 3, 0.3, 0};
  const CMat r_r = exp_correlation(3, 0.5);
  CMat acc = CMat::Zero(3, 3);
  const int draws = 4000;
  for (int i = 0; i < draws; ++i) {
    KroneckerSpec spec = proto;
    spec.seed = derive_seed(31337, i);
    const GeneratedChannel g = generate_channel(spec);
    const CMat dh = g.H_true - g.H_hat;
    acc += dh * dh.adjoint();
  }
  acc /= static_cast<double>(draws);
  KroneckerSpec spec = proto;
  spec.seed = 1;
  const GeneratedChannel g = generate_channel(spec);
  const CMat expected = g.R_T.trace().real() * r_r;
  CHECK((acc - expected).norm() <= 0.1 * expected.norm());
}

TEST_CASE("sub-seed derivation decorrelates indices") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

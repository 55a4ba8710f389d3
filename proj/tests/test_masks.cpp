#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace pdsbss;
using namespace pdsbss::test;

namespace {

bool in_unit_interval(const MaskTensor& m) {
  for (double v : m.flat()) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return true;
}

RealTensor powers(const ComplexTensor& z) {
  RealTensor p(z.channels(), z.frames(), z.bins());
  for (std::size_t i = 0; i < z.size(); ++i) p.flat()[i] = std::norm(z.flat()[i]);
  return p;
}

}  // namespace

TEST(MaskL1, ClosedFormCases) {
  ComplexTensor z(1, 1, 4);
  z(0, 0, 0) = 2.0;
  z(0, 0, 1) = Complex(0.0, 0.5);
  z(0, 0, 2) = 1.0;
  z(0, 0, 3) = 0.0;
  const auto m = mask_l1(z, 1.0);
  EXPECT_DOUBLE_EQ(m(0, 0, 0), 0.5);
  EXPECT_EQ(m(0, 0, 1), 0.0);
  EXPECT_EQ(m(0, 0, 2), 0.0);
  EXPECT_EQ(m(0, 0, 3), 0.0);
  const auto ones = mask_l1(z, 0.0);
  EXPECT_EQ(ones(0, 0, 0), 1.0);
  EXPECT_EQ(ones(0, 0, 1), 1.0);
}

TEST(MaskL1, MaskTimesInputIsProx) {
  std::mt19937_64 rng(1);
  const auto z = random_tensor(2, 4, 5, rng);
  const auto m = mask_l1(z, 0.7);
  const auto p = prox_l1(z, 0.7);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(m.flat()[i] * z.flat()[i], p.flat()[i]);
}

TEST(MaskL21, ClosedFormAndGroups) {
  ComplexTensor z(1, 1, 2);
  z(0, 0, 0) = 3.0;
  z(0, 0, 1) = 4.0;
  const auto half = mask_l21(z, 2.5);
  EXPECT_DOUBLE_EQ(half(0, 0, 0), 0.5);
  EXPECT_DOUBLE_EQ(half(0, 0, 1), 0.5);
  const auto ones = mask_l21(z, 0.0);
  for (double v : ones.flat()) EXPECT_EQ(v, 1.0);
  std::mt19937_64 rng(2);
  const auto single = random_tensor(2, 3, 1, rng);
  EXPECT_LE(max_abs_diff(mask_l21(single, 0.4).flat(), mask_l1(single, 0.4).flat()), 1e-15);
  const auto w = random_tensor(2, 3, 6, rng);
  const auto m = mask_l21(w, 1.0);
  const auto p = prox_l21(w, 1.0);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_LE(std::abs(m.flat()[i] * w.flat()[i] - p.flat()[i]), 1e-15);
}

TEST(MaskModelIva, ClosedFormCases) {
  RealTensor v(1, 1, 3);
  v(0, 0, 0) = 0.5;
  v(0, 0, 1) = 0.0;
  v(0, 0, 2) = 1.5;
  const auto m = mask_model_iva(v, 0.5);
  EXPECT_DOUBLE_EQ(m(0, 0, 0), 0.5);
  EXPECT_EQ(m(0, 0, 1), 0.0);
  EXPECT_DOUBLE_EQ(m(0, 0, 2), 0.75);
}

TEST(Cepstrum, ConstantSpectrumIsDcOnly) {
  const RealTensor x(1, 2, 8, 1.7);
  const auto c = cepstrum_forward(x, 8);
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_NEAR(c(0, t, 0).real(), 1.7, 1e-15);
    for (std::size_t q = 1; q < 8; ++q) EXPECT_LE(std::abs(c(0, t, q)), 1e-15);
  }
}

TEST(Cepstrum, DeltaInverseIsConstant) {
  CepstrumTensor c(1, 1, 6);
  c(0, 0, 0) = 2.5;
  const auto x = cepstrum_inverse(c, 6);
  for (double v : x.flat()) EXPECT_NEAR(v, 2.5, 1e-15);
  const auto zero = cepstrum_inverse(CepstrumTensor(2, 2, 6), 6);
  for (double v : zero.flat()) EXPECT_EQ(v, 0.0);
}

TEST(Cepstrum, RoundTripExact) {
  std::mt19937_64 rng(3);
  for (std::size_t F : {5u, 8u, 33u, 1025u}) {
    const auto x = random_real(2, 3, F, rng, -4.0, 4.0);
    for (std::size_t C : {F, 2 * F}) {
      const auto y = cepstrum_inverse(cepstrum_forward(x, C), F);
      EXPECT_LE(max_abs_diff(y.flat(), x.flat()), 1e-12) << F << " " << C;
    }
  }
}

TEST(Cepstrum, MatchesNaiveDft) {
  std::mt19937_64 rng(4);
  const std::size_t F = 7;
  const auto x = random_real(2, 2, F, rng, -1.0, 1.0);
  for (std::size_t C : {F, 2 * F + 1}) {
    const auto c = cepstrum_forward(x, C);
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t t = 0; t < 2; ++t) {
        for (std::size_t q = 0; q < C; ++q) {
          Complex acc{};
          for (std::size_t f = 0; f < F; ++f) {
            acc += x(n, t, f) * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(q * f) / static_cast<double>(C));
          }
          EXPECT_LE(std::abs(c(n, t, q) - acc / static_cast<double>(F)), 1e-12);
        }
      }
    }
    // Inverse against the same naive sum.
    const auto cep = random_tensor(1, 1, C, rng);
    const auto back = cepstrum_inverse(cep, F);
    for (std::size_t f = 0; f < F; ++f) {
      Complex acc{};
      for (std::size_t q = 0; q < C; ++q) {
        acc += cep(0, 0, q) * std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(q * f) / static_cast<double>(C));
      }
      EXPECT_LE(std::abs(back(0, 0, f) - acc.real() * static_cast<double>(F) / static_cast<double>(C)), 1e-12);
    }
  }
}

TEST(Cepstrum, ShortQuefrencyRejected) {
  EXPECT_THROW(cepstrum_forward(RealTensor(1, 1, 8), 4), Error);
  EXPECT_THROW(cepstrum_inverse(CepstrumTensor(1, 1, 4), 8), Error);
}

TEST(CosineShrink, FixedPoints) {
  const double lambda = 0.37;
  CepstrumTensor c(1, 1, 5);
  c(0, 0, 0) = 0.0;
  c(0, 0, 1) = lambda;
  c(0, 0, 2) = Complex(0.0, -lambda);
  c(0, 0, 3) = 2.0 * lambda;
  c(0, 0, 4) = 5.0 * lambda;
  for (int kappa : {1, 2, 3}) {
    const auto m = cosine_shrink_mask(c, lambda, kappa);
    EXPECT_EQ(m(0, 0, 0), 0.0) << kappa;
    EXPECT_EQ(m(0, 0, 1), 0.5) << kappa;
    EXPECT_EQ(m(0, 0, 2), 0.5) << kappa;
    EXPECT_EQ(m(0, 0, 3), 1.0) << kappa;
    EXPECT_EQ(m(0, 0, 4), 1.0) << kappa;
  }
  const auto ones = cosine_shrink_mask(c, 0.0, 3);
  for (double v : ones.flat()) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(cosine_shrink_mask(c, lambda, 0), Error);
}

TEST(CosineShrink, MonotoneAndSharperWithKappa) {
  const double lambda = 1.0;
  CepstrumTensor c(1, 1, 41);
  for (std::size_t i = 0; i < 41; ++i) c(0, 0, i) = 0.05 * static_cast<double>(i);
  const auto m1 = cosine_shrink_mask(c, lambda, 1);
  const auto m3 = cosine_shrink_mask(c, lambda, 3);
  for (std::size_t i = 1; i < 41; ++i) {
    EXPECT_GE(m1(0, 0, i), m1(0, 0, i - 1));
    EXPECT_GE(m3(0, 0, i), m3(0, 0, i - 1));
    const double u = 0.05 * static_cast<double>(i);
    if (u < lambda) {
      EXPECT_LE(m3(0, 0, i), m1(0, 0, i) + 1e-15);
    } else if (u > lambda) {
      EXPECT_GE(m3(0, 0, i), m1(0, 0, i) - 1e-15);
    }
  }
}

TEST(WienerLike, ClosedFormCases) {
  RealTensor p(2, 1, 3);
  p(0, 0, 0) = p(1, 0, 0) = 2.0;
  p(0, 0, 1) = 3.0;
  p(1, 0, 1) = 0.0;
  std::size_t uniform = 0;
  const auto m = wiener_like_mask(p, 1.0, &uniform);
  EXPECT_EQ(m(0, 0, 0), 0.5);
  EXPECT_EQ(m(0, 0, 1), 1.0);
  EXPECT_EQ(m(1, 0, 1), 0.0);
  EXPECT_EQ(m(0, 0, 2), 0.5);  // zero total power
  EXPECT_EQ(uniform, 1u);
  EXPECT_NEAR(wiener_like_mask(p, 0.5)(0, 0, 0), std::sqrt(0.5), 1e-15);
  EXPECT_THROW(wiener_like_mask(p, 0.0), Error);
}

TEST(Masks, RandomInputsStayInUnitInterval) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> scale_dist(1e-3, 1e3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t N = 2 + trial % 2, T = 1 + trial % 4, F = 2 + trial % 9;
    const auto z = random_tensor(N, T, F, rng, scale_dist(rng));
    const double lambda = 0.01 * static_cast<double>(trial % 30);
    ASSERT_TRUE(in_unit_interval(mask_l1(z, lambda)));
    ASSERT_TRUE(in_unit_interval(mask_l21(z, lambda)));
    ASSERT_TRUE(in_unit_interval(mask_model_iva(powers(z), lambda)));
    ASSERT_TRUE(in_unit_interval(wiener_like_mask(powers(z), 1.0 / static_cast<double>(N))));
    HvaConfig cfg;
    cfg.lambda = lambda;
    cfg.kappa = 1 + trial % 3;
    cfg.quefrency_length = trial % 2 == 0 ? 0 : 2 * F;
    ASSERT_TRUE(in_unit_interval(hva_mask(z, cfg))) << trial;
  }
}

TEST(Hva, IdenticalSourcesGiveUniformValue) {
  std::mt19937_64 rng(6);
  for (std::size_t N : {2u, 3u}) {
    const auto one = random_tensor(1, 4, 16, rng);
    ComplexTensor z(N, 4, 16);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t t = 0; t < 4; ++t) std::copy_n(one.row(0, t).begin(), 16, z.row(n, t).begin());
    }
    const double expected = std::pow(1.0 / static_cast<double>(N), 1.0 / static_cast<double>(N));
    const auto m = hva_mask(z, HvaConfig{});
    for (double v : m.flat()) EXPECT_NEAR(v, expected, 1e-12);
  }
  EXPECT_NEAR(std::sqrt(0.5), 0.7071, 1e-4);
}

TEST(Hva, NoThresholdNoFloorIsWienerOfPowers) {
  std::mt19937_64 rng(7);
  for (std::size_t N : {2u, 3u}) {
    const auto z = random_tensor(N, 5, 12, rng);
    HvaConfig cfg;
    cfg.lambda = 0.0;
    cfg.epsilon = 0.0;
    const auto m = hva_mask(z, cfg);
    const auto w = wiener_like_mask(powers(z), 1.0 / static_cast<double>(N));
    EXPECT_LE(max_abs_diff(m.flat(), w.flat()), 1e-9);
  }
}

TEST(Hva, FrameScaleInvariance) {
  std::mt19937_64 rng(8);
  auto z = random_tensor(2, 3, 16, rng);
  HvaConfig cfg;
  cfg.epsilon = 0.0;
  const auto before = hva_mask(z, cfg);
  for (std::size_t n = 0; n < 2; ++n) {
    for (auto& v : z.row(n, 1)) v *= 10.0;
  }
  const auto after = hva_mask(z, cfg);
  EXPECT_LE(max_abs_diff(before.flat(), after.flat()), 1e-9);
}

TEST(Hva, ZeroInputWithZeroFloorStaysFinite) {
  HvaConfig cfg;
  cfg.epsilon = 0.0;
  const auto m = hva_mask(ComplexTensor(2, 2, 8), cfg);
  EXPECT_TRUE(in_unit_interval(m));
}

TEST(Hva, CepstrumThresholdEmphasizesHarmonicPeaks) {
  // Source 0 is a harmonic comb, source 1 flat noise of equal total energy.
  std::mt19937_64 rng(9);
  const std::size_t F = 128, period = 8;
  ComplexTensor z(2, 1, F);
  std::normal_distribution<double> normal(0.0, 0.05);
  for (std::size_t f = 0; f < F; ++f) {
    z(0, 0, f) = (f % period == 0 ? 4.0 : 0.02) + normal(rng);
    z(1, 0, f) = 1.0 + normal(rng);
  }
  const auto m = hva_mask(z, HvaConfig{});
  double peaks = 0.0, valleys = 0.0;
  for (std::size_t f = 0; f < F; ++f) (f % period == 0 ? peaks : valleys) += m(0, 0, f);
  peaks /= static_cast<double>(F / period);
  valleys /= static_cast<double>(F - F / period);
  EXPECT_GT(peaks, 0.8);
  EXPECT_LT(valleys, 0.5);
}

TEST(Hva, InvalidConfigRejected) {
  const ComplexTensor z(2, 1, 4);
  HvaConfig bad;
  bad.kappa = 0;
  EXPECT_THROW(hva_mask(z, bad), Error);
  bad = HvaConfig{};
  bad.quefrency_length = 2;
  EXPECT_THROW(hva_mask(z, bad), Error);
  bad = HvaConfig{};
  bad.gamma = -1.0;
  EXPECT_THROW(hva_mask(z, bad), Error);
  ComplexTensor nan(2, 1, 4);
  nan(0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(hva_mask(nan, HvaConfig{}), Error);
}

TEST(SpectralSubtraction, FloorsAndNonNegative) {
  std::mt19937_64 rng(10);
  const auto x = random_tensor(2, 20, 5, rng);
  const auto v = spectral_subtraction_variance(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_GE(v.flat()[i], 0.01 * std::norm(x.flat()[i]) - 1e-15);
    EXPECT_LE(v.flat()[i], std::norm(x.flat()[i]) + 1e-15);
  }
}

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace pdsbss;
using namespace pdsbss::test;

namespace {

ComplexTensor scalar(Complex v) {
  ComplexTensor z(1, 1, 1);
  z(0, 0, 0) = v;
  return z;
}

Complex first(const ComplexTensor& z) { return z(0, 0, 0); }

}  // namespace

TEST(ProxL1, ClosedFormCases) {
  EXPECT_EQ(first(prox_l1(scalar(3.0), 1.0)), Complex(2.0));
  EXPECT_EQ(first(prox_l1(scalar(Complex(0.0, -4.0)), 1.0)), Complex(0.0, -3.0));
  EXPECT_EQ(first(prox_l1(scalar(Complex(0.6, 0.8)), 1.0)), Complex{});
  EXPECT_EQ(first(prox_l1(scalar(0.5), 1.0)), Complex{});
  EXPECT_EQ(first(prox_l1(scalar(0.0), 1.0)), Complex{});
  EXPECT_THROW(prox_l1(scalar(1.0), -1.0), Error);
}

TEST(ProxL1, MinimizesProxObjective) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  const double lambda = 0.7;
  const auto z = random_tensor(2, 4, 5, rng);
  const auto p = prox_l1(z, lambda);
  auto cost = [&](Complex x, Complex zi) { return lambda * std::abs(x) + 0.5 * std::norm(x - zi); };
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double best = cost(p.flat()[i], z.flat()[i]);
    for (int k = 0; k < 50; ++k) {
      const Complex trial = p.flat()[i] + 0.1 * Complex(normal(rng), normal(rng));
      EXPECT_LE(best, cost(trial, z.flat()[i]) + 1e-14);
    }
  }
}

TEST(ProxL1, MoreauDecomposition) {
  // z = prox_{lambda |.|}(z) + lambda * proj_{|u| <= 1}(z / lambda)
  std::mt19937_64 rng(2);
  const double lambda = 0.9;
  const auto z = random_tensor(2, 3, 4, rng);
  const auto p = prox_l1(z, lambda);
  for (std::size_t i = 0; i < z.size(); ++i) {
    Complex u = z.flat()[i] / lambda;
    if (std::abs(u) > 1.0) u /= std::abs(u);
    EXPECT_LE(std::abs(p.flat()[i] + lambda * u - z.flat()[i]), 1e-14);
  }
}

TEST(ProxL21, ClosedFormGroup) {
  ComplexTensor z(1, 1, 2);
  z(0, 0, 0) = 3.0;
  z(0, 0, 1) = 4.0;
  const auto zero = prox_l21(z, 5.0);
  EXPECT_EQ(zero(0, 0, 0), Complex{});
  EXPECT_EQ(zero(0, 0, 1), Complex{});
  const auto half = prox_l21(z, 2.5);
  EXPECT_NEAR(half(0, 0, 0).real(), 1.5, 1e-15);
  EXPECT_NEAR(half(0, 0, 1).real(), 2.0, 1e-15);
}

TEST(ProxL21, SingleBinEqualsL1) {
  std::mt19937_64 rng(3);
  const auto z = random_tensor(3, 6, 1, rng);
  EXPECT_LE(max_abs_diff(prox_l21(z, 0.8).flat(), prox_l1(z, 0.8).flat()), 1e-15);
}

TEST(ProxL21, SmallGroupZeroed) {
  std::mt19937_64 rng(4);
  auto z = random_tensor(1, 1, 5, rng);
  double energy = 0.0;
  for (const auto& v : z.flat()) energy += std::norm(v);
  const auto p = prox_l21(z, std::sqrt(energy) + 1e-9);
  for (const auto& v : p.flat()) EXPECT_EQ(v, Complex{});
}

TEST(PShrinkage, ReducesToL1AtPOne) {
  std::mt19937_64 rng(5);
  const auto z = random_tensor(2, 5, 6, rng);
  EXPECT_LE(max_abs_diff(p_shrinkage(z, 0.6, 1.0).flat(), prox_l1(z, 0.6).flat()), 1e-15);
}

TEST(PShrinkage, ClosedForm) {
  EXPECT_NEAR(first(p_shrinkage(scalar(2.0), 1.0, 0.0)).real(), 1.5, 1e-15);
  for (double p : {-1.0, 0.0, 0.5, 1.0}) EXPECT_EQ(first(p_shrinkage(scalar(Complex(0.3, -0.4)), 0.5, p)), Complex{});
  EXPECT_THROW(p_shrinkage(scalar(1.0), 1.0, 1.5), Error);
}

TEST(SocialShrinkage, DeltaKernelEqualsL1) {
  std::mt19937_64 rng(6);
  const auto z = random_tensor(2, 4, 7, rng);
  EXPECT_LE(max_abs_diff(social_shrinkage(z, 0.5, SocialKernel::delta()).flat(), prox_l1(z, 0.5).flat()), 1e-15);
}

TEST(SocialShrinkage, FullBandKernelEqualsL21) {
  std::mt19937_64 rng(7);
  const std::size_t F = 6;
  const auto z = random_tensor(2, 3, F, rng);
  const SocialKernel band{Eigen::MatrixXd::Ones(1, 2 * F - 1)};
  EXPECT_LE(max_abs_diff(social_shrinkage(z, 1.1, band).flat(), prox_l21(z, 1.1).flat()), 1e-14);
}

TEST(SocialShrinkage, MatchesNaiveConvolution) {
  std::mt19937_64 rng(8);
  const std::size_t T = 5, F = 6;
  const auto z = random_tensor(2, T, F, rng);
  const double lambda = 1.3;
  const auto out = social_shrinkage(z, lambda, SocialKernel{Eigen::MatrixXd::Ones(3, 3)});
  for (std::size_t n = 0; n < 2; ++n) {
    // Zero-padded copy of |z|^2, then a plain 3x3 box sum.
    std::vector<std::vector<double>> padded(T + 2, std::vector<double>(F + 2, 0.0));
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) padded[t + 1][f + 1] = std::norm(z(n, t, f));
    }
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) {
        double box = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
          for (std::size_t j = 0; j < 3; ++j) box += padded[t + i][f + j];
        }
        const double factor = std::max(0.0, 1.0 - lambda / std::sqrt(box));
        EXPECT_LE(std::abs(out(n, t, f) - factor * z(n, t, f)), 1e-14);
      }
    }
  }
}

TEST(SocialShrinkage, InvalidKernelRejected) {
  std::mt19937_64 rng(9);
  const auto z = random_tensor(1, 2, 2, rng);
  EXPECT_THROW(social_shrinkage(z, 1.0, SocialKernel{Eigen::MatrixXd(0, 0)}), Error);
  EXPECT_THROW(social_shrinkage(z, 1.0, SocialKernel{-Eigen::MatrixXd::Ones(1, 1)}), Error);
}

TEST(ProxWeightedL2, ClosedFormCases) {
  std::mt19937_64 rng(10);
  const auto z = random_tensor(1, 3, 3, rng);
  const double lambda = 0.4;
  const auto half = prox_weighted_l2(z, RealTensor(1, 3, 3, lambda), lambda);
  const auto zero = prox_weighted_l2(z, RealTensor(1, 3, 3, 0.0), lambda);
  const auto same = prox_weighted_l2(z, RealTensor(1, 3, 3, 1e12 * lambda), lambda);
  for (std::size_t i = 0; i < z.size(); ++i) {
    EXPECT_LE(std::abs(half.flat()[i] - 0.5 * z.flat()[i]), 1e-15);
    EXPECT_EQ(zero.flat()[i], Complex{});
    EXPECT_LE(std::abs(same.flat()[i] - z.flat()[i]), 1e-10 * std::abs(z.flat()[i]));
  }
}

TEST(ProxWeightedL2, StationaryPoint) {
  // d/dx [(lambda/2)|x|^2/v + |x - z|^2/2] = 0
  std::mt19937_64 rng(11);
  const auto z = random_tensor(2, 3, 4, rng);
  const auto v = random_real(2, 3, 4, rng, 0.1, 5.0);
  const double lambda = 0.7;
  const auto p = prox_weighted_l2(z, v, lambda);
  for (std::size_t i = 0; i < z.size(); ++i) {
    EXPECT_LE(std::abs(lambda * p.flat()[i] / v.flat()[i] + p.flat()[i] - z.flat()[i]), 1e-14);
  }
}

TEST(ProxLogdet, ScalarClosedForm) {
  EXPECT_DOUBLE_EQ(prox_neg_log(3.0, 4.0), 4.0);
  EXPECT_DOUBLE_EQ(prox_neg_log(0.0, 1.0), 1.0);
}

TEST(ProxLogdet, ZeroMatrixGoesToIdentity) {
  const auto out = prox_logdet(DemixingStack(2, 2, 2), 1.0);
  for (std::size_t f = 0; f < 2; ++f) EXPECT_TRUE(Eigen::MatrixXcd(out.matricize(f)).isIdentity(0.0));
  const auto scaled = prox_logdet(DemixingStack(1, 3, 3), 4.0);
  EXPECT_TRUE((Eigen::MatrixXcd(scaled.matricize(0)) / 2.0).isIdentity(0.0));
}

TEST(ProxLogdet, SingularValueOptimality) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> mu_dist(0.05, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t N = 2 + trial % 2;
    const double mu = mu_dist(rng);
    const auto w = random_stack(4, N, N, rng);
    const auto out = prox_logdet(w, mu);
    for (std::size_t f = 0; f < 4; ++f) {
      const Eigen::MatrixXcd W = w.matricize(f);
      Eigen::JacobiSVD<Eigen::MatrixXcd> in_svd(W, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Eigen::VectorXd out_sigma = Eigen::JacobiSVD<Eigen::MatrixXcd>(Eigen::MatrixXcd(out.matricize(f))).singularValues();
      for (Eigen::Index i = 0; i < out_sigma.size(); ++i) {
        const double s = in_svd.singularValues()(i), sp = out_sigma(i);
        EXPECT_LE(std::abs(sp * (sp - s) - mu), 1e-12 * std::max(1.0, sp * sp));
        EXPECT_GE(sp, std::sqrt(mu) * (1.0 - 1e-14));
      }
      // Recompose from the input's singular vectors.
      Eigen::VectorXd target = in_svd.singularValues();
      for (Eigen::Index i = 0; i < target.size(); ++i) target(i) = prox_neg_log(target(i), mu);
      const Eigen::MatrixXcd recomposed = in_svd.matrixU() * target.asDiagonal() * in_svd.matrixV().adjoint();
      EXPECT_LE((recomposed - Eigen::MatrixXcd(out.matricize(f))).norm(), 1e-10);
    }
  }
}

TEST(ProxLogdet, MatchesPolarOracle) {
  // prox(W) = W g(W^H W), g(l) = prox_neg_log(sqrt l) / sqrt l, via a Hermitian eigensolver.
  std::mt19937_64 rng(13);
  const double mu = 0.8;
  const auto w = random_stack(5, 3, 3, rng);
  const auto out = prox_logdet(w, mu);
  for (std::size_t f = 0; f < 5; ++f) {
    const Eigen::MatrixXcd W = w.matricize(f);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(W.adjoint() * W);
    Eigen::VectorXd g = eig.eigenvalues();
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double s = std::sqrt(std::max(g(i), 0.0));
      g(i) = prox_neg_log(s, mu) / s;
    }
    const Eigen::MatrixXcd oracle = W * eig.eigenvectors() * g.asDiagonal() * eig.eigenvectors().adjoint();
    EXPECT_LE((oracle - Eigen::MatrixXcd(out.matricize(f))).norm(), 1e-10);
  }
}

TEST(ProxLogdet, RejectsNonPositiveMu) {
  EXPECT_THROW(prox_logdet(DemixingStack::identity(1, 2), 0.0), Error);
}

TEST(ProxLogdet, NonFiniteBlocksStayNonFinite) {
  DemixingStack w = DemixingStack::identity(3, 2);
  w.matricize(1)(0, 1) = Complex(std::numeric_limits<double>::quiet_NaN(), 0.0);
  w.matricize(2)(1, 1) = Complex(std::numeric_limits<double>::infinity(), 0.0);
  const DemixingStack p = prox_logdet(w, 1.0);
  EXPECT_TRUE(p.matricize(0).allFinite());
  EXPECT_FALSE(p.matricize(1).allFinite());
  EXPECT_FALSE(p.matricize(2).allFinite());
}

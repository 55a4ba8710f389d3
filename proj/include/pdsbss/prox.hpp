#pragma once

#include <limits>

#include <Eigen/SVD>

#include "pdsbss/linops.hpp"

namespace pdsbss {

namespace detail {

inline double positive_part(double v) { return v > 0.0 ? v : 0.0; }

/// (1 - lambda / magnitude)_+, defined as 0 at magnitude 0.
inline double shrink_factor(double magnitude, double lambda) {
  if (magnitude <= 0.0) return 0.0;
  return positive_part(1.0 - lambda / magnitude);
}

inline void require_nonnegative(double lambda, const char* what) {
  if (!(lambda >= 0.0)) throw Error(std::string(what) + ": threshold must be nonnegative");
}

}  // namespace detail

/// Entrywise soft threshold, the prox of lambda * ||.||_1.
inline ComplexTensor prox_l1(const ComplexTensor& z, double lambda) {
  detail::require_nonnegative(lambda, "prox_l1");
  ComplexTensor out = z;
  for (auto& v : out.flat()) v *= detail::shrink_factor(std::abs(v), lambda);
  return out;
}

/// Group threshold over each source/frame frequency vector, the prox of
/// lambda * ||.||_{2,1}.
inline ComplexTensor prox_l21(const ComplexTensor& z, double lambda) {
  detail::require_nonnegative(lambda, "prox_l21");
  ComplexTensor out = z;
  for (std::size_t n = 0; n < z.channels(); ++n) {
    for (std::size_t t = 0; t < z.frames(); ++t) {
      auto row = out.row(n, t);
      double energy = 0.0;
      for (const auto& v : row) energy += std::norm(v);
      const double factor = detail::shrink_factor(std::sqrt(energy), lambda);
      for (auto& v : row) v *= factor;
    }
  }
  return out;
}

/// p-shrinkage: (1 - lambda^{2-p} / |z|^{2-p})_+ z. Reduces to prox_l1 at p = 1.
inline ComplexTensor p_shrinkage(const ComplexTensor& z, double lambda, double p) {
  detail::require_nonnegative(lambda, "p_shrinkage");
  if (!(p <= 1.0)) throw Error("p_shrinkage: p must be <= 1");
  const double q = 2.0 - p;
  const double lq = std::pow(lambda, q);
  ComplexTensor out = z;
  for (auto& v : out.flat()) {
    const double mag = std::abs(v);
    v *= mag > 0.0 ? detail::positive_part(1.0 - lq / std::pow(mag, q)) : 0.0;
  }
  return out;
}

/// Nonnegative 2-D kernel over (frame offset, bin offset), centred at
/// (rows/2, cols/2).
struct SocialKernel {
  Eigen::MatrixXd weights;

  static SocialKernel delta() { return {Eigen::MatrixXd::Ones(1, 1)}; }

  void validate() const {
    if (weights.size() == 0) throw Error("social kernel is empty");
    if (!weights.allFinite() || (weights.array() < 0.0).any()) throw Error("social kernel must be finite and nonnegative");
  }
};

/// Neighbourhood energy (h * |z|^2)[n,t,f] with zero padding at the borders.
inline RealTensor neighbourhood_energy(const ComplexTensor& z, const SocialKernel& kernel) {
  kernel.validate();
  const auto kt = static_cast<long>(kernel.weights.rows());
  const auto kf = static_cast<long>(kernel.weights.cols());
  const long ct = kt / 2, cf = kf / 2;
  const auto T = static_cast<long>(z.frames());
  const auto F = static_cast<long>(z.bins());
  RealTensor out(z.channels(), z.frames(), z.bins());
  for (std::size_t n = 0; n < z.channels(); ++n) {
    for (long t = 0; t < T; ++t) {
      for (long f = 0; f < F; ++f) {
        double acc = 0.0;
        for (long i = 0; i < kt; ++i) {
          const long tt = t + i - ct;
          if (tt < 0 || tt >= T) continue;
          for (long j = 0; j < kf; ++j) {
            const long ff = f + j - cf;
            if (ff < 0 || ff >= F) continue;
            acc += kernel.weights(i, j) * std::norm(z(n, static_cast<std::size_t>(tt), static_cast<std::size_t>(ff)));
          }
        }
        out(n, static_cast<std::size_t>(t), static_cast<std::size_t>(f)) = acc;
      }
    }
  }
  return out;
}

/// Social shrinkage: (1 - lambda / sqrt(h * |z|^2))_+ z.
inline ComplexTensor social_shrinkage(const ComplexTensor& z, double lambda, const SocialKernel& kernel) {
  detail::require_nonnegative(lambda, "social_shrinkage");
  const RealTensor energy = neighbourhood_energy(z, kernel);
  ComplexTensor out = z;
  auto e = energy.flat();
  auto o = out.flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= detail::shrink_factor(std::sqrt(e[i]), lambda);
  return out;
}

/// Prox of (lambda/2) sum |z|^2 / v: entrywise v / (v + lambda).
inline ComplexTensor prox_weighted_l2(const ComplexTensor& z, const RealTensor& variance, double lambda) {
  detail::require_nonnegative(lambda, "prox_weighted_l2");
  detail::require_same_shape(z, variance, "prox_weighted_l2");
  ComplexTensor out = z;
  auto v = variance.flat();
  auto o = out.flat();
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (!(v[i] >= 0.0)) throw Error("prox_weighted_l2: variance must be nonnegative");
    const double denom = v[i] + lambda;
    o[i] *= denom > 0.0 ? v[i] / denom : 0.0;
  }
  return out;
}

/// Prox of -mu log on a singular value: the positive root of s'(s' - s) = mu.
inline double prox_neg_log(double sigma, double mu) { return 0.5 * (sigma + std::sqrt(sigma * sigma + 4.0 * mu)); }

/// Prox of mu * (-sum_f sum_n log sigma_n(W[f])). Each W[f] = U S V^H is
/// recomposed with every singular value replaced by prox_neg_log. For a zero
/// matrix U = V = I is used, so the result is sqrt(mu) * I; only the singular
/// values of that output are meaningful.
inline DemixingStack prox_logdet(const DemixingStack& w, double mu) {
  if (!(mu > 0.0)) throw Error("prox_logdet: mu must be positive");
  DemixingStack out(w.bins(), w.rows(), w.cols());
  const auto r = static_cast<Eigen::Index>(std::min(w.rows(), w.cols()));
  for (std::size_t f = 0; f < w.bins(); ++f) {
    const Eigen::MatrixXcd W = w.matricize(f);
    auto dst = out.matricize(f);
    if (!W.allFinite()) {
      dst.setConstant(Complex(std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()));
      continue;
    }
    if (W.isZero(0.0)) {
      dst.setZero();
      for (Eigen::Index i = 0; i < r; ++i) dst(i, i) = prox_neg_log(0.0, mu);
      continue;
    }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd sigma = svd.singularValues();
    for (Eigen::Index i = 0; i < sigma.size(); ++i) sigma(i) = prox_neg_log(sigma(i), mu);
    dst = svd.matrixU() * sigma.asDiagonal() * svd.matrixV().adjoint();
  }
  return out;
}

}  // namespace pdsbss

#pragma once

#include <random>

#include <Eigen/Dense>

#include "pdsbss/solver.hpp"

namespace pdsbss::test {

inline ComplexTensor random_tensor(std::size_t n, std::size_t t, std::size_t f, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  ComplexTensor out(n, t, f);
  for (auto& v : out.flat()) v = Complex(normal(rng), normal(rng));
  return out;
}

inline RealTensor random_real(std::size_t n, std::size_t t, std::size_t f, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> unit(lo, hi);
  RealTensor out(n, t, f);
  for (auto& v : out.flat()) v = unit(rng);
  return out;
}

inline DemixingStack random_stack(std::size_t f, std::size_t n, std::size_t m, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  DemixingStack w(f, n, m);
  for (auto& v : w.vectorize()) v = Complex(normal(rng), normal(rng));
  return w;
}

inline Eigen::VectorXcd to_vector(std::span<const Complex> values) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i];
  return v;
}

/// Explicit NTF x NMF matrix of the data operator. Rows follow the tensor
/// layout (n, t, f); columns follow the demixing vector layout (f, n, m).
inline Eigen::MatrixXcd dense_operator(const ComplexTensor& x, std::size_t n_out) {
  const std::size_t M = x.channels(), T = x.frames(), F = x.bins();
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n_out * T * F), static_cast<Eigen::Index>(F * n_out * M));
  for (std::size_t n = 0; n < n_out; ++n) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t f = 0; f < F; ++f) {
        const auto row = static_cast<Eigen::Index>((n * T + t) * F + f);
        for (std::size_t m = 0; m < M; ++m) {
          A(row, static_cast<Eigen::Index>((f * n_out + n) * M + m)) = x(m, t, f);
        }
      }
    }
  }
  return A;
}

inline double max_abs_diff(std::span<const Complex> a, std::span<const Complex> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// prox of -mu log|det| on one block, as W g(W^H W) with g(l) = prox(sqrt l) / sqrt l.
inline Eigen::MatrixXcd polar_prox_logdet(const Eigen::MatrixXcd& W, double mu) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(W.adjoint() * W);
  Eigen::VectorXd g = eig.eigenvalues();
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double s = std::sqrt(std::max(g(i), 0.0));
    g(i) = 0.5 * (s + std::sqrt(s * s + 4.0 * mu)) / s;
  }
  return W * eig.eigenvectors() * g.asDiagonal() * eig.eigenvectors().adjoint();
}

enum class DensePenalty { L1, L21 };

/// Prox of (lambda) P on a vector laid out as (n, t, f) with F contiguous bins.
inline Eigen::VectorXcd dense_shrink(const Eigen::VectorXcd& z, DensePenalty kind, double lambda, std::size_t F) {
  Eigen::VectorXcd out = z;
  if (kind == DensePenalty::L1) {
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double a = std::abs(z(i));
      out(i) = a > lambda ? z(i) * (1.0 - lambda / a) : Complex{};
    }
    return out;
  }
  const auto Fi = static_cast<Eigen::Index>(F);
  for (Eigen::Index g = 0; g < z.size() / Fi; ++g) {
    const double a = z.segment(g * Fi, Fi).norm();
    out.segment(g * Fi, Fi) = a > lambda ? Eigen::VectorXcd(z.segment(g * Fi, Fi) * (1.0 - lambda / a))
                                         : Eigen::VectorXcd::Zero(Fi);
  }
  return out;
}

struct DenseState {
  Eigen::VectorXcd w;
  Eigen::VectorXcd y;
};

/// One primal-dual step written with explicit matrices.
inline DenseState dense_pds_step(const DenseState& s, const ComplexTensor& x, double mu1, double mu2, double alpha,
                                 DensePenalty kind, double lambda) {
  const std::size_t N = x.channels(), F = x.bins();
  const Eigen::MatrixXcd A = dense_operator(x, N);
  const Eigen::VectorXcd v = s.w - mu1 * mu2 * (A.adjoint() * s.y);
  Eigen::VectorXcd w_tilde(v.size());
  const auto block = static_cast<Eigen::Index>(N * N);
  for (std::size_t f = 0; f < F; ++f) {
    Eigen::MatrixXcd W(N, N);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t m = 0; m < N; ++m) W(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = v(static_cast<Eigen::Index>(f) * block + static_cast<Eigen::Index>(n * N + m));
    }
    const Eigen::MatrixXcd P = polar_prox_logdet(W, mu1);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t m = 0; m < N; ++m) w_tilde(static_cast<Eigen::Index>(f) * block + static_cast<Eigen::Index>(n * N + m)) = P(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    }
  }
  const Eigen::VectorXcd z = s.y + A * (2.0 * w_tilde - s.w);
  const Eigen::VectorXcd y_tilde = z - dense_shrink(z, kind, lambda / mu2, F);
  return {alpha * w_tilde + (1.0 - alpha) * s.w, alpha * y_tilde + (1.0 - alpha) * s.y};
}

}  // namespace pdsbss::test

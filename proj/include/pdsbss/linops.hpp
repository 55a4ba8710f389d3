#pragma once

#include <algorithm>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "pdsbss/core.hpp"

namespace pdsbss {

using ComplexMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// F demixing matrices W[f] of size N x M, stored as the row-major
/// concatenation w = [vec(W[1]); ...; vec(W[F])].
class DemixingStack {
 public:
  using MatrixMap = Eigen::Map<ComplexMatrix>;
  using ConstMatrixMap = Eigen::Map<const ComplexMatrix>;

  DemixingStack() = default;
  DemixingStack(std::size_t bins, std::size_t rows, std::size_t cols)
      : bins_(bins), rows_(rows), cols_(cols), data_(bins * rows * cols, Complex{}) {}

  static DemixingStack identity(std::size_t bins, std::size_t n) {
    DemixingStack w(bins, n, n);
    for (std::size_t f = 0; f < bins; ++f) w.matricize(f).setIdentity();
    return w;
  }

  /// Inverse of vectorize().
  static DemixingStack from_vector(std::size_t bins, std::size_t rows, std::size_t cols,
                                   std::span<const Complex> values) {
    if (values.size() != bins * rows * cols) throw Error("from_vector: length is not N*M*F");
    DemixingStack w(bins, rows, cols);
    std::copy(values.begin(), values.end(), w.data_.begin());
    return w;
  }

  std::size_t bins() const { return bins_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  MatrixMap matricize(std::size_t f) {
    return {data_.data() + f * rows_ * cols_, static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
  }
  ConstMatrixMap matricize(std::size_t f) const {
    return {data_.data() + f * rows_ * cols_, static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
  }

  std::span<Complex> vectorize() { return data_; }
  std::span<const Complex> vectorize() const { return data_; }

  bool same_shape(const DemixingStack& o) const { return bins_ == o.bins_ && rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const DemixingStack&, const DemixingStack&) = default;

 private:
  std::size_t bins_ = 0;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Complex> data_;
};

inline double squared_norm(const DemixingStack& w) {
  double acc = 0.0;
  for (const auto& v : w.vectorize()) acc += std::norm(v);
  return acc;
}

inline Complex inner(const DemixingStack& a, const DemixingStack& b) {
  if (!a.same_shape(b)) throw Error("inner: demixing stack shape mismatch");
  Complex acc{};
  auto va = a.vectorize();
  auto vb = b.vectorize();
  for (std::size_t i = 0; i < va.size(); ++i) acc += std::conj(va[i]) * vb[i];
  return acc;
}

/// Implicit NTF x NMF operator built from the observations x_m[t,f]. It is
/// never materialized; apply() and adjoint_apply() act frequency-wise.
class DataOperator {
 public:
  explicit DataOperator(ComplexTensor observations, double scale = 1.0)
      : observations_(std::move(observations)), scale_(scale) {
    if (!(scale_ > 0.0)) throw Error("DataOperator: scale must be positive");
    if (!detail::all_finite<Complex>(observations_.flat())) throw Error("DataOperator: non-finite observations");
  }

  const ComplexTensor& observations() const { return observations_; }
  /// Product of every normalization factor applied so far (1 / ||X||_s after normalize()).
  double scale() const { return scale_; }

  std::size_t channels() const { return observations_.channels(); }
  std::size_t frames() const { return observations_.frames(); }
  std::size_t bins() const { return observations_.bins(); }

 private:
  ComplexTensor observations_;
  double scale_;
};

/// s[t,f] = W[f] x[t,f]
inline ComplexTensor apply(const DataOperator& X, const DemixingStack& w) {
  const auto& x = X.observations();
  if (w.cols() != x.channels() || w.bins() != x.bins()) throw Error("apply: dimension mismatch");
  const std::size_t N = w.rows(), M = w.cols(), T = x.frames(), F = x.bins();
  ComplexTensor out(N, T, F);
  for (std::size_t f = 0; f < F; ++f) {
    const auto W = w.matricize(f);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t t = 0; t < T; ++t) {
        Complex acc{};
        for (std::size_t m = 0; m < M; ++m) acc += W(n, m) * x(m, t, f);
        out(n, t, f) = acc;
      }
    }
  }
  return out;
}

/// W'[f](n,m) = sum_t y_n[t,f] conj(x_m[t,f])
inline DemixingStack adjoint_apply(const DataOperator& X, const ComplexTensor& y) {
  const auto& x = X.observations();
  if (y.frames() != x.frames() || y.bins() != x.bins()) throw Error("adjoint_apply: dimension mismatch");
  const std::size_t N = y.channels(), M = x.channels(), T = x.frames(), F = x.bins();
  DemixingStack out(F, N, M);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t t = 0; t < T; ++t) {
        auto yr = y.row(n, t);
        auto xr = x.row(m, t);
        for (std::size_t f = 0; f < F; ++f) out.matricize(f)(n, m) += yr[f] * std::conj(xr[f]);
      }
    }
  }
  return out;
}

struct SpectralNormEstimate {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool exact = false;  // value is the exact block maximum
};

/// Largest accepted ||X^H X v - rho v|| / rho at the power-method stopping point.
inline constexpr double kEigenResidualTol = 1e-6;

/// Exact ||X||_s: X^H X is block diagonal with one M x M Gram matrix per bin.
inline double block_spectral_norm(const DataOperator& X) {
  const auto& x = X.observations();
  const auto M = static_cast<Eigen::Index>(x.channels()), T = static_cast<Eigen::Index>(x.frames());
  double top = 0.0;
  Eigen::MatrixXcd Xf(T, M);
  for (std::size_t f = 0; f < x.bins(); ++f) {
    for (Eigen::Index t = 0; t < T; ++t) {
      for (Eigen::Index m = 0; m < M; ++m) Xf(t, m) = x(static_cast<std::size_t>(m), static_cast<std::size_t>(t), f);
    }
    const Eigen::MatrixXcd G = Xf.adjoint() * Xf;
    top = std::max(top, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(G, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff());
  }
  return std::sqrt(std::max(top, 0.0));
}

/// Power iteration on X^H X over the NMF-dimensional domain (N = M), started
/// from the normalized all-ones stack. Stops when successive Rayleigh
/// quotients differ relatively by less than `tol`. If `max_iter` is reached
/// first, or the final vector is not an eigenvector to within
/// kEigenResidualTol (nearly equal top eigenvalues), the exact block value is
/// returned.
inline SpectralNormEstimate spectral_norm(const DataOperator& X, double tol = 1e-9, std::size_t max_iter = 500) {
  const std::size_t n = X.channels();
  DemixingStack v(X.bins(), n, n);
  for (auto& e : v.vectorize()) e = Complex(1.0, 0.0);
  double norm = std::sqrt(squared_norm(v));
  for (auto& e : v.vectorize()) e /= norm;

  SpectralNormEstimate est;
  double previous = 0.0, residual = 0.0;
  for (std::size_t k = 0; k < max_iter; ++k) {
    DemixingStack u = adjoint_apply(X, apply(X, v));
    const double rayleigh = inner(v, u).real();
    residual = 0.0;
    {
      auto uf = u.vectorize();
      auto vf = v.vectorize();
      for (std::size_t i = 0; i < uf.size(); ++i) residual += std::norm(uf[i] - rayleigh * vf[i]);
    }
    residual = std::sqrt(residual);
    norm = std::sqrt(squared_norm(u));
    if (norm == 0.0) throw Error("spectral_norm: observations are zero");
    for (auto& e : u.vectorize()) e /= norm;
    v = std::move(u);
    est.iterations = k + 1;
    est.value = std::sqrt(std::max(rayleigh, 0.0));
    if (k > 0 && std::abs(rayleigh - previous) < tol * std::abs(rayleigh)) {
      est.converged = true;
      break;
    }
    previous = rayleigh;
  }
  if (!est.converged || residual > kEigenResidualTol * est.value * est.value) {
    est.value = block_spectral_norm(X);
    est.exact = true;
  }
  return est;
}

/// sqrt(||X||_1 ||X||_inf); an upper bound on ||X||_s computed by comparisons only.
inline double one_inf_norm_bound(const DataOperator& X) {
  const auto& x = X.observations();
  double col_max = 0.0, row_max = 0.0;
  for (std::size_t f = 0; f < x.bins(); ++f) {
    for (std::size_t m = 0; m < x.channels(); ++m) {
      double col = 0.0;
      for (std::size_t t = 0; t < x.frames(); ++t) col += std::abs(x(m, t, f));
      col_max = std::max(col_max, col);
    }
    for (std::size_t t = 0; t < x.frames(); ++t) {
      double row = 0.0;
      for (std::size_t m = 0; m < x.channels(); ++m) row += std::abs(x(m, t, f));
      row_max = std::max(row_max, row);
    }
  }
  return std::sqrt(col_max * row_max);
}

enum class NormBound { PowerMethod, OneInf };

/// Returns X / ||X||, where ||X|| is the power-method spectral norm or the
/// cheaper one/inf bound.
inline DataOperator normalize(const DataOperator& X, NormBound bound = NormBound::PowerMethod) {
  bool nonzero = false;
  for (const auto& v : X.observations().flat()) {
    if (v != Complex{}) {
      nonzero = true;
      break;
    }
  }
  if (!nonzero) throw Error("normalize: observations are all zero");
  const double norm = bound == NormBound::PowerMethod ? spectral_norm(X).value : one_inf_norm_bound(X);
  ComplexTensor scaled = X.observations();
  for (auto& v : scaled.flat()) v /= norm;
  return DataOperator(std::move(scaled), X.scale() / norm);
}

struct WhiteningRecord {
  std::vector<ComplexMatrix> transforms;      // V[f], x_white = V[f] x
  std::vector<std::size_t> regularized_bins;  // eigenvalues floored or bin was all-zero
};

struct WhitenedSpectrogram {
  ComplexTensor data;
  WhiteningRecord record;
};

/// Per-frequency PCA whitening, V = Lambda^{-1/2} E^H, with eigenvalues
/// floored at 1e-12 times the largest one. An all-zero bin is passed through.
/// Pca: Lambda^{-1/2} E^H. Symmetric: E Lambda^{-1/2} E^H (= C^{-1/2}), which
/// keeps each whitened channel closest to its microphone.
enum class WhiteningMethod { Pca, Symmetric };

inline WhitenedSpectrogram whiten(const ComplexTensor& x, WhiteningMethod method = WhiteningMethod::Pca) {
  const std::size_t M = x.channels(), T = x.frames(), F = x.bins();
  if (T < M) throw Error("whiten: need at least as many frames as channels");
  WhitenedSpectrogram out{ComplexTensor(M, T, F), {}};
  out.record.transforms.reserve(F);
  Eigen::MatrixXcd cov(M, M);
  Eigen::VectorXcd frame(M);
  for (std::size_t f = 0; f < F; ++f) {
    cov.setZero();
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t m = 0; m < M; ++m) frame(static_cast<Eigen::Index>(m)) = x(m, t, f);
      cov.noalias() += frame * frame.adjoint();
    }
    cov /= static_cast<double>(T);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(cov);
    Eigen::VectorXd lambda = eig.eigenvalues();
    const double largest = lambda.maxCoeff();
    ComplexMatrix V;
    if (!(largest > 0.0)) {
      V = ComplexMatrix::Identity(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(M));
      out.record.regularized_bins.push_back(f);
    } else {
      const double floor = 1e-12 * largest;
      if (lambda.minCoeff() < floor) out.record.regularized_bins.push_back(f);
      lambda = lambda.cwiseMax(floor);
      V = lambda.cwiseSqrt().cwiseInverse().asDiagonal() * eig.eigenvectors().adjoint();
      if (method == WhiteningMethod::Symmetric) V = eig.eigenvectors() * V;
    }
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t m = 0; m < M; ++m) frame(static_cast<Eigen::Index>(m)) = x(m, t, f);
      Eigen::VectorXcd white = V * frame;
      for (std::size_t m = 0; m < M; ++m) out.data(m, t, f) = white(static_cast<Eigen::Index>(m));
    }
    out.record.transforms.push_back(std::move(V));
  }
  return out;
}

struct BackProjection {
  ComplexTensor images;
  std::vector<std::size_t> pseudo_inverse_bins;
};

/// Minimal-distortion rescaling: output_n[t,f] = [W[f]^{-1}]_{ref,n} s_n[t,f].
/// `w` must be the demixing relative to `x`. Singular W[f] falls back to the
/// pseudo-inverse and is reported.
inline BackProjection back_project(const ComplexTensor& shat, const ComplexTensor& x, const DemixingStack& w,
                                   std::size_t ref_channel = 0) {
  if (w.cols() != x.channels() || w.rows() != shat.channels() || w.bins() != shat.bins() ||
      x.bins() != shat.bins() || x.frames() != shat.frames()) {
    throw Error("back_project: dimension mismatch");
  }
  if (ref_channel >= x.channels()) throw Error("back_project: reference channel out of range");
  BackProjection out{ComplexTensor(shat.channels(), shat.frames(), shat.bins()), {}};
  for (std::size_t f = 0; f < w.bins(); ++f) {
    const Eigen::MatrixXcd W = w.matricize(f);
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sigma = svd.singularValues();
    const bool square = W.rows() == W.cols();
    const bool singular = !square || sigma.size() == 0 || !(sigma(sigma.size() - 1) > 1e-12 * sigma(0));
    Eigen::MatrixXcd A;
    if (singular) {
      out.pseudo_inverse_bins.push_back(f);
      Eigen::VectorXd inv = Eigen::VectorXd::Zero(sigma.size());
      for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        if (sigma(i) > 1e-12 * sigma(0)) inv(i) = 1.0 / sigma(i);
      }
      A = svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
    } else {
      A = W.inverse();
    }
    for (std::size_t n = 0; n < shat.channels(); ++n) {
      const Complex gain = A(static_cast<Eigen::Index>(ref_channel), static_cast<Eigen::Index>(n));
      for (std::size_t t = 0; t < shat.frames(); ++t) out.images(n, t, f) = gain * shat(n, t, f);
    }
  }
  return out;
}

}  // namespace pdsbss

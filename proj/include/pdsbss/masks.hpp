#pragma once

#include <limits>
#include <mutex>
#include <numbers>
#include <optional>

#include <fftw3.h>

#include "pdsbss/prox.hpp"

namespace pdsbss {

/// Complex [N x T x C] array over quefrency.
using CepstrumTensor = ComplexTensor;

/// Mask of the soft threshold: (1 - lambda / |z|)_+.
inline MaskTensor mask_l1(const ComplexTensor& z, double lambda) {
  detail::require_nonnegative(lambda, "mask_l1");
  MaskTensor out(z.channels(), z.frames(), z.bins());
  auto zf = z.flat();
  auto of = out.flat();
  for (std::size_t i = 0; i < zf.size(); ++i) of[i] = detail::shrink_factor(std::abs(zf[i]), lambda);
  return out;
}

/// IVA mask: (1 - lambda / ||z_n[t,.]||_2)_+, constant over f.
inline MaskTensor mask_l21(const ComplexTensor& z, double lambda) {
  detail::require_nonnegative(lambda, "mask_l21");
  MaskTensor out(z.channels(), z.frames(), z.bins());
  for (std::size_t n = 0; n < z.channels(); ++n) {
    for (std::size_t t = 0; t < z.frames(); ++t) {
      double energy = 0.0;
      for (const auto& v : z.row(n, t)) energy += std::norm(v);
      const double factor = detail::shrink_factor(std::sqrt(energy), lambda);
      for (auto& m : out.row(n, t)) m = factor;
    }
  }
  return out;
}

/// Model-based IVA mask v / (v + lambda); independent of the iterate.
inline MaskTensor mask_model_iva(const RealTensor& variance, double lambda) {
  detail::require_nonnegative(lambda, "mask_model_iva");
  MaskTensor out(variance.channels(), variance.frames(), variance.bins());
  auto v = variance.flat();
  auto o = out.flat();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0)) throw Error("mask_model_iva: variance must be nonnegative");
    const double denom = v[i] + lambda;
    o[i] = denom > 0.0 ? v[i] / denom : 0.0;
  }
  return out;
}

/// Single-channel power spectral subtraction used to build model-IVA
/// variances: max(|x|^2 - noise, floor * |x|^2), with the noise power per
/// (channel, bin) taken as the given quantile of |x|^2 over frames.
inline RealTensor spectral_subtraction_variance(const ComplexTensor& x, double quantile = 0.1, double floor = 0.01) {
  RealTensor out(x.channels(), x.frames(), x.bins());
  std::vector<double> column(x.frames());
  for (std::size_t n = 0; n < x.channels(); ++n) {
    for (std::size_t f = 0; f < x.bins(); ++f) {
      for (std::size_t t = 0; t < x.frames(); ++t) column[t] = std::norm(x(n, t, f));
      auto sorted = column;
      const auto k = static_cast<std::size_t>(quantile * static_cast<double>(sorted.size() - 1));
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
      const double noise = sorted[k];
      for (std::size_t t = 0; t < x.frames(); ++t) out(n, t, f) = std::max(column[t] - noise, floor * column[t]);
    }
  }
  return out;
}

namespace detail {

/// In-place unscaled DFT of `count` contiguous rows of length `length`.
/// sign = FFTW_FORWARD (e^{-i}) or FFTW_BACKWARD (e^{+i}).
inline void batch_dft(Complex* data, std::size_t count, std::size_t length, int sign) {
  if (count == 0 || length == 0) return;
  static std::mutex planner;
  auto* buf = reinterpret_cast<fftw_complex*>(data);
  const int n = static_cast<int>(length);
  fftw_plan plan;
  {
    std::lock_guard lock(planner);
    plan = fftw_plan_many_dft(1, &n, static_cast<int>(count), buf, nullptr, 1, n, buf, nullptr, 1, n, sign,
                              FFTW_ESTIMATE);
  }
  if (plan == nullptr) throw Error("fft: planning failed");
  fftw_execute(plan);
  std::lock_guard lock(planner);
  fftw_destroy_plan(plan);
}

}  // namespace detail

/// Frequency-directional DFT, (1/F) sum_f z[f] e^{-2 pi i (c-1)(f-1)/C}, with
/// the input zero-padded to length C.
inline CepstrumTensor cepstrum_forward(const RealTensor& logmag, std::size_t quefrency_length) {
  const std::size_t F = logmag.bins(), C = quefrency_length;
  if (C < F) throw Error("cepstrum_forward: quefrency length must be >= bin count");
  CepstrumTensor out(logmag.channels(), logmag.frames(), C);
  const std::size_t rows = logmag.channels() * logmag.frames();
  auto src = logmag.flat();
  auto dst = out.flat();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t f = 0; f < F; ++f) dst[r * C + f] = src[r * F + f];
  }
  detail::batch_dft(dst.data(), rows, C, FFTW_FORWARD);
  const double scale = 1.0 / static_cast<double>(F);
  for (auto& v : dst) v *= scale;
  return out;
}

/// (F/C) sum_c z[c] e^{2 pi i (c-1)(f-1)/C} for f = 1..F, real part.
/// If `imag_ratio` is given it receives ||imag|| / ||real|| of the discarded part.
inline RealTensor cepstrum_inverse(const CepstrumTensor& cep, std::size_t bins, double* imag_ratio = nullptr) {
  const std::size_t C = cep.bins(), F = bins;
  if (C < F) throw Error("cepstrum_inverse: quefrency length must be >= bin count");
  const std::size_t rows = cep.channels() * cep.frames();
  std::vector<Complex> work(cep.flat().begin(), cep.flat().end());
  detail::batch_dft(work.data(), rows, C, FFTW_BACKWARD);
  RealTensor out(cep.channels(), cep.frames(), F);
  auto dst = out.flat();
  const double scale = static_cast<double>(F) / static_cast<double>(C);
  double re2 = 0.0, im2 = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t f = 0; f < F; ++f) {
      const Complex v = work[r * C + f] * scale;
      dst[r * F + f] = v.real();
      re2 += v.real() * v.real();
      im2 += v.imag() * v.imag();
    }
  }
  if (imag_ratio != nullptr) *imag_ratio = re2 > 0.0 ? std::sqrt(im2 / re2) : std::sqrt(im2);
  return out;
}

/// Raised-cosine step (1 - cos(pi u)) / 2, written through the sine so that
/// 0, 1/2 and 1 are exact fixed points in floating point.
inline double raised_cosine(double u) { return 0.5 + 0.5 * std::sin(std::numbers::pi * (u - 0.5)); }

/// Cosine-shrinkage mask Xi^kappa[min(1, |nu| / (2 lambda))]; all ones when lambda = 0.
inline RealTensor cosine_shrink_mask(const CepstrumTensor& cep, double lambda, int kappa) {
  detail::require_nonnegative(lambda, "cosine_shrink_mask");
  if (kappa < 1) throw Error("cosine_shrink_mask: kappa must be >= 1");
  RealTensor out(cep.channels(), cep.frames(), cep.bins(), 1.0);
  if (lambda == 0.0) return out;
  auto src = cep.flat();
  auto dst = out.flat();
  for (std::size_t i = 0; i < src.size(); ++i) {
    double s = std::min(1.0, std::abs(src[i]) / (2.0 * lambda));
    for (int k = 0; k < kappa; ++k) s = raised_cosine(s);
    dst[i] = s;
  }
  return out;
}

/// Wiener-like mask (p_n / sum_n p_n)^gamma. A bin whose total power is zero
/// gets the uniform value (1/N)^gamma and is counted in `uniform_bins`.
inline MaskTensor wiener_like_mask(const RealTensor& power, double gamma, std::size_t* uniform_bins = nullptr) {
  if (!(gamma > 0.0)) throw Error("wiener_like_mask: gamma must be positive");
  const std::size_t N = power.channels();
  MaskTensor out(N, power.frames(), power.bins());
  std::size_t uniform = 0;
  const double fallback = std::pow(1.0 / static_cast<double>(N), gamma);
  for (std::size_t t = 0; t < power.frames(); ++t) {
    for (std::size_t f = 0; f < power.bins(); ++f) {
      double total = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        if (!(power(n, t, f) >= 0.0)) throw Error("wiener_like_mask: power must be nonnegative");
        total += power(n, t, f);
      }
      if (!(total > 0.0) || !std::isfinite(total)) {
        ++uniform;
        for (std::size_t n = 0; n < N; ++n) out(n, t, f) = fallback;
        continue;
      }
      for (std::size_t n = 0; n < N; ++n) out(n, t, f) = std::min(1.0, std::pow(power(n, t, f) / total, gamma));
    }
  }
  if (uniform_bins != nullptr) *uniform_bins = uniform;
  return out;
}

struct HvaConfig {
  double lambda = 0.08;
  int kappa = 3;
  std::optional<double> gamma;  // 1/N when unset
  double epsilon = 1e-3;
  std::size_t quefrency_length = 0;  // C; 0 means C = F

  void validate() const {
    if (!(lambda >= 0.0)) throw Error("hva: lambda must be nonnegative");
    if (kappa < 1) throw Error("hva: kappa must be >= 1");
    if (gamma && !(*gamma > 0.0)) throw Error("hva: gamma must be positive");
    if (!(epsilon >= 0.0)) throw Error("hva: epsilon must be nonnegative");
  }
};

/// Cepstrum-thresholded log power 2 * varrho_n[t,f] = log upsilon_n[t,f].
/// The exponent is kept in the log domain so the Wiener combination below
/// never overflows.
inline RealTensor hva_log_power(const ComplexTensor& z, const HvaConfig& cfg) {
  cfg.validate();
  if (!detail::all_finite<Complex>(z.flat())) throw Error("hva_mask: non-finite input");
  const std::size_t N = z.channels(), T = z.frames(), F = z.bins();
  const std::size_t C = cfg.quefrency_length == 0 ? F : cfg.quefrency_length;
  if (C < F) throw Error("hva: quefrency length must be >= bin count");

  RealTensor rho(N, T, F);
  std::vector<double> mean(N * T);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t t = 0; t < T; ++t) {
      auto src = z.row(n, t);
      auto dst = rho.row(n, t);
      double acc = 0.0;
      for (std::size_t f = 0; f < F; ++f) {
        dst[f] = std::log(std::max(std::abs(src[f]) + cfg.epsilon, std::numeric_limits<double>::min()));
        acc += dst[f];
      }
      const double mu = acc / static_cast<double>(F);
      mean[n * T + t] = mu;
      for (auto& v : dst) v -= mu;
    }
  }

  if (cfg.lambda == 0.0) {
    // The shrink mask is identically one, so the cepstrum round trip is the identity.
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t t = 0; t < T; ++t) {
        const double mu = mean[n * T + t];
        for (auto& v : rho.row(n, t)) v = 2.0 * (v + mu);
      }
    }
    return rho;
  }

  CepstrumTensor nu = cepstrum_forward(rho, C);
  const RealTensor varsigma = cosine_shrink_mask(nu, cfg.lambda, cfg.kappa);
  auto nf = nu.flat();
  auto sf = varsigma.flat();
  for (std::size_t i = 0; i < nf.size(); ++i) nf[i] *= sf[i];
  double imag_ratio = 0.0;
  RealTensor xi = cepstrum_inverse(nu, F, &imag_ratio);
  if (imag_ratio > 1e-8) throw Error("hva: shrunk cepstrum lost conjugate symmetry");

  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t t = 0; t < T; ++t) {
      const double mu = mean[n * T + t];
      for (auto& v : xi.row(n, t)) v = 2.0 * (v + mu);
    }
  }
  return xi;
}

/// Harmonic Vector Analysis mask: cepstrum thresholding of the log amplitude
/// of every source followed by a Wiener-like combination across sources.
inline MaskTensor hva_mask(const ComplexTensor& z, const HvaConfig& cfg) {
  const RealTensor log_power = hva_log_power(z, cfg);
  const std::size_t N = z.channels();
  const double gamma = cfg.gamma.value_or(1.0 / static_cast<double>(N));
  MaskTensor out(N, z.frames(), z.bins());
  for (std::size_t t = 0; t < z.frames(); ++t) {
    for (std::size_t f = 0; f < z.bins(); ++f) {
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t n = 0; n < N; ++n) peak = std::max(peak, log_power(n, t, f));
      double total = 0.0;
      for (std::size_t n = 0; n < N; ++n) total += std::exp(log_power(n, t, f) - peak);
      const double log_total = peak + std::log(total);
      for (std::size_t n = 0; n < N; ++n) {
        out(n, t, f) = std::min(1.0, std::exp(gamma * (log_power(n, t, f) - log_total)));
      }
    }
  }
  return out;
}

}  // namespace pdsbss

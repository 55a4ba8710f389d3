#pragma once

#include <algorithm>
#include <numbers>
#include <utility>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include "pdsbss/core.hpp"

namespace pdsbss {

using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Multichannel waveform, one row per channel.
struct TimeDomainAudio {
  SampleMatrix samples;
  int sample_rate = 16000;

  std::size_t channels() const { return static_cast<std::size_t>(samples.rows()); }
  std::size_t length() const { return static_cast<std::size_t>(samples.cols()); }

  void validate() const {
    if (samples.rows() < 1 || samples.cols() < 1) throw Error("audio must have at least one channel and one sample");
    if (sample_rate <= 0) throw Error("sample rate must be positive");
    if (!samples.allFinite()) throw Error("audio contains non-finite samples");
  }
};

enum class Window { Hann };

struct StftConfig {
  std::size_t window_length = 2048;
  std::size_t hop = 1024;
  Window window = Window::Hann;
  std::size_t fft_length = 2048;

  std::size_t bins() const { return fft_length / 2 + 1; }
  std::size_t overlap_factor() const { return window_length / hop; }

  void validate() const {
    if (window_length == 0 || hop == 0 || fft_length == 0) throw Error("STFT sizes must be positive");
    if (window_length % hop != 0) throw Error("hop must divide the window length");
    if (overlap_factor() != 2 && overlap_factor() != 4) throw Error("window_length / hop must be 2 or 4");
    if (fft_length < window_length) throw Error("fft_length must be >= window_length");
  }
};

/// One-sided complex spectrogram, [channel][frame][bin].
struct SpectrogramTensor {
  ComplexTensor data;
  std::size_t frame_hop = 0;
  std::size_t fft_length = 0;
  std::size_t signal_length = 0;
};

/// Periodic Hann window, which overlap-adds to a constant at hops of L/2 and L/4.
inline std::vector<double> analysis_window(const StftConfig& cfg) {
  std::vector<double> w(cfg.window_length);
  const double n = static_cast<double>(cfg.window_length);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
  }
  return w;
}

/// Sum of squared analysis windows over all frames touching sample phase i (period hop).
inline std::vector<double> squared_window_overlap(const StftConfig& cfg) {
  const auto w = analysis_window(cfg);
  std::vector<double> acc(cfg.hop, 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) acc[i % cfg.hop] += w[i] * w[i];
  return acc;
}

/// Canonical dual of the analysis window: w / sum_k w^2(. + k hop).
inline std::vector<double> synthesis_window(const StftConfig& cfg) {
  auto w = analysis_window(cfg);
  const auto overlap = squared_window_overlap(cfg);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] /= overlap[i % cfg.hop];
  return w;
}

/// Bounds on E_spec / (fft_length * ||x||^2), where E_spec is the two-sided
/// spectrogram energy. Both equal 3/2 for 75% overlap; for 50% overlap the
/// squared Hann overlap oscillates between 1/2 and 1.
inline std::pair<double, double> energy_gain_bounds(const StftConfig& cfg) {
  const auto overlap = squared_window_overlap(cfg);
  auto [lo, hi] = std::minmax_element(overlap.begin(), overlap.end());
  return {*lo, *hi};
}

inline std::size_t edge_padding(const StftConfig& cfg) { return cfg.window_length - cfg.hop; }

inline std::size_t frame_count(std::size_t signal_length, const StftConfig& cfg) {
  const std::size_t padded = signal_length + edge_padding(cfg);
  return (padded + cfg.hop - 1) / cfg.hop;
}

/// Forward STFT with e^{-2 pi i ...} kernel and no scaling. The signal is
/// padded with window_length - hop zeros in front so that every sample lies
/// under window_length / hop full frames.
inline SpectrogramTensor stft(const TimeDomainAudio& audio, const StftConfig& cfg) {
  audio.validate();
  cfg.validate();
  const std::size_t length = audio.length();
  if (cfg.window_length > length) throw Error("signal too short");

  const std::size_t frames = frame_count(length, cfg);
  const std::size_t bins = cfg.bins();
  const std::size_t pad = edge_padding(cfg);
  const auto window = analysis_window(cfg);

  SpectrogramTensor out{ComplexTensor(audio.channels(), frames, bins), cfg.hop, cfg.fft_length, length};
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(cfg.fft_length);
  std::vector<Complex> spectrum(cfg.fft_length);

  for (std::size_t m = 0; m < audio.channels(); ++m) {
    for (std::size_t t = 0; t < frames; ++t) {
      std::fill(frame.begin(), frame.end(), 0.0);
      for (std::size_t i = 0; i < cfg.window_length; ++i) {
        const std::size_t padded_index = t * cfg.hop + i;
        if (padded_index < pad) continue;
        const std::size_t src = padded_index - pad;
        if (src >= length) break;
        frame[i] = window[i] * audio.samples(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(src));
      }
      fft.fwd(spectrum.data(), frame.data(), static_cast<Eigen::Index>(cfg.fft_length));
      auto row = out.data.row(m, t);
      std::copy_n(spectrum.begin(), bins, row.begin());
    }
  }
  return out;
}

/// Overlap-add inverse with the canonical dual window. Output is truncated or
/// zero-padded to `length` samples.
inline TimeDomainAudio istft(const ComplexTensor& spec, const StftConfig& cfg, std::size_t length,
                             int sample_rate = 16000) {
  cfg.validate();
  if (spec.bins() != cfg.bins()) throw Error("istft: bin count does not match fft_length");
  if (spec.frames() == 0 || spec.channels() == 0) throw Error("istft: empty spectrogram");

  const std::size_t pad = edge_padding(cfg);
  const auto window = synthesis_window(cfg);

  TimeDomainAudio out{SampleMatrix::Zero(static_cast<Eigen::Index>(spec.channels()), static_cast<Eigen::Index>(length)),
                      sample_rate};
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<Complex> spectrum(cfg.fft_length);
  std::vector<double> frame(cfg.fft_length);

  for (std::size_t m = 0; m < spec.channels(); ++m) {
    for (std::size_t t = 0; t < spec.frames(); ++t) {
      auto row = spec.row(m, t);
      std::copy(row.begin(), row.end(), spectrum.begin());
      fft.inv(frame.data(), spectrum.data(), static_cast<Eigen::Index>(cfg.fft_length));
      for (std::size_t i = 0; i < cfg.window_length; ++i) {
        const std::size_t padded_index = t * cfg.hop + i;
        if (padded_index < pad) continue;
        const std::size_t dst = padded_index - pad;
        if (dst >= length) break;
        out.samples(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(dst)) += window[i] * frame[i];
      }
    }
  }
  return out;
}

inline TimeDomainAudio istft(const SpectrogramTensor& spec, const StftConfig& cfg, std::size_t length,
                             int sample_rate = 16000) {
  if (spec.fft_length != cfg.fft_length || spec.frame_hop != cfg.hop) {
    throw Error("istft: spectrogram was produced with a different configuration");
  }
  return istft(spec.data, cfg, length, sample_rate);
}

}  // namespace pdsbss

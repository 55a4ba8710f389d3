#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <variant>

#include "pdsbss/signal.hpp"
#include "pdsbss/wav.hpp"

namespace pdsbss {

/// Note-on/note-off gating of a tone. With `note_rate == 0` the tone is
/// continuous; otherwise note lengths are drawn uniformly from
/// [min_note, max_note] seconds, separated by gaps drawn from [min_gap, max_gap]
/// seconds, with a linear attack and an exponential decay inside each note.
struct NoteEnvelope {
  bool enabled = false;
  double min_note = 0.25;
  double max_note = 0.7;
  double min_gap = 0.05;
  double max_gap = 0.4;
  double attack = 0.01;
  double decay_time = 0.5;
};

struct HarmonicTone {
  double f0 = 220.0;
  int partials = 10;
  double partial_decay = 1.0;    // partial k has amplitude k^{-partial_decay}
  double vibrato_depth = 0.005;  // relative frequency deviation
  double vibrato_rate = 5.0;     // Hz
  NoteEnvelope envelope;
};

struct FilteredNoise {
  double low_hz = 100.0;
  double high_hz = 4000.0;
};

struct FileSource {
  std::string path;
  std::size_t channel = 0;
};

using SourceDescriptor = std::variant<HarmonicTone, FilteredNoise, FileSource>;

/// x_m = sum_n A(m, n) s_n.
struct InstantaneousMixing {
  Eigen::MatrixXd matrix;
};

/// x_m = sum_n h_{mn} * s_n with random exponentially decaying FIRs. The
/// filter for pair (m, n) is scaled to have energy gains(m, n)^2. When
/// `direct_to_reverberant_db` is set, each filter starts with a direct-path
/// impulse at a random delay in [0, max_delay] samples followed by the tail.
struct ConvolutiveMixing {
  Eigen::MatrixXd gains;
  std::size_t fir_length = 512;
  double decay_seconds = 0.02;
  std::optional<double> direct_to_reverberant_db;
  std::size_t max_delay = 8;
};

using MixingModel = std::variant<InstantaneousMixing, ConvolutiveMixing>;

struct MixSpec {
  std::vector<SourceDescriptor> sources;
  std::size_t microphones = 0;  // 0: same as source count
  MixingModel mixing = InstantaneousMixing{};
  std::optional<double> snr_db;  // ambient noise level, none when unset
  double duration = 5.0;
  int sample_rate = 16000;
  std::uint64_t seed = 0;

  std::size_t mic_count() const { return microphones == 0 ? sources.size() : microphones; }
};

struct MixResult {
  TimeDomainAudio mixture;                // M channels, includes noise
  TimeDomainAudio references;             // N channels, source images at microphone 1
  std::vector<TimeDomainAudio> images;    // per source, M channels
  std::vector<std::vector<std::vector<double>>> filters;  // [m][n], convolutive mixing only
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<double> note_gate(const NoteEnvelope& env, std::size_t length, int rate, std::mt19937_64& rng) {
  std::vector<double> gate(length, 0.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  double position = draw(0.0, env.max_gap);
  const double fs = rate;
  while (position * fs < static_cast<double>(length)) {
    const double note = draw(env.min_note, env.max_note);
    const auto begin = static_cast<std::size_t>(position * fs);
    const auto end = std::min(length, static_cast<std::size_t>((position + note) * fs));
    for (std::size_t i = begin; i < end; ++i) {
      const double local = static_cast<double>(i - begin) / fs;
      const double attack = env.attack > 0.0 ? std::min(1.0, local / env.attack) : 1.0;
      const double release = std::min(1.0, static_cast<double>(end - i) / (0.01 * fs));
      gate[i] = attack * release * std::exp(-local / env.decay_time);
    }
    position += note + draw(env.min_gap, env.max_gap);
  }
  return gate;
}

inline std::vector<double> render(const HarmonicTone& tone, std::size_t length, int rate, std::mt19937_64& rng) {
  std::vector<double> out(length, 0.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  const double fs = rate;
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> phases(static_cast<std::size_t>(std::max(tone.partials, 0)));
  for (auto& p : phases) p = phase_dist(rng);
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i) / fs;
    double base = two_pi * tone.f0 * t;
    if (tone.vibrato_rate > 0.0) {
      base -= tone.f0 * tone.vibrato_depth / tone.vibrato_rate * std::cos(two_pi * tone.vibrato_rate * t);
    }
    double acc = 0.0;
    for (int k = 1; k <= tone.partials; ++k) {
      if (k * tone.f0 * (1.0 + tone.vibrato_depth) >= 0.5 * fs) break;
      acc += std::pow(static_cast<double>(k), -tone.partial_decay) * std::sin(k * base + phases[static_cast<std::size_t>(k - 1)]);
    }
    out[i] = acc;
  }
  if (tone.envelope.enabled) {
    const auto gate = note_gate(tone.envelope, length, rate, rng);
    for (std::size_t i = 0; i < length; ++i) out[i] *= gate[i];
  }
  return out;
}

inline std::vector<double> render(const FilteredNoise& noise, std::size_t length, int rate, std::mt19937_64& rng) {
  if (!(noise.low_hz >= 0.0 && noise.high_hz > noise.low_hz)) throw Error("filtered noise: invalid band");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> white(length);
  for (auto& v : white) v = normal(rng);
  Eigen::FFT<double> fft;
  std::vector<Complex> spectrum;
  fft.fwd(spectrum, white);
  const double bin_hz = static_cast<double>(rate) / static_cast<double>(length);
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    const std::size_t folded = std::min(k, spectrum.size() - k);
    const double hz = static_cast<double>(folded) * bin_hz;
    if (hz < noise.low_hz || hz > noise.high_hz) spectrum[k] = 0.0;
  }
  std::vector<double> out;
  fft.inv(out, spectrum);
  out.resize(length);
  return out;
}

inline std::vector<double> render(const FileSource& file, std::size_t length, int rate, std::mt19937_64&) {
  const TimeDomainAudio audio = read_wav(file.path);
  if (audio.sample_rate != rate) throw Error("file source " + file.path + ": sample rate differs from the mix");
  if (file.channel >= audio.channels()) throw Error("file source " + file.path + ": channel out of range");
  std::vector<double> out(length, 0.0);
  const std::size_t n = std::min(length, audio.length());
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = audio.samples(static_cast<Eigen::Index>(file.channel), static_cast<Eigen::Index>(i));
  }
  return out;
}

inline void normalize_rms(std::vector<double>& x) {
  double energy = 0.0;
  for (double v : x) energy += v * v;
  if (energy <= 0.0) return;
  const double scale = 1.0 / std::sqrt(energy / static_cast<double>(x.size()));
  for (double& v : x) v *= scale;
}

inline std::vector<double> random_decaying_fir(std::size_t length, double decay_samples, double gain,
                                               std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> h(length);
  double energy = 0.0;
  for (std::size_t k = 0; k < length; ++k) {
    h[k] = normal(rng) * std::exp(-static_cast<double>(k) / decay_samples);
    energy += h[k] * h[k];
  }
  const double scale = energy > 0.0 ? gain / std::sqrt(energy) : 0.0;
  for (double& v : h) v *= scale;
  return h;
}

inline std::vector<double> mixing_fir(const ConvolutiveMixing& conv, double gain, int rate, std::mt19937_64& rng) {
  const double decay = conv.decay_seconds * rate;
  if (!conv.direct_to_reverberant_db) return random_decaying_fir(conv.fir_length, decay, gain, rng);
  std::uniform_int_distribution<std::size_t> delay_dist(0, conv.max_delay);
  const std::size_t delay = delay_dist(rng);
  const double tail_energy = std::pow(10.0, -*conv.direct_to_reverberant_db / 10.0);
  std::vector<double> h(conv.fir_length, 0.0);
  const auto tail = random_decaying_fir(conv.fir_length - delay - 1, decay, std::sqrt(tail_energy), rng);
  h[delay] = 1.0;
  std::copy(tail.begin(), tail.end(), h.begin() + static_cast<std::ptrdiff_t>(delay + 1));
  const double scale = gain / std::sqrt(1.0 + tail_energy);
  for (double& v : h) v *= scale;
  return h;
}

inline std::vector<double> convolve_truncated(const std::vector<double>& x, const std::vector<double>& h) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (h[k] == 0.0) continue;
    for (std::size_t i = k; i < x.size(); ++i) y[i] += h[k] * x[i - k];
  }
  return y;
}

}  // namespace detail

inline void validate(const MixSpec& spec, std::vector<std::string>* warnings = nullptr) {
  const std::size_t N = spec.sources.size();
  const std::size_t M = spec.mic_count();
  if (N < 1) throw Error("mix spec: no sources");
  if (M < N) throw Error("mix spec: fewer microphones than sources");
  if (!(spec.duration > 0.0) || spec.sample_rate <= 0) throw Error("mix spec: invalid duration or sample rate");
  if (const auto* inst = std::get_if<InstantaneousMixing>(&spec.mixing)) {
    if (inst->matrix.rows() != static_cast<Eigen::Index>(M) || inst->matrix.cols() != static_cast<Eigen::Index>(N)) {
      throw Error("mix spec: mixing matrix must be M x N");
    }
    if (!inst->matrix.allFinite()) throw Error("mix spec: mixing matrix must be finite");
  } else {
    const auto& conv = std::get<ConvolutiveMixing>(spec.mixing);
    if (conv.gains.rows() != static_cast<Eigen::Index>(M) || conv.gains.cols() != static_cast<Eigen::Index>(N)) {
      throw Error("mix spec: gain matrix must be M x N");
    }
    if (conv.fir_length == 0 || !(conv.decay_seconds > 0.0)) throw Error("mix spec: invalid FIR parameters");
    if (conv.direct_to_reverberant_db && conv.max_delay + 1 >= conv.fir_length) {
      throw Error("mix spec: direct-path delay must be shorter than the FIR");
    }
  }
  if (warnings != nullptr && (N < 2 || M != N)) {
    warnings->push_back("determined separation expects M = N >= 2 (got M=" + std::to_string(M) +
                        ", N=" + std::to_string(N) + ")");
  }
}

/// Warns when FIRs are too long for the per-frequency mixing model of an STFT
/// with the given window.
inline std::optional<std::string> narrowband_warning(const MixSpec& spec, std::size_t window_length) {
  if (const auto* conv = std::get_if<ConvolutiveMixing>(&spec.mixing); conv && conv->fir_length >= window_length / 2) {
    return "FIR length " + std::to_string(conv->fir_length) + " is not below half the STFT window (" +
           std::to_string(window_length) + ")";
  }
  return std::nullopt;
}

/// Deterministic in `spec.seed`. Sources are rendered at unit RMS.
inline MixResult synthesize(const MixSpec& spec) {
  MixResult result;
  validate(spec, &result.warnings);
  if (auto w = narrowband_warning(spec, 2048)) result.warnings.push_back(*w);
  const std::size_t N = spec.sources.size();
  const std::size_t M = spec.mic_count();
  const auto L = static_cast<std::size_t>(std::llround(spec.duration * spec.sample_rate));
  if (L == 0) throw Error("mix spec: duration shorter than one sample");

  std::mt19937_64 rng(spec.seed);
  std::vector<std::vector<double>> sources;
  sources.reserve(N);
  for (const auto& desc : spec.sources) {
    auto s = std::visit([&](const auto& d) { return detail::render(d, L, spec.sample_rate, rng); }, desc);
    detail::normalize_rms(s);
    sources.push_back(std::move(s));
  }

  const auto Mi = static_cast<Eigen::Index>(M);
  const auto Li = static_cast<Eigen::Index>(L);
  result.images.assign(N, TimeDomainAudio{SampleMatrix::Zero(Mi, Li), spec.sample_rate});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t m = 0; m < M; ++m) {
      std::vector<double> image;
      if (const auto* inst = std::get_if<InstantaneousMixing>(&spec.mixing)) {
        const double a = inst->matrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        image = sources[n];
        for (double& v : image) v *= a;
      } else {
        const auto& conv = std::get<ConvolutiveMixing>(spec.mixing);
        const auto h = detail::mixing_fir(conv, conv.gains(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)),
                                          spec.sample_rate, rng);
        image = detail::convolve_truncated(sources[n], h);
        if (result.filters.empty()) result.filters.assign(M, std::vector<std::vector<double>>(N));
        result.filters[m][n] = h;
      }
      for (std::size_t i = 0; i < L; ++i) result.images[n].samples(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i)) = image[i];
    }
  }

  result.mixture = TimeDomainAudio{SampleMatrix::Zero(Mi, Li), spec.sample_rate};
  for (const auto& img : result.images) result.mixture.samples += img.samples;
  result.references = TimeDomainAudio{SampleMatrix::Zero(static_cast<Eigen::Index>(N), Li), spec.sample_rate};
  for (std::size_t n = 0; n < N; ++n) result.references.samples.row(static_cast<Eigen::Index>(n)) = result.images[n].samples.row(0);

  if (spec.snr_db) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index m = 0; m < Mi; ++m) {
      const double power = result.mixture.samples.row(m).squaredNorm() / static_cast<double>(L);
      const double sigma = std::sqrt(power / std::pow(10.0, *spec.snr_db / 10.0));
      for (Eigen::Index i = 0; i < Li; ++i) result.mixture.samples(m, i) += sigma * normal(rng);
    }
  }
  return result;
}

/// Two continuous harmonic tones (220 Hz and 311 Hz, 10 partials with 1/k
/// decay, slight vibrato), 5 s at 16 kHz, ambient noise at 30 dB SNR. The
/// instantaneous variant mixes with [[1, 0.6], [0.6, 1]]; the convolutive one
/// uses 512-tap random decaying FIRs with the same gains.
inline MixSpec det2_harmonic(std::uint64_t seed, bool convolutive = false) {
  MixSpec spec;
  HarmonicTone a;
  a.f0 = 220.0;
  HarmonicTone b = a;
  b.f0 = 311.0;
  b.vibrato_rate = 5.7;
  spec.sources = {a, b};
  Eigen::MatrixXd gains(2, 2);
  gains << 1.0, 0.6, 0.6, 1.0;
  if (convolutive) {
    spec.mixing = ConvolutiveMixing{gains, 512, 0.02, std::nullopt, 8};
  } else {
    spec.mixing = InstantaneousMixing{gains};
  }
  spec.snr_db = 30.0;
  spec.duration = 5.0;
  spec.sample_rate = 16000;
  spec.seed = seed;
  return spec;
}

/// det2_harmonic with both tones gated into independent random notes.
inline MixSpec det2_harmonic_notes(std::uint64_t seed, bool convolutive = false) {
  MixSpec spec = det2_harmonic(seed, convolutive);
  for (auto& source : spec.sources) std::get<HarmonicTone>(source).envelope.enabled = true;
  return spec;
}

}  // namespace pdsbss

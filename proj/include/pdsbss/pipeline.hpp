#pragma once

#include "pdsbss/metrics.hpp"
#include "pdsbss/solver.hpp"
#include "pdsbss/signal.hpp"

namespace pdsbss {

enum class Method { Fdica, Iva, ModelIva, Hva, WienerOnly };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Fdica: return "fdica";
    case Method::Iva: return "iva";
    case Method::ModelIva: return "model_iva";
    case Method::Hva: return "hva";
    case Method::WienerOnly: return "wiener_only";
  }
  return "unknown";
}

inline Method parse_method(const std::string& name) {
  for (auto m : {Method::Fdica, Method::Iva, Method::ModelIva, Method::Hva, Method::WienerOnly}) {
    if (to_string(m) == name) return m;
  }
  throw Error("unknown method '" + name + "' (expected fdica, iva, model_iva, hva or wiener_only)");
}

/// Everything needed to run one separation.
///
/// `lambda` is method-specific: for fdica/iva it is the penalty weight
/// (default 1); for model_iva it is relative to the mean variance; for hva it
/// is the cepstrum threshold (default 0.08).
struct RunConfig {
  Method method = Method::Hva;
  StftConfig stft;
  double mu1 = 1.0;
  double mu2 = 1.0;
  double alpha = 1.0;
  std::size_t iterations = 200;
  std::optional<double> lambda;
  int kappa = 3;
  std::optional<double> gamma;
  double epsilon = 1e-3;
  double p = 1.0;
  std::size_t quefrency_length = 0;
  std::size_t ref_channel = 0;
  WhiteningMethod whitening = WhiteningMethod::Pca;

  double hva_lambda() const { return lambda.value_or(0.08); }

  void validate() const {
    stft.validate();
    if (!(mu1 > 0.0) || !(mu2 > 0.0)) throw Error("config: step sizes must be positive");
    if (!(alpha > 0.0 && alpha < 2.0)) throw Error("config: alpha must lie in (0, 2)");
    if (lambda && !(*lambda >= 0.0)) throw Error("config: lambda must be nonnegative");
    if (method == Method::Hva) {
      HvaConfig{hva_lambda(), kappa, gamma, epsilon, quefrency_length}.validate();
    } else if (method == Method::WienerOnly) {
      if (gamma && !(*gamma > 0.0)) throw Error("config: gamma must be positive");
    }
    if (method == Method::Fdica && p != 1.0 && !(p <= 1.0)) throw Error("config: p must be <= 1");
  }
};

/// Mixture after STFT, whitening and normalization.
struct PreparedMixture {
  ComplexTensor spectrogram;  // original STFT, M x T x F
  WhiteningRecord whitening;
  DataOperator normalized;    // whitened, divided by its spectral norm
  std::size_t length = 0;
  int sample_rate = 16000;
};

inline PreparedMixture prepare(const TimeDomainAudio& mixture, const StftConfig& stft_cfg,
                               WhiteningMethod whitening = WhiteningMethod::Pca) {
  mixture.validate();
  if (mixture.channels() < 2) throw Error("determined BSS requires N ≥ 2");
  SpectrogramTensor spec = stft(mixture, stft_cfg);
  WhitenedSpectrogram white = whiten(spec.data, whitening);
  DataOperator normalized = normalize(DataOperator(std::move(white.data)));
  return {std::move(spec.data), std::move(white.record), std::move(normalized), mixture.length(),
          mixture.sample_rate};
}

/// Demixing relative to the raw spectrogram: W[f] V[f] scale.
inline DemixingStack effective_demixing(const PreparedMixture& prep, const DemixingStack& w) {
  DemixingStack out(w.bins(), w.rows(), prep.spectrogram.channels());
  for (std::size_t f = 0; f < w.bins(); ++f) {
    out.matricize(f) = prep.normalized.scale() * (w.matricize(f) * prep.whitening.transforms[f]);
  }
  return out;
}

/// Applies w, projects back onto the reference microphone and resynthesizes.
inline TimeDomainAudio reconstruct(const PreparedMixture& prep, const DemixingStack& w, const StftConfig& stft_cfg,
                                   std::size_t ref_channel = 0, std::vector<std::size_t>* pinv_bins = nullptr) {
  const DemixingStack W = effective_demixing(prep, w);
  const DataOperator raw(prep.spectrogram);
  const ComplexTensor shat = apply(raw, W);
  BackProjection bp = back_project(shat, prep.spectrogram, W, ref_channel);
  if (pinv_bins != nullptr) *pinv_bins = bp.pseudo_inverse_bins;
  return istft(bp.images, stft_cfg, prep.length, prep.sample_rate);
}

inline ShrinkStep make_shrink_step(const RunConfig& cfg, const DataOperator& X) {
  switch (cfg.method) {
    case Method::Fdica: {
      const double lambda = cfg.lambda.value_or(1.0);
      if (cfg.p == 1.0) return l1_prox_step(lambda);
      return p_shrinkage_step(lambda, cfg.p);
    }
    case Method::Iva:
      return l21_prox_step(cfg.lambda.value_or(1.0));
    case Method::ModelIva: {
      RealTensor variance = spectral_subtraction_variance(X.observations());
      double mean = 0.0;
      for (double v : variance.flat()) mean += v;
      mean /= static_cast<double>(variance.size());
      return model_iva_mask_step(std::move(variance), cfg.lambda.value_or(1.0) * mean);
    }
    case Method::Hva:
      return hva_mask_step(HvaConfig{cfg.hva_lambda(), cfg.kappa, cfg.gamma, cfg.epsilon, cfg.quefrency_length});
    case Method::WienerOnly:
      return wiener_mask_step(cfg.gamma);
  }
  throw Error("unknown method");
}

inline SolverConfig make_solver_config(const RunConfig& cfg, const DataOperator& X) {
  SolverConfig s;
  s.mu1 = cfg.mu1;
  s.mu2 = cfg.mu2;
  s.alpha = cfg.alpha;
  s.iterations = cfg.iterations;
  s.shrink = make_shrink_step(cfg, X);
  return s;
}

struct SeparationResult {
  TimeDomainAudio estimates;  // N channels
  DemixingStack w;
  Trace trace;
  std::vector<std::size_t> pseudo_inverse_bins;
  std::vector<std::string> warnings;
};

/// Called after every iteration with the current normalized-domain demixing.
using SeparationObserver = std::function<void(std::size_t iteration, const DemixingStack& w)>;

inline SeparationResult separate(const TimeDomainAudio& mixture, const RunConfig& cfg,
                                 const SeparationObserver& observer = {}) {
  cfg.validate();
  PreparedMixture prep = prepare(mixture, cfg.stft, cfg.whitening);
  const SolverConfig solver_cfg = make_solver_config(cfg, prep.normalized);
  IterationObserver hook;
  if (observer) hook = [&](const SolverState& s, const DataOperator&) { observer(s.iteration, s.w); };
  SolveResult solved = solve_normalized(prep.normalized, solver_cfg, hook);

  SeparationResult result;
  if (!solved.step_condition_ok) result.warnings.push_back("mu1 * mu2 > 1: convergence condition violated");
  if (!prep.whitening.regularized_bins.empty()) {
    result.warnings.push_back(std::to_string(prep.whitening.regularized_bins.size()) + " bins needed regularized whitening");
  }
  result.estimates = reconstruct(prep, solved.w, cfg.stft, cfg.ref_channel, &result.pseudo_inverse_bins);
  result.w = std::move(solved.w);
  result.trace = std::move(solved.trace);
  return result;
}

}  // namespace pdsbss

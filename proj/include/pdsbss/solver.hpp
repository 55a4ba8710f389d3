#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <variant>

#include "pdsbss/masks.hpp"

namespace pdsbss {

/// Closed-form penalty P used for objective tracing.
struct Penalty {
  enum class Kind { L1, L21 };
  Kind kind = Kind::L21;
  double lambda = 1.0;
};

inline double penalty_value(const ComplexTensor& s, const Penalty& penalty) {
  double acc = 0.0;
  if (penalty.kind == Penalty::Kind::L1) {
    for (const auto& v : s.flat()) acc += std::abs(v);
  } else {
    for (std::size_t n = 0; n < s.channels(); ++n) {
      for (std::size_t t = 0; t < s.frames(); ++t) {
        double energy = 0.0;
        for (const auto& v : s.row(n, t)) energy += std::norm(v);
        acc += std::sqrt(energy);
      }
    }
  }
  return penalty.lambda * acc;
}

/// P(Xw) - sum_f log|det W[f]|, with |det W[f]| taken as the product of
/// singular values. Returns +inf when some W[f] is singular.
inline double objective(const DemixingStack& w, const DataOperator& X, const Penalty& penalty) {
  double logdet = 0.0;
  for (std::size_t f = 0; f < w.bins(); ++f) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Eigen::MatrixXcd(w.matricize(f)));
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
      const double s = svd.singularValues()(i);
      if (!(s > 0.0)) return std::numeric_limits<double>::infinity();
      logdet += std::log(s);
    }
  }
  return penalty_value(apply(X, w), penalty) - logdet;
}

/// Dual step through a proximity operator. `prox(z, mu2)` must return
/// prox_{(1/mu2) P}[z]; the solver forms z - prox(z, mu2) itself.
struct ProxStep {
  std::function<ComplexTensor(const ComplexTensor&, double)> prox;
  std::optional<Penalty> penalty;
};

/// Dual step through a time-frequency mask: z - M(z) .* z.
struct MaskStep {
  std::function<MaskTensor(const ComplexTensor&)> mask;
};

using ShrinkStep = std::variant<ProxStep, MaskStep>;

inline ProxStep l1_prox_step(double lambda) {
  return {[lambda](const ComplexTensor& z, double mu2) { return prox_l1(z, lambda / mu2); },
          Penalty{Penalty::Kind::L1, lambda}};
}

inline ProxStep l21_prox_step(double lambda) {
  return {[lambda](const ComplexTensor& z, double mu2) { return prox_l21(z, lambda / mu2); },
          Penalty{Penalty::Kind::L21, lambda}};
}

inline ProxStep weighted_l2_prox_step(RealTensor variance, double lambda) {
  return {[variance = std::move(variance), lambda](const ComplexTensor& z, double mu2) {
            return prox_weighted_l2(z, variance, lambda / mu2);
          },
          std::nullopt};
}

inline ProxStep p_shrinkage_step(double lambda, double p) {
  return {[lambda, p](const ComplexTensor& z, double mu2) { return p_shrinkage(z, lambda / mu2, p); }, std::nullopt};
}

inline ProxStep social_shrinkage_step(double lambda, SocialKernel kernel) {
  return {[lambda, kernel = std::move(kernel)](const ComplexTensor& z, double mu2) {
            return social_shrinkage(z, lambda / mu2, kernel);
          },
          std::nullopt};
}

inline MaskStep l1_mask_step(double lambda) {
  return {[lambda](const ComplexTensor& z) { return mask_l1(z, lambda); }};
}

inline MaskStep l21_mask_step(double lambda) {
  return {[lambda](const ComplexTensor& z) { return mask_l21(z, lambda); }};
}

inline MaskStep model_iva_mask_step(RealTensor variance, double lambda) {
  auto mask = std::make_shared<const MaskTensor>(mask_model_iva(variance, lambda));
  return {[mask](const ComplexTensor& z) {
    detail::require_same_shape(z, *mask, "model_iva mask");
    return *mask;
  }};
}

inline MaskStep hva_mask_step(HvaConfig cfg) {
  cfg.validate();
  return {[cfg](const ComplexTensor& z) { return hva_mask(z, cfg); }};
}

/// Wiener-like mask of the plain powers |z|^2 (HVA without cepstrum processing).
inline MaskStep wiener_mask_step(std::optional<double> gamma = std::nullopt) {
  return {[gamma](const ComplexTensor& z) {
    RealTensor power(z.channels(), z.frames(), z.bins());
    auto zf = z.flat();
    auto pf = power.flat();
    for (std::size_t i = 0; i < zf.size(); ++i) pf[i] = std::norm(zf[i]);
    return wiener_like_mask(power, gamma.value_or(1.0 / static_cast<double>(z.channels())));
  }};
}

struct SolverConfig {
  double mu1 = 1.0;
  double mu2 = 1.0;
  double alpha = 1.0;
  std::size_t iterations = 200;
  ShrinkStep shrink = l21_prox_step(1.0);

  void validate() const {
    if (!(mu1 > 0.0) || !(mu2 > 0.0)) throw Error("solver: step sizes must be positive");
    if (!(alpha > 0.0 && alpha < 2.0)) throw Error("solver: alpha must lie in (0, 2)");
    if (const auto* p = std::get_if<ProxStep>(&shrink); p != nullptr && !p->prox) throw Error("solver: empty prox");
    if (const auto* m = std::get_if<MaskStep>(&shrink); m != nullptr && !m->mask) throw Error("solver: empty mask");
  }
};

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based; describes w^{[iteration + 1]}
  std::optional<double> objective;
  double w_norm = 0.0;
  std::optional<double> mask_mean;
  std::optional<double> mask_min;
  std::optional<double> mask_max;
  double seconds = 0.0;
};

using Trace = std::vector<IterationRecord>;

struct SolverState {
  DemixingStack w;
  ComplexTensor y;
  std::size_t iteration = 0;
  Trace trace;

  /// w = I, y = 0.
  static SolverState initial(const DataOperator& X) {
    return {DemixingStack::identity(X.bins(), X.channels()), ComplexTensor(X.channels(), X.frames(), X.bins()), 0, {}};
  }
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t iteration, Trace partial)
      : Error("solver diverged at iteration " + std::to_string(iteration)),
        iteration_(iteration),
        trace_(std::move(partial)) {}

  std::size_t iteration() const { return iteration_; }
  const Trace& trace() const { return trace_; }

 private:
  std::size_t iteration_;
  Trace trace_;
};

/// One primal-dual iteration:
///   w~ = prox_{mu1 I}[w - mu1 mu2 X^H y]
///   z  = y + X(2 w~ - w)
///   y~ = z - prox_{P/mu2}[z]   or   z - M(z) .* z
///   (w, y) <- alpha (w~, y~) + (1 - alpha)(w, y)
inline void pds_step_inplace(SolverState& state, const DataOperator& X, const SolverConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  if (state.w.cols() != X.channels() || state.w.bins() != X.bins() || state.y.frames() != X.frames() ||
      state.y.bins() != X.bins() || state.y.channels() != state.w.rows()) {
    throw Error("pds_step: state does not match the data operator");
  }
  const double mu12 = cfg.mu1 * cfg.mu2;
  const double alpha = cfg.alpha;

  DemixingStack v = adjoint_apply(X, state.y);
  {
    auto vv = v.vectorize();
    auto wv = state.w.vectorize();
    for (std::size_t i = 0; i < vv.size(); ++i) vv[i] = wv[i] - mu12 * vv[i];
  }
  DemixingStack w_tilde = prox_logdet(v, cfg.mu1);

  DemixingStack extrapolated = w_tilde;
  {
    auto ev = extrapolated.vectorize();
    auto wv = state.w.vectorize();
    for (std::size_t i = 0; i < ev.size(); ++i) ev[i] = 2.0 * ev[i] - wv[i];
  }
  ComplexTensor z = apply(X, extrapolated);
  {
    auto zf = z.flat();
    auto yf = state.y.flat();
    for (std::size_t i = 0; i < zf.size(); ++i) zf[i] += yf[i];
  }

  IterationRecord record;
  ComplexTensor y_tilde = z;
  if (const auto* step = std::get_if<ProxStep>(&cfg.shrink)) {
    const ComplexTensor p = step->prox(z, cfg.mu2);
    detail::require_same_shape(p, z, "prox step");
    auto yt = y_tilde.flat();
    auto pf = p.flat();
    for (std::size_t i = 0; i < yt.size(); ++i) yt[i] -= pf[i];
  } else {
    const MaskTensor mask = std::get<MaskStep>(cfg.shrink).mask(z);
    detail::require_same_shape(mask, z, "mask step");
    auto yt = y_tilde.flat();
    auto mf = mask.flat();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
    for (std::size_t i = 0; i < yt.size(); ++i) {
      yt[i] -= mf[i] * yt[i];
      lo = std::min(lo, mf[i]);
      hi = std::max(hi, mf[i]);
      sum += mf[i];
    }
    record.mask_mean = sum / static_cast<double>(mf.size());
    record.mask_min = lo;
    record.mask_max = hi;
  }

  if (alpha == 1.0) {
    state.w = std::move(w_tilde);
    state.y = std::move(y_tilde);
  } else {
    auto wv = state.w.vectorize();
    auto wt = w_tilde.vectorize();
    for (std::size_t i = 0; i < wv.size(); ++i) wv[i] = alpha * wt[i] + (1.0 - alpha) * wv[i];
    auto yv = state.y.flat();
    auto yt = y_tilde.flat();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = alpha * yt[i] + (1.0 - alpha) * yv[i];
  }
  ++state.iteration;

  if (!detail::all_finite<Complex>(state.w.vectorize()) || !detail::all_finite<Complex>(state.y.flat())) {
    throw DivergenceError(state.iteration, state.trace);
  }

  record.iteration = state.iteration;
  record.w_norm = std::sqrt(squared_norm(state.w));
  if (const auto* step = std::get_if<ProxStep>(&cfg.shrink); step != nullptr && step->penalty) {
    record.objective = objective(state.w, X, *step->penalty);
  }
  record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  state.trace.push_back(record);
}

inline SolverState pds_step(SolverState state, const DataOperator& X, const SolverConfig& cfg) {
  pds_step_inplace(state, X, cfg);
  return state;
}

using IterationObserver = std::function<void(const SolverState&, const DataOperator&)>;

struct SolveResult {
  DemixingStack w;      // demixing for the normalized observations
  Trace trace;
  double scale = 1.0;   // normalized = scale * whitened
  bool step_condition_ok = true;  // mu1 mu2 <= 1 (||X~||_s = 1)
};

/// Runs exactly cfg.iterations primal-dual steps from w = I, y = 0 on an
/// operator that is already normalized.
inline SolveResult solve_normalized(const DataOperator& X, const SolverConfig& cfg,
                                    const IterationObserver& observer = {}) {
  cfg.validate();
  SolverState state = SolverState::initial(X);
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    pds_step_inplace(state, X, cfg);
    if (observer) observer(state, X);
  }
  return {std::move(state.w), std::move(state.trace), X.scale(), cfg.mu1 * cfg.mu2 <= 1.0 + 1e-12};
}

/// Normalizes the (whitened) observations, then solves.
inline SolveResult solve(const ComplexTensor& x_whitened, const SolverConfig& cfg,
                         const IterationObserver& observer = {}) {
  return solve_normalized(normalize(DataOperator(x_whitened)), cfg, observer);
}

}  // namespace pdsbss

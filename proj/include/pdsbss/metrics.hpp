#pragma once

#include <numeric>
#include <optional>

#include <Eigen/QR>

#include "pdsbss/signal.hpp"

namespace pdsbss {

/// Scores are clamped to +-kScoreCap dB; the caps stand in for +-infinity.
inline constexpr double kScoreCap = 300.0;

struct SourceScore {
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
  std::optional<double> sdr_improvement;  // against the unprocessed mixture
};

struct EvalReport {
  std::vector<SourceScore> scores;        // indexed by reference
  std::vector<std::size_t> permutation;   // reference j -> estimate permutation[j]
};

struct Decomposition {
  Eigen::VectorXd target;
  Eigen::VectorXd interference;
  Eigen::VectorXd artifact;
};

/// Energy ratio in dB, clamped to the score caps.
inline double ratio_db(double num, double den) {
  if (!(num > 0.0)) return -kScoreCap;
  if (!(den > 0.0)) return kScoreCap;
  return std::clamp(10.0 * std::log10(num / den), -kScoreCap, kScoreCap);
}

/// Orthogonal projector onto the span of the reference rows, via thin QR.
class ReferenceSpan {
 public:
  explicit ReferenceSpan(const SampleMatrix& references) : references_(references) {
    for (Eigen::Index j = 0; j < references.rows(); ++j) {
      if (references.row(j).squaredNorm() == 0.0) throw Error("evaluate: reference " + std::to_string(j) + " is zero");
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(references.transpose());
    basis_ = qr.householderQ() * Eigen::MatrixXd::Identity(references.cols(), references.rows());
    const Eigen::VectorXd diag = qr.matrixQR().diagonal().cwiseAbs();
    if (diag.size() > 0 && diag.minCoeff() <= 1e-10 * diag.maxCoeff()) {
      throw Error("evaluate: references are linearly dependent");
    }
  }

  Decomposition decompose(const Eigen::VectorXd& estimate, std::size_t j) const {
    const Eigen::VectorXd ref = references_.row(static_cast<Eigen::Index>(j)).transpose();
    Decomposition d;
    d.target = (estimate.dot(ref) / ref.squaredNorm()) * ref;
    const Eigen::VectorXd projected = basis_ * (basis_.transpose() * estimate);
    d.interference = projected - d.target;
    d.artifact = estimate - projected;
    return d;
  }

  SourceScore score(const Eigen::VectorXd& estimate, std::size_t j) const {
    const Decomposition d = decompose(estimate, j);
    const double target = d.target.squaredNorm();
    SourceScore s;
    s.sdr = ratio_db(target, (d.interference + d.artifact).squaredNorm());
    s.sir = ratio_db(target, d.interference.squaredNorm());
    s.sar = ratio_db((d.target + d.interference).squaredNorm(), d.artifact.squaredNorm());
    return s;
  }

 private:
  SampleMatrix references_;
  Eigen::MatrixXd basis_;
};

/// Projection-based SDR/SIR/SAR with brute-force permutation resolution
/// (maximum mean SIR). `mixture_ref`, when given, is the single-channel
/// unprocessed mixture used for SDR improvements.
inline EvalReport evaluate(const TimeDomainAudio& estimates, const TimeDomainAudio& references,
                           const std::optional<TimeDomainAudio>& mixture_ref = std::nullopt) {
  const std::size_t N = references.channels();
  if (estimates.channels() != N) throw Error("evaluate: estimate and reference counts differ");
  if (estimates.length() != references.length()) throw Error("evaluate: estimate and reference lengths differ");
  if (mixture_ref && mixture_ref->length() != references.length()) throw Error("evaluate: mixture length differs");
  if (N == 0) throw Error("evaluate: no sources");

  const ReferenceSpan span(references.samples);
  std::vector<std::vector<SourceScore>> table(N, std::vector<SourceScore>(N));  // [reference][estimate]
  for (std::size_t j = 0; j < N; ++j) {
    for (std::size_t e = 0; e < N; ++e) {
      table[j][e] = span.score(estimates.samples.row(static_cast<Eigen::Index>(e)).transpose(), j);
    }
  }

  std::vector<std::size_t> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> best = perm;
  double best_sir = -std::numeric_limits<double>::infinity();
  do {
    double sum = 0.0;
    for (std::size_t j = 0; j < N; ++j) sum += table[j][perm[j]].sir;
    if (sum > best_sir) {
      best_sir = sum;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  EvalReport report;
  report.permutation = best;
  for (std::size_t j = 0; j < N; ++j) {
    SourceScore s = table[j][best[j]];
    if (mixture_ref) {
      const SourceScore base = span.score(mixture_ref->samples.row(0).transpose(), j);
      s.sdr_improvement = s.sdr - base.sdr;
    }
    report.scores.push_back(s);
  }
  return report;
}

}  // namespace pdsbss

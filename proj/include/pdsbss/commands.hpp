#pragma once

#include <iostream>

#include "pdsbss/bench.hpp"
#include "pdsbss/wav.hpp"

namespace pdsbss {

/// Files written by cmd_separate.
struct SeparateOutput {
  std::vector<std::filesystem::path> sources;
  std::filesystem::path trace;
  std::filesystem::path config;
  std::vector<std::string> warnings;
};

namespace detail {

inline void write_trace(const Trace& trace, const RunConfig& run, const std::filesystem::path& path, ReportFormat format) {
  if (format == ReportFormat::Csv) {
    write_text_atomic(path, trace_csv(trace));
  } else {
    Json j{{"schema", kTraceSchema}, {"config", to_json(run)}, {"trace", trace_json(trace)}};
    write_text_atomic(path, j.dump(2) + "\n");
  }
}

inline std::string report_extension(ReportFormat f) { return f == ReportFormat::Csv ? ".csv" : ".json"; }

/// Sorted *.wav files in a directory.
inline std::vector<std::filesystem::path> wav_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no .wav files in " + dir.string());
  return files;
}

/// Stacks the channels of several files into one multichannel signal.
inline TimeDomainAudio stack_wavs(const std::vector<std::filesystem::path>& files) {
  std::vector<TimeDomainAudio> parts;
  Eigen::Index rows = 0;
  for (const auto& f : files) {
    parts.push_back(read_wav(f));
    if (parts.back().length() != parts.front().length()) {
      throw Error("length mismatch: " + f.string() + " has " + std::to_string(parts.back().length()) +
                  " samples, expected " + std::to_string(parts.front().length()));
    }
    if (parts.back().sample_rate != parts.front().sample_rate) throw Error("sample rate mismatch: " + f.string());
    rows += parts.back().samples.rows();
  }
  TimeDomainAudio out{SampleMatrix(rows, parts.front().samples.cols()), parts.front().sample_rate};
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.samples.middleRows(r, p.samples.rows()) = p.samples;
    r += p.samples.rows();
  }
  return out;
}

}  // namespace detail

/// read -> whiten -> normalize -> solve -> apply -> back-project -> istft -> write.
/// Writes source_<n>.wav, trace.{csv,json} and run.json (the resolved
/// configuration with every default) into the output directory. On solver
/// divergence the partial trace is written before the error is rethrown.
inline SeparateOutput cmd_separate(const JobConfig& job) {
  namespace fs = std::filesystem;
  job.run.validate();
  if (job.input.empty()) throw Error("separate: no input file");
  const TimeDomainAudio mixture = read_wav(job.input);
  const fs::path out_dir = job.output_dir;
  fs::create_directories(out_dir);

  SeparateOutput out;
  out.trace = out_dir / ("trace" + detail::report_extension(job.report));
  out.config = out_dir / "run.json";
  write_text_atomic(out.config, to_json(job).dump(2) + "\n");

  SeparationResult result;
  try {
    result = separate(mixture, job.run);
  } catch (const DivergenceError& e) {
    detail::write_trace(e.trace(), job.run, out.trace, job.report);
    throw;
  }
  detail::write_trace(result.trace, job.run, out.trace, job.report);
  for (std::size_t n = 0; n < result.estimates.channels(); ++n) {
    const fs::path path = out_dir / ("source_" + std::to_string(n) + ".wav");
    write_wav(TimeDomainAudio{result.estimates.samples.row(static_cast<Eigen::Index>(n)), result.estimates.sample_rate}, path);
    out.sources.push_back(path);
  }
  out.warnings = std::move(result.warnings);
  if (!result.pseudo_inverse_bins.empty()) {
    out.warnings.push_back(std::to_string(result.pseudo_inverse_bins.size()) + " bins used a pseudo-inverse in back projection");
  }
  return out;
}

struct MixOutput {
  std::filesystem::path mixture;
  std::vector<std::filesystem::path> references;
  std::vector<std::string> warnings;
};

/// Writes mixture.wav, references/reference_<n>.wav (source images at
/// microphone 0) and spec.json (the resolved specification).
inline MixOutput cmd_mix(const MixSpec& spec, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  const MixResult mix = synthesize(spec);
  fs::create_directories(out_dir / "references");
  MixOutput out;
  out.mixture = out_dir / "mixture.wav";
  write_wav(mix.mixture, out.mixture);
  for (std::size_t n = 0; n < mix.references.channels(); ++n) {
    const fs::path path = out_dir / "references" / ("reference_" + std::to_string(n) + ".wav");
    write_wav(TimeDomainAudio{mix.references.samples.row(static_cast<Eigen::Index>(n)), mix.references.sample_rate}, path);
    out.references.push_back(path);
  }
  write_text_atomic(out_dir / "spec.json", to_json(spec).dump(2) + "\n");
  out.warnings = mix.warnings;
  return out;
}

/// Scores every .wav in `estimates_dir` against every .wav in
/// `references_dir` (channels of multichannel files count as separate
/// signals). The optional mixture supplies the baseline for SDR improvement.
inline EvalReport cmd_eval(const std::filesystem::path& estimates_dir, const std::filesystem::path& references_dir,
                           const std::optional<std::filesystem::path>& mixture = std::nullopt,
                           std::size_t ref_channel = 0) {
  const TimeDomainAudio est = detail::stack_wavs(detail::wav_files(estimates_dir));
  const TimeDomainAudio ref = detail::stack_wavs(detail::wav_files(references_dir));
  if (est.length() != ref.length()) {
    throw Error("eval: length mismatch (estimates " + std::to_string(est.length()) + ", references " +
                std::to_string(ref.length()) + " samples)");
  }
  if (est.channels() != ref.channels()) {
    throw Error("eval: " + std::to_string(est.channels()) + " estimates for " + std::to_string(ref.channels()) + " references");
  }
  std::optional<TimeDomainAudio> mix_ref;
  if (mixture) {
    const TimeDomainAudio m = read_wav(*mixture);
    if (ref_channel >= m.channels()) throw Error("eval: reference channel out of range");
    mix_ref = TimeDomainAudio{m.samples.row(static_cast<Eigen::Index>(ref_channel)), m.sample_rate};
  }
  return evaluate(est, ref, mix_ref);
}

inline std::string format_report(const EvalReport& report, ReportFormat format) {
  return format == ReportFormat::Csv ? eval_csv(report) : eval_json(report).dump(2) + "\n";
}

/// Worker count from PDSBSS_WORKERS, else the hardware concurrency.
inline std::size_t bench_workers_from_env() {
  if (const char* v = std::getenv("PDSBSS_WORKERS"); v != nullptr && *v != '\0') {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) throw Error(std::string("PDSBSS_WORKERS must be a positive integer, got '") + v + "'");
    return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline BenchSummary cmd_bench(const GridConfig& grid, const std::filesystem::path& out_dir, std::size_t workers,
                              std::ostream* log = nullptr) {
  std::mutex m;
  return run_bench(grid, out_dir, workers, [&](const std::string& line) {
    if (log == nullptr) return;
    std::lock_guard lock(m);
    *log << line << std::endl;
  });
}

}  // namespace pdsbss

#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

#include "pdsbss/mixgen.hpp"
#include "pdsbss/pipeline.hpp"

namespace pdsbss {

using Json = nlohmann::json;

enum class ReportFormat { Csv, Json };

inline std::string to_string(ReportFormat f) { return f == ReportFormat::Csv ? "csv" : "json"; }

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  throw Error("unknown report format '" + s + "' (expected csv or json)");
}

inline std::string to_string(WhiteningMethod w) { return w == WhiteningMethod::Pca ? "pca" : "symmetric"; }

inline WhiteningMethod parse_whitening(const std::string& s) {
  if (s == "pca") return WhiteningMethod::Pca;
  if (s == "symmetric") return WhiteningMethod::Symmetric;
  throw Error("unknown whitening '" + s + "' (expected pca or symmetric)");
}

/// A separation job: algorithm settings plus where to read and write.
struct JobConfig {
  RunConfig run;
  std::string input;
  std::string output_dir = ".";
  ReportFormat report = ReportFormat::Csv;
};

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw Error(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_or(const Json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw Error(where + ": key '" + key + "' has the wrong type");
  }
}

inline Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) throw Error(where + ": expected a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw Error(where + ": ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

}  // namespace detail

inline Json to_json(const StftConfig& s) {
  return {{"window_length", s.window_length}, {"hop", s.hop}, {"fft_length", s.fft_length}, {"window", "hann"}};
}

inline StftConfig stft_from_json(const Json& j) {
  detail::check_keys(j, {"window_length", "hop", "fft_length", "window"}, "stft");
  StftConfig s;
  s.window_length = detail::get_or<std::size_t>(j, "window_length", s.window_length, "stft");
  s.hop = detail::get_or<std::size_t>(j, "hop", s.hop, "stft");
  s.fft_length = detail::get_or<std::size_t>(j, "fft_length", s.window_length, "stft");
  if (detail::get_or<std::string>(j, "window", "hann", "stft") != "hann") throw Error("stft: only the hann window is supported");
  s.validate();
  return s;
}

/// Full configuration with every default spelled out.
inline Json to_json(const RunConfig& c) {
  Json j;
  j["method"] = to_string(c.method);
  j["stft"] = to_json(c.stft);
  j["solver"] = {{"mu1", c.mu1}, {"mu2", c.mu2}, {"alpha", c.alpha}, {"iterations", c.iterations}};
  j["whitening"] = to_string(c.whitening);
  j["ref_channel"] = c.ref_channel;
  j["lambda"] = c.lambda ? Json(*c.lambda) : Json(nullptr);
  switch (c.method) {
    case Method::Hva:
      j["lambda"] = c.hva_lambda();
      j["kappa"] = c.kappa;
      j["gamma"] = c.gamma ? Json(*c.gamma) : Json("1/N");
      j["epsilon"] = c.epsilon;
      j["quefrency_length"] = c.quefrency_length == 0 ? Json("F") : Json(c.quefrency_length);
      break;
    case Method::WienerOnly:
      j["gamma"] = c.gamma ? Json(*c.gamma) : Json("1/N");
      break;
    case Method::Fdica:
      j["p"] = c.p;
      j["lambda"] = c.lambda.value_or(1.0);
      break;
    case Method::Iva:
      j["lambda"] = c.lambda.value_or(1.0);
      break;
    case Method::ModelIva:
      j["lambda"] = c.lambda.value_or(1.0);
      break;
  }
  return j;
}

/// Parses a run configuration. Parameters that the chosen method does not use
/// are rejected rather than silently ignored.
inline RunConfig run_config_from_json(const Json& j) {
  const std::string where = "config";
  detail::check_keys(j, {"method", "stft", "solver", "whitening", "ref_channel", "lambda", "kappa", "gamma", "epsilon",
                         "p", "quefrency_length"},
                     where);
  RunConfig c;
  c.method = parse_method(detail::get_or<std::string>(j, "method", to_string(c.method), where));
  if (j.contains("stft")) c.stft = stft_from_json(j.at("stft"));
  if (j.contains("solver")) {
    const Json& s = j.at("solver");
    detail::check_keys(s, {"mu1", "mu2", "alpha", "iterations"}, "solver");
    c.mu1 = detail::get_or<double>(s, "mu1", c.mu1, "solver");
    c.mu2 = detail::get_or<double>(s, "mu2", c.mu2, "solver");
    c.alpha = detail::get_or<double>(s, "alpha", c.alpha, "solver");
    c.iterations = detail::get_or<std::size_t>(s, "iterations", c.iterations, "solver");
  }
  c.whitening = parse_whitening(detail::get_or<std::string>(j, "whitening", "pca", where));
  c.ref_channel = detail::get_or<std::size_t>(j, "ref_channel", 0, where);

  auto reject = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
      if (j.contains(k) && !j.at(k).is_null()) {
        throw Error(where + ": '" + k + "' does not apply to method " + to_string(c.method));
      }
    }
  };
  switch (c.method) {
    case Method::Hva: reject({"p"}); break;
    case Method::WienerOnly: reject({"lambda", "kappa", "epsilon", "p", "quefrency_length"}); break;
    case Method::Fdica: reject({"kappa", "gamma", "epsilon", "quefrency_length"}); break;
    case Method::Iva:
    case Method::ModelIva: reject({"kappa", "gamma", "epsilon", "p", "quefrency_length"}); break;
  }
  if (j.contains("lambda") && j.at("lambda").is_number()) c.lambda = j.at("lambda").get<double>();
  c.kappa = detail::get_or<int>(j, "kappa", c.kappa, where);
  if (j.contains("gamma") && j.at("gamma").is_number()) c.gamma = j.at("gamma").get<double>();
  c.epsilon = detail::get_or<double>(j, "epsilon", c.epsilon, where);
  c.p = detail::get_or<double>(j, "p", c.p, where);
  if (j.contains("quefrency_length") && j.at("quefrency_length").is_number()) {
    c.quefrency_length = j.at("quefrency_length").get<std::size_t>();
  }
  c.validate();
  return c;
}

inline JobConfig job_config_from_json(const Json& j) {
  Json run = j;
  JobConfig job;
  if (run.contains("input")) job.input = run.at("input").get<std::string>(), run.erase("input");
  if (run.contains("output_dir")) job.output_dir = run.at("output_dir").get<std::string>(), run.erase("output_dir");
  if (run.contains("report")) job.report = parse_report_format(run.at("report").get<std::string>()), run.erase("report");
  job.run = run_config_from_json(run);
  return job;
}

inline Json to_json(const JobConfig& job) {
  Json j = to_json(job.run);
  j["input"] = job.input;
  j["output_dir"] = job.output_dir;
  j["report"] = to_string(job.report);
  return j;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// ---- mixture specifications ----

inline SourceDescriptor source_from_json(const Json& j) {
  const std::string type = detail::get_or<std::string>(j, "type", "", "source");
  if (type == "harmonic") {
    detail::check_keys(j, {"type", "f0", "partials", "partial_decay", "vibrato_depth", "vibrato_rate", "notes"}, "harmonic source");
    HarmonicTone h;
    h.f0 = detail::get_or<double>(j, "f0", h.f0, "harmonic source");
    h.partials = detail::get_or<int>(j, "partials", h.partials, "harmonic source");
    h.partial_decay = detail::get_or<double>(j, "partial_decay", h.partial_decay, "harmonic source");
    h.vibrato_depth = detail::get_or<double>(j, "vibrato_depth", h.vibrato_depth, "harmonic source");
    h.vibrato_rate = detail::get_or<double>(j, "vibrato_rate", h.vibrato_rate, "harmonic source");
    h.envelope.enabled = detail::get_or<bool>(j, "notes", false, "harmonic source");
    return h;
  }
  if (type == "noise") {
    detail::check_keys(j, {"type", "low_hz", "high_hz"}, "noise source");
    FilteredNoise n;
    n.low_hz = detail::get_or<double>(j, "low_hz", n.low_hz, "noise source");
    n.high_hz = detail::get_or<double>(j, "high_hz", n.high_hz, "noise source");
    return n;
  }
  if (type == "file") {
    detail::check_keys(j, {"type", "path", "channel"}, "file source");
    FileSource f;
    f.path = detail::get_or<std::string>(j, "path", "", "file source");
    f.channel = detail::get_or<std::size_t>(j, "channel", 0, "file source");
    if (f.path.empty()) throw Error("file source: missing path");
    return f;
  }
  throw Error("source: unknown type '" + type + "' (expected harmonic, noise or file)");
}

inline Json to_json(const SourceDescriptor& s) {
  if (const auto* h = std::get_if<HarmonicTone>(&s)) {
    return {{"type", "harmonic"}, {"f0", h->f0}, {"partials", h->partials}, {"partial_decay", h->partial_decay},
            {"vibrato_depth", h->vibrato_depth}, {"vibrato_rate", h->vibrato_rate}, {"notes", h->envelope.enabled}};
  }
  if (const auto* n = std::get_if<FilteredNoise>(&s)) return {{"type", "noise"}, {"low_hz", n->low_hz}, {"high_hz", n->high_hz}};
  const auto& f = std::get<FileSource>(s);
  return {{"type", "file"}, {"path", f.path}, {"channel", f.channel}};
}

/// Either {"preset": "det2-harmonic", "convolutive": bool, "notes": bool, "seed": n}
/// or an explicit description with sources and mixing.
inline MixSpec mix_spec_from_json(const Json& j) {
  if (j.contains("preset")) {
    detail::check_keys(j, {"preset", "convolutive", "notes", "seed"}, "mix preset");
    const auto name = j.at("preset").get<std::string>();
    if (name != "det2-harmonic") throw Error("mix: unknown preset '" + name + "'");
    const auto seed = detail::get_or<std::uint64_t>(j, "seed", 0, "mix preset");
    const bool conv = detail::get_or<bool>(j, "convolutive", false, "mix preset");
    return detail::get_or<bool>(j, "notes", false, "mix preset") ? det2_harmonic_notes(seed, conv) : det2_harmonic(seed, conv);
  }
  detail::check_keys(j, {"sources", "microphones", "mixing", "snr_db", "duration", "sample_rate", "seed"}, "mix");
  MixSpec spec;
  if (!j.contains("sources") || !j.at("sources").is_array()) throw Error("mix: 'sources' must be an array");
  for (const auto& s : j.at("sources")) spec.sources.push_back(source_from_json(s));
  spec.microphones = detail::get_or<std::size_t>(j, "microphones", 0, "mix");
  if (!j.contains("mixing")) throw Error("mix: missing 'mixing'");
  const Json& m = j.at("mixing");
  const auto type = detail::get_or<std::string>(m, "type", "", "mixing");
  if (type == "instantaneous") {
    detail::check_keys(m, {"type", "matrix"}, "mixing");
    spec.mixing = InstantaneousMixing{detail::matrix_from_json(m.at("matrix"), "mixing.matrix")};
  } else if (type == "convolutive") {
    detail::check_keys(m, {"type", "gains", "fir_length", "decay_seconds", "direct_to_reverberant_db", "max_delay"}, "mixing");
    ConvolutiveMixing c;
    c.gains = detail::matrix_from_json(m.at("gains"), "mixing.gains");
    c.fir_length = detail::get_or<std::size_t>(m, "fir_length", c.fir_length, "mixing");
    c.decay_seconds = detail::get_or<double>(m, "decay_seconds", c.decay_seconds, "mixing");
    if (m.contains("direct_to_reverberant_db") && !m.at("direct_to_reverberant_db").is_null()) {
      c.direct_to_reverberant_db = m.at("direct_to_reverberant_db").get<double>();
    }
    c.max_delay = detail::get_or<std::size_t>(m, "max_delay", c.max_delay, "mixing");
    spec.mixing = c;
  } else {
    throw Error("mixing: unknown type '" + type + "' (expected instantaneous or convolutive)");
  }
  if (j.contains("snr_db") && !j.at("snr_db").is_null()) spec.snr_db = j.at("snr_db").get<double>();
  spec.duration = detail::get_or<double>(j, "duration", spec.duration, "mix");
  spec.sample_rate = detail::get_or<int>(j, "sample_rate", spec.sample_rate, "mix");
  spec.seed = detail::get_or<std::uint64_t>(j, "seed", spec.seed, "mix");
  validate(spec);
  return spec;
}

inline Json to_json(const MixSpec& spec) {
  Json j;
  j["sources"] = Json::array();
  for (const auto& s : spec.sources) j["sources"].push_back(to_json(s));
  j["microphones"] = spec.mic_count();
  if (const auto* inst = std::get_if<InstantaneousMixing>(&spec.mixing)) {
    j["mixing"] = {{"type", "instantaneous"}, {"matrix", detail::matrix_to_json(inst->matrix)}};
  } else {
    const auto& c = std::get<ConvolutiveMixing>(spec.mixing);
    j["mixing"] = {{"type", "convolutive"},
                   {"gains", detail::matrix_to_json(c.gains)},
                   {"fir_length", c.fir_length},
                   {"decay_seconds", c.decay_seconds},
                   {"direct_to_reverberant_db", c.direct_to_reverberant_db ? Json(*c.direct_to_reverberant_db) : Json(nullptr)},
                   {"max_delay", c.max_delay}};
  }
  j["snr_db"] = spec.snr_db ? Json(*spec.snr_db) : Json(nullptr);
  j["duration"] = spec.duration;
  j["sample_rate"] = spec.sample_rate;
  j["seed"] = spec.seed;
  return j;
}

// ---- reports ----

inline constexpr const char* kTraceSchema = "pdsbss.trace.v1";
inline constexpr const char* kEvalSchema = "pdsbss.eval.v1";

namespace detail {
inline std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}
}  // namespace detail

inline std::string trace_csv(const Trace& trace) {
  std::ostringstream os;
  os << "# schema=" << kTraceSchema << "\n";
  os << "iteration,objective,w_norm,mask_mean,mask_min,mask_max,seconds\n";
  for (const auto& r : trace) {
    os << r.iteration << ',' << detail::csv_number(r.objective) << ',' << detail::csv_number(r.w_norm) << ','
       << detail::csv_number(r.mask_mean) << ',' << detail::csv_number(r.mask_min) << ','
       << detail::csv_number(r.mask_max) << ',' << detail::csv_number(r.seconds) << "\n";
  }
  return os.str();
}

inline Json trace_json(const Trace& trace) {
  Json rows = Json::array();
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  for (const auto& r : trace) {
    rows.push_back({{"iteration", r.iteration}, {"objective", opt(r.objective)}, {"w_norm", r.w_norm},
                    {"mask_mean", opt(r.mask_mean)}, {"mask_min", opt(r.mask_min)}, {"mask_max", opt(r.mask_max)},
                    {"seconds", r.seconds}});
  }
  return rows;
}

inline std::string eval_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "# schema=" << kEvalSchema << "\n";
  os << "reference,estimate,sdr,sir,sar,sdr_improvement\n";
  for (std::size_t j = 0; j < report.scores.size(); ++j) {
    const auto& s = report.scores[j];
    os << j << ',' << report.permutation[j] << ',' << detail::csv_number(s.sdr) << ',' << detail::csv_number(s.sir)
       << ',' << detail::csv_number(s.sar) << ',' << detail::csv_number(s.sdr_improvement) << "\n";
  }
  return os.str();
}

inline Json eval_json(const EvalReport& report) {
  Json j;
  j["schema"] = kEvalSchema;
  j["sources"] = Json::array();
  for (std::size_t k = 0; k < report.scores.size(); ++k) {
    const auto& s = report.scores[k];
    j["sources"].push_back({{"reference", k},
                            {"estimate", report.permutation[k]},
                            {"sdr", s.sdr},
                            {"sir", s.sir},
                            {"sar", s.sar},
                            {"sdr_improvement", s.sdr_improvement ? Json(*s.sdr_improvement) : Json(nullptr)}});
  }
  return j;
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_bytes_atomic(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

}  // namespace pdsbss

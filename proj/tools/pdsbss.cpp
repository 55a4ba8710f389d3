// Command-line front end: separate, mix, eval and bench.

#include <iostream>

#include "CLI11.hpp"
#include "pdsbss/commands.hpp"

namespace {

using pdsbss::Json;

/// Flags that override the job configuration. Unset flags leave the file
/// (or the built-in default) alone.
struct RunFlags {
  std::optional<std::string> config, input, output_dir, report, method, whitening, window;
  std::optional<double> mu1, mu2, alpha, lambda, gamma, epsilon, p;
  std::optional<std::size_t> iterations, window_length, hop, fft_length, quefrency_length, ref_channel;
  std::optional<int> kappa;
  bool print_config = false;

  void add_to(CLI::App& app) {
    app.add_option("-c,--config", config, "JSON job configuration");
    app.add_option("-i,--input", input, "multichannel input WAV");
    app.add_option("-o,--output-dir", output_dir, "output directory");
    app.add_option("--report", report, "trace format: csv or json");
    app.add_option("-m,--method", method, "fdica, iva, model_iva, hva or wiener_only");
    app.add_option("--whitening", whitening, "pca or symmetric");
    app.add_option("--mu1", mu1);
    app.add_option("--mu2", mu2);
    app.add_option("--alpha", alpha, "relaxation in (0, 2)");
    app.add_option("-k,--iterations", iterations);
    app.add_option("--lambda", lambda, "penalty weight or cepstrum threshold");
    app.add_option("--kappa", kappa, "cosine shrinkage order");
    app.add_option("--gamma", gamma, "Wiener-like mask exponent (default 1/N)");
    app.add_option("--epsilon", epsilon, "HVA spectral floor");
    app.add_option("--p", p, "p-shrinkage exponent (fdica)");
    app.add_option("--quefrency-length", quefrency_length, "cepstrum length C (default F)");
    app.add_option("--ref-channel", ref_channel, "back-projection microphone");
    app.add_option("--window", window, "STFT window (hann)");
    app.add_option("--window-length", window_length);
    app.add_option("--hop", hop);
    app.add_option("--fft-length", fft_length);
    app.add_flag("--print-config", print_config, "print the resolved configuration and exit");
  }

  Json resolve() const {
    Json j = config ? pdsbss::read_json_file(*config) : Json::object();
    auto set = [&](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    auto set_in = [&](const char* group, const char* key, const auto& v) {
      if (v) j[group][key] = *v;
    };
    set("input", input);
    set("output_dir", output_dir);
    set("report", report);
    set("method", method);
    set("whitening", whitening);
    set("lambda", lambda);
    set("kappa", kappa);
    set("gamma", gamma);
    set("epsilon", epsilon);
    set("p", p);
    set("quefrency_length", quefrency_length);
    set("ref_channel", ref_channel);
    set_in("solver", "mu1", mu1);
    set_in("solver", "mu2", mu2);
    set_in("solver", "alpha", alpha);
    set_in("solver", "iterations", iterations);
    set_in("stft", "window", window);
    set_in("stft", "window_length", window_length);
    set_in("stft", "hop", hop);
    set_in("stft", "fft_length", fft_length);
    if (window_length && !fft_length && !(j.contains("stft") && j["stft"].contains("fft_length"))) {
      j["stft"]["fft_length"] = *window_length;
    }
    return j;
  }
};

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Determined blind source separation by primal-dual splitting"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* separate = app.add_subcommand("separate", "separate a multichannel mixture");
  run_flags.add_to(*separate);

  std::string mix_spec, mix_out = ".";
  std::optional<std::uint64_t> mix_seed;
  auto* mix = app.add_subcommand("mix", "synthesize a mixture and its references");
  mix->add_option("spec", mix_spec, "JSON mixture specification")->required();
  mix->add_option("-o,--output-dir", mix_out, "output directory");
  mix->add_option("--seed", mix_seed, "override the specification seed");

  std::string eval_est, eval_ref, eval_format = "csv";
  std::optional<std::string> eval_mixture, eval_output;
  std::size_t eval_ref_channel = 0;
  auto* eval = app.add_subcommand("eval", "score estimates against references");
  eval->add_option("estimates", eval_est, "directory of estimate WAVs")->required();
  eval->add_option("references", eval_ref, "directory of reference WAVs")->required();
  eval->add_option("--mixture", eval_mixture, "mixture WAV, enables SDR improvement");
  eval->add_option("--ref-channel", eval_ref_channel, "mixture channel used as baseline");
  eval->add_option("--format", eval_format, "csv or json");
  eval->add_option("-o,--output", eval_output, "write the report here instead of stdout");

  std::string bench_grid, bench_out = "bench";
  std::optional<std::size_t> bench_workers;
  auto* bench = app.add_subcommand("bench", "run a parameter grid over synthetic scenarios");
  bench->add_option("grid", bench_grid, "JSON grid configuration")->required();
  bench->add_option("-o,--output-dir", bench_out, "output directory (resumable)");
  bench->add_option("-j,--workers", bench_workers, "worker threads (default: PDSBSS_WORKERS or all cores)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (separate->parsed()) {
      const pdsbss::JobConfig job = pdsbss::job_config_from_json(run_flags.resolve());
      if (run_flags.print_config) {
        std::cout << pdsbss::to_json(job).dump(2) << "\n";
        return 0;
      }
      const auto out = pdsbss::cmd_separate(job);
      print_warnings(out.warnings);
      for (const auto& s : out.sources) std::cout << s.string() << "\n";
      std::cout << out.trace.string() << "\n";
    } else if (mix->parsed()) {
      Json spec_json = pdsbss::read_json_file(mix_spec);
      if (mix_seed) spec_json["seed"] = *mix_seed;
      const auto out = pdsbss::cmd_mix(pdsbss::mix_spec_from_json(spec_json), mix_out);
      print_warnings(out.warnings);
      std::cout << out.mixture.string() << "\n";
      for (const auto& r : out.references) std::cout << r.string() << "\n";
    } else if (eval->parsed()) {
      const auto format = pdsbss::parse_report_format(eval_format);
      std::optional<std::filesystem::path> mixture;
      if (eval_mixture) mixture = *eval_mixture;
      const auto report = pdsbss::cmd_eval(eval_est, eval_ref, mixture, eval_ref_channel);
      const std::string text = pdsbss::format_report(report, format);
      if (eval_output) {
        pdsbss::write_text_atomic(*eval_output, text);
      } else {
        std::cout << text;
      }
    } else if (bench->parsed()) {
      const auto grid = pdsbss::grid_from_json(pdsbss::read_json_file(bench_grid));
      const std::size_t workers = bench_workers ? *bench_workers : pdsbss::bench_workers_from_env();
      const auto summary = pdsbss::cmd_bench(grid, bench_out, workers, &std::cerr);
      std::cout << "cells: " << summary.total << ", run: " << summary.completed << ", failed: " << summary.failed
                << ", skipped: " << summary.skipped << "\n"
                << (std::filesystem::path(bench_out) / "results.csv").string() << "\n";
      if (summary.failed > 0) return 3;
    }
  } catch (const pdsbss::DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (partial trace written)\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#pragma once

#include <atomic>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "pdsbss/config.hpp"

namespace pdsbss {

inline constexpr const char* kBenchSchema = "pdsbss.bench.v1";

/// One method with the parameter values to sweep. An empty lambda list means
/// the method default; kappas are only swept for hva.
struct BenchRun {
  Method method = Method::Hva;
  std::vector<std::optional<double>> lambdas{std::nullopt};
  std::vector<int> kappas{3};
};

struct GridConfig {
  Json scenario = Json{{"preset", "det2-harmonic"}};  // seed is replaced per cell
  std::vector<std::uint64_t> seeds{0};
  RunConfig base;                                     // shared stft/solver settings
  std::vector<std::size_t> checkpoints;               // empty: final iteration only
  std::vector<BenchRun> runs;

  std::vector<std::size_t> eval_points() const {
    std::vector<std::size_t> points = checkpoints;
    points.push_back(base.iterations);
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    if (points.front() == 0 || points.back() > base.iterations) throw Error("bench: checkpoints must lie in [1, iterations]");
    return points;
  }
};

struct BenchCell {
  Method method;
  std::optional<double> lambda;
  int kappa;
  std::uint64_t seed;

  std::string lambda_text() const {
    if (!lambda) return "default";
    std::ostringstream os;
    os << *lambda;
    return os.str();
  }

  std::string id() const {
    return to_string(method) + "_l" + lambda_text() + "_k" + std::to_string(kappa) + "_s" + std::to_string(seed);
  }

  RunConfig config(const RunConfig& base) const {
    RunConfig c = base;
    c.method = method;
    c.lambda = lambda;
    c.kappa = kappa;
    return c;
  }
};

inline GridConfig grid_from_json(const Json& j) {
  detail::check_keys(j, {"scenario", "seeds", "base", "checkpoints", "runs"}, "grid");
  GridConfig g;
  if (j.contains("scenario")) g.scenario = j.at("scenario");
  if (j.contains("seeds")) g.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (g.seeds.empty()) throw Error("grid: no seeds");
  if (j.contains("base")) {
    Json base = j.at("base");
    if (!base.contains("method")) base["method"] = "iva";
    g.base = run_config_from_json(base);
  }
  if (j.contains("checkpoints")) g.checkpoints = j.at("checkpoints").get<std::vector<std::size_t>>();
  if (!j.contains("runs") || !j.at("runs").is_array() || j.at("runs").empty()) throw Error("grid: 'runs' must be a non-empty array");
  for (const auto& r : j.at("runs")) {
    detail::check_keys(r, {"method", "lambda", "kappa"}, "grid run");
    BenchRun run;
    run.method = parse_method(r.at("method").get<std::string>());
    if (r.contains("lambda")) {
      run.lambdas.clear();
      for (const auto& l : r.at("lambda")) run.lambdas.emplace_back(l.is_null() ? std::nullopt : std::optional(l.get<double>()));
      if (run.lambdas.empty()) throw Error("grid run: empty lambda list");
    }
    if (r.contains("kappa")) {
      if (run.method != Method::Hva) throw Error("grid run: kappa only applies to hva");
      run.kappas = r.at("kappa").get<std::vector<int>>();
      if (run.kappas.empty()) throw Error("grid run: empty kappa list");
    } else {
      run.kappas = {g.base.kappa};
    }
    g.runs.push_back(std::move(run));
  }
  g.eval_points();
  return g;
}

/// Cells in a fixed order: run, lambda, kappa, seed.
inline std::vector<BenchCell> expand(const GridConfig& grid) {
  std::vector<BenchCell> cells;
  std::set<std::string> seen;
  for (const auto& run : grid.runs) {
    for (const auto& lambda : run.lambdas) {
      for (int kappa : run.kappas) {
        for (auto seed : grid.seeds) {
          BenchCell cell{run.method, lambda, kappa, seed};
          cell.config(grid.base).validate();
          if (seen.insert(cell.id()).second) cells.push_back(cell);
        }
      }
    }
  }
  return cells;
}

inline MixSpec scenario_for_seed(const Json& scenario, std::uint64_t seed) {
  Json j = scenario;
  j["seed"] = seed;
  return mix_spec_from_json(j);
}

inline std::string bench_header() {
  return std::string("# schema=") + kBenchSchema + "\nmethod,lambda,kappa,seed,iteration,source,metric,value\n";
}

/// Runs one cell and returns its long-form CSV rows (no header).
inline std::string run_cell(const GridConfig& grid, const BenchCell& cell) {
  const RunConfig cfg = cell.config(grid.base);
  const MixSpec spec = scenario_for_seed(grid.scenario, cell.seed);
  const MixResult mix = synthesize(spec);
  const TimeDomainAudio mixture_ref{mix.mixture.samples.topRows(1), mix.mixture.sample_rate};
  const PreparedMixture prep = prepare(mix.mixture, cfg.stft, cfg.whitening);
  SolverConfig solver = make_solver_config(cfg, prep.normalized);
  const auto points = grid.eval_points();
  solver.iterations = points.back();

  std::ostringstream rows;
  rows.precision(17);
  const std::string prefix = to_string(cell.method) + "," + cell.lambda_text() + "," + std::to_string(cell.kappa) + "," +
                             std::to_string(cell.seed) + ",";
  std::size_t next = 0;
  solve_normalized(prep.normalized, solver, [&](const SolverState& state, const DataOperator&) {
    if (next >= points.size() || state.iteration != points[next]) return;
    ++next;
    const TimeDomainAudio estimates = reconstruct(prep, state.w, cfg.stft, cfg.ref_channel);
    const EvalReport report = evaluate(estimates, mix.references, mixture_ref);
    const std::string at = prefix + std::to_string(state.iteration) + ",";
    if (const auto& obj = state.trace.back().objective) rows << at << "all,objective," << *obj << "\n";
    for (std::size_t j = 0; j < report.scores.size(); ++j) {
      const auto& s = report.scores[j];
      rows << at << j << ",sdr," << s.sdr << "\n";
      rows << at << j << ",sir," << s.sir << "\n";
      rows << at << j << ",sar," << s.sar << "\n";
      rows << at << j << ",sdr_improvement," << *s.sdr_improvement << "\n";
    }
  });
  return rows.str();
}

struct BenchSummary {
  std::size_t total = 0;
  std::size_t skipped = 0;  // already completed in an earlier run
  std::size_t completed = 0;
  std::size_t failed = 0;
};

namespace detail {

/// Index lines are "<cell id>\t<ok|failed>\t<message>".
inline std::map<std::string, std::string> read_index(const std::filesystem::path& path) {
  std::map<std::string, std::string> done;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    const auto tab2 = line.find('\t', tab + 1);
    done[line.substr(0, tab)] = line.substr(tab + 1, tab2 == std::string::npos ? std::string::npos : tab2 - tab - 1);
  }
  return done;
}

inline std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\t' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace detail

/// Runs every cell not yet recorded as ok in `<out>/index.tsv` on `workers` threads.
/// Each cell is written atomically to `<out>/cells/<id>.csv`; a failing cell
/// is recorded with a single error row and the run continues. Finally
/// `<out>/results.csv` is assembled in grid order, so an interrupted and
/// resumed run produces the same file as an uninterrupted one.
inline BenchSummary run_bench(const GridConfig& grid, const std::filesystem::path& out_dir, std::size_t workers,
                              const std::function<void(const std::string&)>& log = {}) {
  namespace fs = std::filesystem;
  const auto cells = expand(grid);
  fs::create_directories(out_dir / "cells");
  const fs::path index_path = out_dir / "index.tsv";
  const auto done = detail::read_index(index_path);

  std::vector<const BenchCell*> pending;
  BenchSummary summary;
  summary.total = cells.size();
  for (const auto& c : cells) {
    const auto it = done.find(c.id());
    if (it != done.end() && it->second == "ok" && fs::exists(out_dir / "cells" / (c.id() + ".csv"))) {
      ++summary.skipped;
    } else {
      pending.push_back(&c);
    }
  }

  std::mutex index_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < pending.size(); i = next++) {
      const BenchCell& cell = *pending[i];
      std::string rows, status = "ok", message;
      try {
        rows = run_cell(grid, cell);
      } catch (const std::exception& e) {
        status = "failed";
        message = detail::one_line(e.what());
        rows = to_string(cell.method) + "," + cell.lambda_text() + "," + std::to_string(cell.kappa) + "," +
               std::to_string(cell.seed) + ",,all,error,nan\n";
      }
      write_text_atomic(out_dir / "cells" / (cell.id() + ".csv"), rows);
      std::lock_guard lock(index_mutex);
      std::ofstream index(index_path, std::ios::app);
      index << cell.id() << '\t' << status << '\t' << message << '\n';
      if (!index) throw Error("bench: cannot append to " + index_path.string());
      if (status == "ok") {
        ++summary.completed;
      } else {
        ++summary.failed;
      }
      if (log) log(cell.id() + ": " + status + (message.empty() ? "" : " (" + message + ")"));
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, pending.size()));
  if (pending.size() <= 1 || n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::string all = bench_header();
  for (const auto& c : cells) {
    std::ifstream in(out_dir / "cells" / (c.id() + ".csv"), std::ios::binary);
    all.append(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  write_text_atomic(out_dir / "results.csv", all);
  return summary;
}

}  // namespace pdsbss

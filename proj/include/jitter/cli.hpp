#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "jitter/analysis.hpp"
#include "jitter/config.hpp"
#include "jitter/report.hpp"

namespace jitter::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kVerificationFailed = 1,
  kConfigError = 2,
  kRuntimeFailure = 3,
};

// ---------------------------------------------------------------------------
// RunRecord JSON echo. Wall-clock duration is not written so that repeated
// runs produce identical files.

inline json record_to_json(const RunRecord &r) {
  json epochs = json::array();
  for (const auto &m : r.epochs) {
    json e{{"epoch", m.epoch},
           {"raw_train_loss", m.raw_train_loss},
           {"wrapped_train_loss", m.wrapped_train_loss},
           {"test_loss", m.test_loss},
           {"test_accuracy", m.test_accuracy}};
    if (m.alpha_stats)
      e["alpha"] = {{"mean", m.alpha_stats->mean},
                    {"min", m.alpha_stats->min},
                    {"max", m.alpha_stats->max}};
    if (!m.batches.empty()) {
      const auto jc = jensen_check(m);
      e["jensen"] = {{"lhs", jc.lhs}, {"rhs", jc.rhs}, {"pass", jc.pass}};
    }
    epochs.push_back(std::move(e));
  }
  return json{{"run_id", r.run_id},
              {"seed", r.seed},
              {"wrapper", r.wrapper},
              {"config", json::parse(r.config_json.empty() ? "null" : r.config_json)},
              {"comparison_key", r.comparison_key},
              {"epochs", std::move(epochs)}};
}

inline RunRecord record_from_json(const json &j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.wrapper = j.at("wrapper").get<std::string>();
  r.config_json = j.at("config").dump();
  r.comparison_key = j.at("comparison_key").get<std::string>();
  for (const auto &e : j.at("epochs")) {
    EpochMetrics m;
    m.epoch = e.at("epoch").get<std::size_t>();
    m.raw_train_loss = e.at("raw_train_loss").get<double>();
    m.wrapped_train_loss = e.at("wrapped_train_loss").get<double>();
    m.test_loss = e.at("test_loss").get<double>();
    m.test_accuracy = e.at("test_accuracy").get<double>();
    if (e.contains("alpha"))
      m.alpha_stats = AlphaStats{e["alpha"].at("mean").get<double>(),
                                 e["alpha"].at("min").get<double>(),
                                 e["alpha"].at("max").get<double>()};
    r.epochs.push_back(std::move(m));
  }
  return r;
}

// ---------------------------------------------------------------------------

struct RunOutcome {
  std::optional<RunRecord> record;
  std::optional<FailedRun> failure;
  std::size_t jensen_violations = 0;
  std::filesystem::path csv_path;
};

/// Trains one configured run and writes <output_dir>/<run_id>.csv (flushed
/// per epoch) and <run_id>.json. Training failures are returned, not thrown.
inline RunOutcome execute_run(const RunConfig &config, const DatasetPair &data) {
  namespace fs = std::filesystem;
  const LossWrapper wrapper = parse_wrapper(config.wrapper);
  ExperimentSetup setup;
  setup.run_id = run_id(config);
  setup.config_json = canonical_json(config).dump();
  setup.comparison_key = comparison_json(config).dump();
  setup.train = &data.train;
  setup.test = &data.test;
  setup.hidden = config.hidden;
  setup.wrapper = wrapper;
  setup.optimizer = config.optimizer;
  setup.epochs = config.epochs;
  setup.seed = config.seed;

  RunOutcome out;
  fs::create_directories(config.output_dir);
  out.csv_path = fs::path(config.output_dir) / (setup.run_id + ".csv");
  std::ofstream csv(out.csv_path, std::ios::binary | std::ios::trunc);
  if (!csv)
    throw Error("cannot write " + out.csv_path.string());
  try {
    auto result = run_experiment(setup, &csv, [&out](const EpochMetrics &m) {
      if (!jensen_check(m).pass)
        ++out.jensen_violations;
    });
    std::ofstream js(fs::path(config.output_dir) / (setup.run_id + ".json"),
                     std::ios::binary | std::ios::trunc);
    js << record_to_json(result.record).dump(2) << '\n';
    out.record = std::move(result.record);
  } catch (const Error &e) {
    out.failure = FailedRun{wrapper.label(), config.seed, e.what()};
  }
  return out;
}

inline int cmd_train(const std::filesystem::path &config_path,
                     const std::optional<std::string> &out_dir, std::ostream &out,
                     std::ostream &err) {
  RunConfig config;
  try {
    config = load_run_config(config_path);
    if (out_dir)
      config.output_dir = *out_dir;
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  try {
    const DatasetPair data = build_datasets(config.dataset);
    const RunOutcome run = execute_run(config, data);
    if (run.failure) {
      err << "training failed: " << run.failure->reason << '\n';
      return kRuntimeFailure;
    }
    const auto &rec = *run.record;
    out << "run " << rec.run_id << " (" << rec.wrapper << ", seed " << rec.seed << "): "
        << rec.epochs.size() << " epochs in " << format_float(rec.duration_seconds) << " s\n";
    if (!rec.epochs.empty()) {
      const auto &last = rec.epochs.back();
      out << "final raw_train_loss " << format_float(last.raw_train_loss) << ", test_loss "
          << format_float(last.test_loss) << ", test_accuracy "
          << format_float(last.test_accuracy) << '\n';
    }
    out << "log " << run.csv_path.string() << '\n';
    if (run.jensen_violations > 0) {
      err << "mini-batch upper bound violated in " << run.jensen_violations << " epochs\n";
      return kVerificationFailed;
    }
    return kOk;
  } catch (const Error &e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  } catch (const std::filesystem::filesystem_error &e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

// ---------------------------------------------------------------------------

inline void write_report(const std::filesystem::path &dir, std::span<const ReportRow> rows) {
  std::ofstream(dir / "report.csv", std::ios::binary | std::ios::trunc) << report_csv(rows);
  std::ofstream(dir / "report.txt", std::ios::binary | std::ios::trunc) << report_text(rows);
}

struct SweepSummary {
  std::vector<RunRecord> records;
  std::vector<FailedRun> failures;
  std::vector<ReportRow> rows;
  std::size_t jensen_violations = 0;
  std::size_t epochs_checked = 0;
};

/// Runs wrappers × seeds on `workers` threads, each run isolated, then builds
/// the report. Records come back in (wrapper, seed) order whatever the
/// scheduling.
inline SweepSummary run_sweep(const SweepConfig &sweep) {
  const DatasetPair data = build_datasets(sweep.base.dataset);
  std::vector<RunConfig> runs;
  for (const auto &w : sweep.wrappers)
    for (auto seed : sweep.seeds) {
      RunConfig c = sweep.base;
      c.wrapper = w;
      c.seed = seed;
      runs.push_back(std::move(c));
    }
  std::size_t workers = sweep.workers;
  if (workers == 0)
    workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, runs.size());

  std::vector<RunOutcome> outcomes(runs.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < runs.size(); i = next++) {
        try {
          outcomes[i] = execute_run(runs[i], data);
        } catch (const std::exception &e) {
          outcomes[i].failure =
              FailedRun{parse_wrapper(runs[i].wrapper).label(), runs[i].seed, e.what()};
        }
      }
    });
  for (auto &t : pool)
    t.join();

  SweepSummary s;
  for (auto &o : outcomes) {
    s.jensen_violations += o.jensen_violations;
    if (o.record) {
      s.epochs_checked += o.record->epochs.size();
      s.records.push_back(std::move(*o.record));
    }
    if (o.failure)
      s.failures.push_back(std::move(*o.failure));
  }
  s.rows = compare_runs(s.records, s.failures);
  return s;
}

inline int cmd_sweep(const std::filesystem::path &config_path,
                     const std::optional<std::string> &out_dir, std::ostream &out,
                     std::ostream &err) {
  SweepConfig sweep;
  try {
    sweep = load_sweep_config(config_path);
    if (out_dir)
      sweep.base.output_dir = *out_dir;
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  try {
    const SweepSummary s = run_sweep(sweep);
    write_report(sweep.base.output_dir, s.rows);
    out << report_text(s.rows);
    out << "runs " << s.records.size() << " ok, " << s.failures.size() << " failed; "
        << s.epochs_checked << " epochs checked, " << s.jensen_violations
        << " upper-bound violations\n";
    for (const auto &f : s.failures)
      err << "run failed: " << f.wrapper << " seed " << f.seed << ": " << f.reason << '\n';
    if (!s.failures.empty())
      return kRuntimeFailure;
    return s.jensen_violations > 0 ? kVerificationFailed : kOk;
  } catch (const Error &e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  } catch (const std::filesystem::filesystem_error &e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

/// Rebuilds the comparison report from the RunRecord JSON files in `dir`.
inline int cmd_report(const std::filesystem::path &dir, std::ostream &out, std::ostream &err) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    err << "error: " << dir.string() << " is not a directory\n";
    return kConfigError;
  }
  std::vector<fs::path> files;
  for (const auto &entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> records;
  try {
    for (const auto &f : files) {
      std::ifstream in(f);
      const json j = json::parse(in);
      if (j.is_object() && j.contains("run_id") && j.contains("epochs"))
        records.push_back(record_from_json(j));
    }
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  if (records.empty()) {
    err << "error: no run records in " << dir.string() << '\n';
    return kRuntimeFailure;
  }
  // Grid order for the known methods, then anything else by name; seeds ascending.
  const auto rank = [](const std::string &w) -> std::size_t {
    static const std::vector<std::string> order{"original", "flooding", "jitter_1", "jitter_2",
                                                "jitter_3", "jitter_4", "jitter_5", "jitter_s"};
    for (std::size_t i = 0; i < order.size(); ++i)
      if (w.rfind(order[i], 0) == 0)
        return i;
    return order.size();
  };
  std::stable_sort(records.begin(), records.end(), [&](const RunRecord &a, const RunRecord &b) {
    const auto ra = rank(a.wrapper), rb = rank(b.wrapper);
    if (ra != rb)
      return ra < rb;
    if (a.wrapper != b.wrapper)
      return a.wrapper < b.wrapper;
    return a.seed < b.seed;
  });
  try {
    const auto rows = compare_runs(records);
    write_report(dir, rows);
    out << report_text(rows);
  } catch (const Error &e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

/// Monte Carlo tolerance anchored at n = 10^6 and widened as 1/√n below it.
inline double scaled_tolerance(double tol_at_million, std::size_t n) {
  return n >= 1000000 ? tol_at_million
                      : tol_at_million * std::sqrt(1e6 / static_cast<double>(n));
}

struct CheckLine {
  std::string name;
  double estimate = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

inline void print_check(std::ostream &out, const CheckLine &c) {
  out << c.name << " estimate=" << format_float(c.estimate)
      << " expected=" << format_float(c.expected) << " tol=" << format_float(c.tolerance) << ' '
      << (c.pass ? "PASS" : "FAIL") << '\n';
}

/// Prints every check; kOk only if all of them passed.
inline int report_checks(std::span<const CheckLine> lines, std::ostream &out) {
  bool ok = true;
  for (const auto &c : lines) {
    print_check(out, c);
    ok = ok && c.pass;
  }
  out << (ok ? "all checks passed" : "some checks FAILED") << '\n';
  return ok ? kOk : kVerificationFailed;
}

inline constexpr std::size_t kMonteCarloShards = 4;

/// Effective flooding level of every preset against its closed form.
inline std::vector<CheckLine> theorem1_checks(std::size_t n, std::uint64_t seed) {
  std::vector<CheckLine> lines;
  for (auto name : kPresetNames) {
    const JitterSpec spec = jitter_preset(name);
    const double tol_1m = name == "jitter_s" ? 2e-3 : name == "jitter_5" ? 2e-4 : 1e-4;
    CheckLine c;
    c.name = "theorem1 " + std::string(name);
    c.estimate = effective_flooding_sharded(spec, n, seed, kMonteCarloShards);
    c.expected = *effective_flooding_closed_form(spec);
    c.tolerance = scaled_tolerance(tol_1m, n);
    c.pass = std::abs(c.estimate - c.expected) < c.tolerance;
    lines.push_back(c);
  }
  return lines;
}

/// Dominance, negative-point no-op and the two MSE statements.
inline std::vector<CheckLine> theorem2_checks(std::size_t n, std::uint64_t seed) {
  std::vector<CheckLine> lines;
  RngStream rng(seed, streams::kMonteCarloBase + 100);

  std::size_t bad = 0;
  for (int i = 0; i < 100000; ++i) {
    const double loss = rng.uniform(0.0, 2.0);
    const double alpha = rng.uniform(-1.0, 2.0);
    const double w = jitter_transform(loss, alpha);
    if (w < loss || ((w == loss) != (loss >= alpha)))
      ++bad;
  }
  lines.push_back({"theorem2 dominance counterexamples", double(bad), 0.0, 0.0, bad == 0});

  bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const double loss = rng.uniform(0.0, 5.0);
    const double alpha = -rng.uniform(0.0, 5.0);
    if (jitter_transform(loss, alpha) != loss)
      ++bad;
  }
  lines.push_back({"theorem2 negative-point no-op mismatches", double(bad), 0.0, 0.0, bad == 0});

  const std::size_t mse_n = std::max<std::size_t>(n, 100000);
  const MseReport a = mse_experiment(0.5, 0.2, 0.3, mse_n, rng);
  lines.push_back({"theorem2 mse_wrapped_a - mse_raw_a", a.mse_wrapped_a - a.mse_raw_a, 0.0, 0.0,
                   a.n_condition_a > 0 && a.mse_wrapped_a < a.mse_raw_a});
  lines.push_back({"theorem2 max_abs_diff_b", a.max_abs_diff_b, 0.0, 0.0, a.max_abs_diff_b == 0.0});
  const MseReport b = mse_experiment(0.5, 0.2, 0.0, mse_n, rng);
  lines.push_back({"theorem2 alpha=0 max_abs_diff_b", b.max_abs_diff_b, 0.0, 0.0,
                   b.n_condition_b == b.n_total && b.max_abs_diff_b == 0.0});
  return lines;
}

/// Canned batch lists plus random Jitter epochs drawn from every preset.
inline std::vector<CheckLine> jensen_checks(std::uint64_t seed) {
  std::vector<CheckLine> lines;
  const std::vector<std::pair<double, double>> two{{0.01, 0.02}, {0.03, 0.02}};
  const auto j2 = jensen_check(two);
  lines.push_back({"jensen two-batch lhs", j2.lhs, 0.02, 1e-15,
                   j2.pass && std::abs(j2.lhs - 0.02) < 1e-15 && std::abs(j2.rhs - 0.03) < 1e-15});
  const std::vector<std::pair<double, double>> one{{0.37, 0.11}};
  const auto j1 = jensen_check(one);
  lines.push_back({"jensen single-batch lhs-rhs", j1.lhs - j1.rhs, 0.0, 0.0, j1.lhs == j1.rhs});
  const std::vector<std::pair<double, double>> flat(7, {0.05, 0.02});
  const auto jf = jensen_check(flat);
  lines.push_back({"jensen equal-batches lhs-rhs", jf.lhs - jf.rhs, 0.0, 1e-15,
                   std::abs(jf.lhs - jf.rhs) <= 1e-15});

  RngStream rng(seed, streams::kMonteCarloBase + 200);
  std::size_t violations = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (auto name : kPresetNames) {
    const JitterSpec spec = jitter_preset(name);
    for (int epoch = 0; epoch < 200; ++epoch) {
      std::vector<std::pair<double, double>> batches(1 + rng.below(64));
      for (auto &[r, a] : batches) {
        r = rng.uniform(0.0, 0.08);
        a = sample(spec, rng);
      }
      const auto jc = jensen_check(batches);
      worst = std::max(worst, jc.lhs - jc.rhs);
      if (!jc.pass)
        ++violations;
    }
  }
  lines.push_back({"jensen random epochs max(lhs-rhs)", worst, 0.0, 1e-12, violations == 0});
  return lines;
}

inline int cmd_verify(const std::string &suite, std::size_t n, std::uint64_t seed,
                      std::ostream &out, std::ostream &err) {
  if (suite != "theorem1" && suite != "theorem2" && suite != "jensen" && suite != "all") {
    err << "unknown suite '" << suite << "' (theorem1|theorem2|jensen|all)\n";
    return kConfigError;
  }
  if (n < 10000) {
    err << "--n must be >= 10000\n";
    return kConfigError;
  }
  std::vector<CheckLine> lines;
  auto add = [&lines](std::vector<CheckLine> more) {
    lines.insert(lines.end(), more.begin(), more.end());
  };
  if (suite == "theorem1" || suite == "all")
    add(theorem1_checks(n, seed));
  if (suite == "theorem2" || suite == "all")
    add(theorem2_checks(n, seed));
  if (suite == "jensen" || suite == "all")
    add(jensen_checks(seed));
  return report_checks(lines, out);
}

// ---------------------------------------------------------------------------

struct LandscapeOptions {
  std::string curve = "parabola"; // parabola | double_well | csv
  std::string csv_path;
  double lo = -1.0;
  double hi = 1.0;
  std::size_t grid = 2001;
  std::vector<double> levels{0.25};
  double tol = 0.0;
};

/// Built-in curves: parabola x², double_well (x² − 0.5)².
inline CurveSamples landscape_curve(const LandscapeOptions &o) {
  if (o.curve == "parabola")
    return sample_curve([](double x) { return x * x; }, o.lo, o.hi, o.grid);
  if (o.curve == "double_well")
    return sample_curve([](double x) { return (x * x - 0.5) * (x * x - 0.5); }, o.lo, o.hi, o.grid);
  if (o.curve == "csv") {
    std::ifstream in(o.csv_path);
    if (!in)
      throw ConfigError("cannot open curve csv " + o.csv_path);
    CurveSamples c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || (lineno == 1 && line.find_first_of("0123456789") != 0 &&
                           line[0] != '-' && line[0] != '.' && line[0] != '+'))
        continue; // header
      const auto comma = line.find(',');
      if (comma == std::string::npos)
        throw ConfigError(o.csv_path + ":" + std::to_string(lineno) + ": expected x,y");
      try {
        c.xs.push_back(std::stod(line.substr(0, comma)));
        c.ys.push_back(std::stod(line.substr(comma + 1)));
      } catch (const std::exception &) {
        throw ConfigError(o.csv_path + ":" + std::to_string(lineno) + ": not a number");
      }
    }
    try {
      c.validate();
    } catch (const Error &e) {
      throw ConfigError(o.csv_path + ": " + e.what());
    }
    return c;
  }
  throw ConfigError("unknown curve '" + o.curve + "' (parabola|double_well|csv)");
}

/// Writes `x,original,flooded_<level>...` rows to `csv` and one minima-count
/// line per level to `summary`.
inline int cmd_landscape(const LandscapeOptions &o, std::ostream &csv, std::ostream &summary,
                         std::ostream &err) {
  CurveSamples base;
  try {
    base = landscape_curve(o);
    if (base.xs.size() < 3)
      throw ConfigError("curve needs at least 3 samples");
  } catch (const Error &e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
  std::vector<CurveSamples> flipped;
  for (double level : o.levels)
    flipped.push_back(flip_curve(base, level));

  // x values are written with %.17g so a user grid round-trips exactly.
  auto exact = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  csv << "x,original";
  for (double level : o.levels)
    csv << ",flooded_" << format_float(level);
  csv << '\n';
  for (std::size_t i = 0; i < base.xs.size(); ++i) {
    csv << exact(base.xs[i]) << ',' << format_float(base.ys[i]);
    for (const auto &f : flipped)
      csv << ',' << format_float(f.ys[i]);
    csv << '\n';
  }
  summary << "original minima=" << count_local_minima(base, o.tol) << '\n';
  for (std::size_t k = 0; k < o.levels.size(); ++k) {
    const auto idx = local_minima(flipped[k], o.tol);
    summary << "level=" << format_float(o.levels[k]) << " minima=" << idx.size() << " at x=";
    for (std::size_t m = 0; m < idx.size(); ++m)
      summary << (m ? ";" : "") << format_float(flipped[k].xs[idx[m]]);
    summary << '\n';
  }
  return kOk;
}

} // namespace jitter::cli

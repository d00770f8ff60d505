// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "jitter/cli.hpp"
#include "jitter/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace jitter;

namespace {

int failures = 0;

void line(int id, bool pass, const std::string &what) {
  std::printf("%s %2d %s\n", pass ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!pass)
    ++failures;
}

std::string fmt(const char *f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class Stopwatch {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string read_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const cli::CheckLine *find_check(const std::vector<cli::CheckLine> &lines, const std::string &name) {
  for (const auto &l : lines)
    if (l.name == name)
      return &l;
  return nullptr;
}

fs::path scratch(const std::string &name) {
  const auto p = fs::temp_directory_path() / "jitter_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void theorem1() {
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  Stopwatch sw;
  const auto checks = cli::theorem1_checks(1000000, 0);
  const double secs = sw.seconds();

  const auto *s = find_check(checks, "theorem1 jitter_s");
  const double err_s = s ? std::abs(s->estimate - inv_sqrt_2pi) : INFINITY;
  line(1, err_s < 2e-3 && secs < 5.0,
       fmt("jitter_s effective flooding %.6f vs 1/sqrt(2pi), |err|=%.2e < 2e-3, %.2f s < 5 s",
           s ? s->estimate : NAN, err_s, secs));

  const auto *f = find_check(checks, "theorem1 jitter_5");
  const double err_5 = f ? std::abs(f->estimate - 0.1 * inv_sqrt_2pi) : INFINITY;
  line(2, err_5 < 2e-4,
       fmt("jitter_5 effective flooding %.6f vs 0.1/sqrt(2pi), |err|=%.2e < 2e-4",
           f ? f->estimate : NAN, err_5));
}

void dominance() {
  RngStream rng(3, 0);
  std::size_t bad = 0;
  for (int i = 0; i < 100000; ++i) {
    const double loss = rng.uniform() < 0.05 ? 0.0 : rng.uniform(0.0, 3.0);
    double alpha = rng.uniform() < 0.5 ? rng.normal(0.0, 1.0) : rng.uniform(-0.1, 3.1);
    if (i % 97 == 0)
      alpha = loss; // exercise the tie
    const double w = jitter_transform(loss, alpha);
    if (!(w >= loss) || ((w == loss) != (loss >= alpha)))
      ++bad;
  }
  line(3, bad == 0, fmt("wrapped >= raw with equality iff L >= alpha: %zu counterexamples in 1e5 pairs", bad));
}

void negative_noop() {
  RngStream rng(4, 0);
  std::size_t bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const double loss = i % 50 == 0 ? 0.0 : rng.uniform(0.0, 5.0) * std::pow(10.0, rng.uniform(-6, 2));
    const double alpha = i % 31 == 0 ? -0.0 : (i % 37 == 0 ? 0.0 : -rng.uniform(0.0, 5.0));
    if (jitter_transform(loss, alpha) != loss)
      ++bad;
  }
  line(4, bad == 0, fmt("alpha <= 0 leaves the loss bit-exact: %zu mismatches in 1e4 pairs", bad));
}

void mse() {
  RngStream rng(5, 0);
  Stopwatch sw;
  const MseReport r = mse_experiment(0.5, 0.2, 0.3, 1000000, rng);
  const double secs = sw.seconds();
  line(5, r.n_condition_a > 0 && r.mse_wrapped_a < r.mse_raw_a && r.max_abs_diff_b == 0.0 && secs < 10.0,
       fmt("mse(0.5, 0.2, 0.3): wrapped %.6g < raw %.6g on %zu draws, max diff off-region %g, %.2f s",
           r.mse_wrapped_a, r.mse_raw_a, r.n_condition_a, r.max_abs_diff_b, secs));
}

struct Problem {
  MlpModel model;
  Tensor2D x;
  std::vector<int> labels;
};

Problem random_problem(RngStream &rng) {
  const std::size_t din = 1 + rng.below(6);
  const std::size_t classes = 2 + rng.below(4);
  std::vector<std::size_t> hidden(rng.below(3));
  for (auto &h : hidden)
    h = 1 + rng.below(6);
  Problem p{make_mlp(din, hidden, classes, rng), Tensor2D(1 + rng.below(8), din), {}};
  for (auto &l : p.model.layers)
    for (auto &b : l.bias)
      b = rng.uniform(-0.5, 0.5);
  for (auto &v : p.x.values())
    v = rng.normal(0.0, 1.5);
  for (std::size_t i = 0; i < p.x.rows(); ++i)
    p.labels.push_back(static_cast<int>(rng.below(classes)));
  return p;
}

void gradients() {
  RngStream rng(7, 0);
  double worst = 0.0;
  int done = 0;
  while (done < 100) {
    const auto p = random_problem(rng);
    const double loss = cross_entropy(forward(p.model, p.x).logits, p.labels).mean_loss;
    const double target = rng.uniform(0.0, 2.0 * loss + 0.5);
    if (std::abs(loss - target) <= 1e-3)
      continue;
    LossWrapper w;
    double alpha = 0.0;
    switch (done % 3) {
    case 0:
      w = LossWrapper::original();
      break;
    case 1:
      if (target <= 0.0)
        continue;
      w = LossWrapper::flooding(target);
      break;
    default:
      w = LossWrapper::preset(kPresetNames[rng.below(kPresetNames.size())]);
      alpha = target;
    }
    const auto analytic =
        backward(p.model, forward(p.model, p.x).cache, p.labels, pinned_grad_sign(w, loss, alpha));
    const auto numeric = finite_diff_grad(p.model, p.x, p.labels, w, alpha, 1e-5);
    worst = std::max(worst, max_relative_error(analytic, numeric));
    ++done;
  }
  line(7, worst < 1e-4, fmt("backward vs central differences, 100 draws: max rel err %.2e < 1e-4", worst));
}

void random_walk() {
  Stopwatch sw;
  const auto dir = scratch("criterion8");
  auto flood_cfg = load_run_config(fs::path(JITTER_CONFIG_DIR) / "flooding_blobs.json");
  auto orig_cfg = load_run_config(fs::path(JITTER_CONFIG_DIR) / "original_blobs.json");
  flood_cfg.output_dir = orig_cfg.output_dir = dir.string();
  const DatasetPair data = build_datasets(flood_cfg.dataset);

  const auto flood = cli::execute_run(flood_cfg, data);
  const auto orig = cli::execute_run(orig_cfg, data);
  const double secs = sw.seconds();
  if (!flood.record || !orig.record || flood.record->epochs.size() < 50) {
    line(8, false, "training runs failed");
    return;
  }
  const auto &fe = flood.record->epochs;
  double tail = 0.0;
  for (std::size_t i = fe.size() - 50; i < fe.size(); ++i)
    tail += fe[i].raw_train_loss;
  tail /= 50.0;
  const double orig_final = orig.record->epochs.back().raw_train_loss;
  line(8, tail >= 0.005 && tail <= 0.06 && orig_final < 0.005 && secs < 180.0,
       fmt("flooding b=0.02 tail-50 raw loss %.5f in [0.005, 0.06]; original final %.5f < 0.005; %.1f s",
           tail, orig_final, secs));
}

void landscape() {
  const auto curve = sample_curve([](double x) { return x * x; }, -1.0, 1.0, 2001);
  const double step = 2.0 / 2000.0;
  const auto flipped = flip_curve(curve, 0.25);
  const auto mins = local_minima(flipped);
  bool ok = mins.size() == 2 && count_local_minima(curve) == 1;
  std::string where;
  for (auto i : mins) {
    const double x = flipped.xs[i];
    ok = ok && std::abs(std::abs(x) - 0.5) <= step + 1e-15 && std::abs(flipped.ys[i] - 0.25) <= 1e-12;
    where += fmt("%s%.4f", where.empty() ? "" : ",", x);
  }
  line(9, ok, fmt("flipped x^2 at 0.25: %zu minima at x={%s}, unflipped %zu", mins.size(),
                  where.c_str(), count_local_minima(curve)));
}

std::vector<double> piecewise(std::initializer_list<double> knots, int per_segment) {
  std::vector<double> out;
  auto it = knots.begin();
  double prev = *it++;
  for (; it != knots.end(); ++it) {
    for (int i = 0; i < per_segment; ++i)
      out.push_back(prev + (*it - prev) * i / per_segment);
    prev = *it;
  }
  out.push_back(prev);
  return out;
}

void double_descent() {
  auto ddd = piecewise({1.0, 0.45, 0.7, 0.25}, 30);
  RngStream rng(10, 0);
  for (auto &v : ddd)
    v += rng.normal(0.0, 0.005);
  const auto mono = piecewise({1.0, 0.6, 0.2}, 45);
  const std::vector<double> flat(90, 0.42);
  const bool a = detect_double_descent(ddd).double_descent;
  const bool b = detect_double_descent(mono).double_descent;
  const bool c = detect_double_descent(flat).double_descent;
  line(10, a && !b && !c,
       fmt("down-up-down=%s monotone=%s constant=%s", a ? "true" : "false", b ? "true" : "false",
           c ? "true" : "false"));
}

void reproducibility() {
  const auto dir = scratch("criterion11");
  const auto cfg_path = fs::path(JITTER_CONFIG_DIR) / "flooding_blobs.json";
  const auto cfg = load_run_config(cfg_path);
  const std::string csv = run_id(cfg) + ".csv";
  bool ok = true;
  for (const char *sub : {"a", "b"}) {
    const std::string cmd = fmt("\"%s\" train --config \"%s\" --out \"%s\" > /dev/null", JITTER_CLI_PATH,
                                cfg_path.c_str(), (dir / sub).c_str());
    ok = ok && std::system(cmd.c_str()) == 0;
  }
  const std::string a = read_file(dir / "a" / csv), b = read_file(dir / "b" / csv);
  ok = ok && !a.empty() && a == b;
  line(11, ok, fmt("two CLI invocations of one config+seed: %zu-byte CSVs %s", a.size(),
                   a == b ? "identical" : "differ"));
}

void sweep() {
  auto config = load_sweep_config(fs::path(JITTER_CONFIG_DIR) / "default_sweep.json");
  const auto dir = scratch("sweep");
  config.base.output_dir = dir.string();
  Stopwatch sw;
  const auto s = cli::run_sweep(config);
  cli::write_report(dir, s.rows);
  const double secs = sw.seconds();

  // Independent recomputation of the per-epoch upper bound from the logged batches.
  std::size_t epochs = 0, violations = 0;
  for (const auto &r : s.records)
    for (const auto &e : r.epochs) {
      double rbar = 0.0, abar = 0.0, rhs = 0.0;
      for (const auto &bt : e.batches) {
        const double a = bt.alpha.value_or(0.0);
        rbar += bt.risk;
        abar += a;
        rhs += std::abs(bt.risk - a) + a;
      }
      const double m = static_cast<double>(e.batches.size());
      rbar /= m;
      abar /= m;
      rhs /= m;
      const double lhs = std::abs(rbar - abar) + abar;
      if (!(lhs <= rhs + 1e-12))
        ++violations;
      ++epochs;
    }
  line(6, s.failures.empty() && s.records.size() == 40 && epochs == 40 * 300 && violations == 0 &&
              s.jensen_violations == 0,
       fmt("averaged-risk bound over %zu epochs of %zu runs: %zu violations", epochs,
           s.records.size(), violations + s.jensen_violations));

  const std::string report = read_file(dir / "report.csv");
  std::size_t rows = 0;
  for (const auto &r : s.rows)
    rows += r.seeds == 5 ? 1 : 0;
  const bool ok = rows == 8 && report.rfind(kReportCsvHeader, 0) == 0 && fs::exists(dir / "report.txt") &&
                  secs < 1800.0;
  line(12, ok, fmt("8 methods x 5 seeds in %.1f s < 1800 s; report rows %zu", secs, rows));
  std::printf("%s", report_text(s.rows).c_str());
}

} // namespace

int main() {
  theorem1();
  dominance();
  negative_noop();
  mse();
  gradients();
  random_walk();
  landscape();
  double_descent();
  reproducibility();
  sweep();
  std::printf("%s: %d failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}

#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "jitter/data.hpp"
#include "jitter/losses.hpp"
#include "jitter/mlp.hpp"

namespace jitter {

struct OptimizerConfig {
  double learning_rate = 0.001;
  double momentum = 0.95;
  double weight_decay = 0.0005;
  std::size_t batch_size = 128;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw InvalidArgument("optimizer: learning_rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw InvalidArgument("optimizer: momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
      throw InvalidArgument("optimizer: weight_decay must be >= 0");
    if (batch_size == 0)
      throw InvalidArgument("optimizer: batch_size must be >= 1");
  }
};

/// One mini-batch step: its raw risk R_m, Jitter point α_m and the sign the
/// wrapper put on the gradient.
struct BatchRecord {
  double risk = 0.0;
  std::optional<double> alpha;
  double grad_sign = 1.0;
};

struct AlphaStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double raw_train_loss = 0.0;
  double wrapped_train_loss = 0.0;
  std::vector<BatchRecord> batches;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  /// Absent for the Original wrapper.
  std::optional<AlphaStats> alpha_stats;
};

struct RunRecord {
  std::string run_id;
  std::string config_json;
  /// Canonical form of everything runs must share to be compared (dataset,
  /// model, optimizer, epochs).
  std::string comparison_key;
  std::uint64_t seed = 0;
  std::string wrapper;
  std::vector<EpochMetrics> epochs;
  double duration_seconds = 0.0;
};

/// Seeded permutation of 0..n−1 cut into ⌈n / batch_size⌉ disjoint batches;
/// the last one may be short.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                          RngStream &rng) {
  if (batch_size == 0)
    throw InvalidArgument("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

/// Momentum SGD with coupled weight decay:
///   v ← momentum·v + g + weight_decay·θ,  θ ← θ − lr·v.
inline void sgd_step(MlpModel &params, const GradientSet &grads, GradientSet &velocity,
                     const OptimizerConfig &opt) {
  if (grads.layers.size() != params.layers.size() ||
      velocity.layers.size() != params.layers.size())
    throw ShapeError("sgd_step: gradient/velocity layer count mismatch");
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto &p = params.layers[k];
    const auto &g = grads.layers[k];
    auto &v = velocity.layers[k];
    if (g.weight.rows() != p.weight.rows() || g.weight.cols() != p.weight.cols() ||
        v.weight.rows() != p.weight.rows() || v.weight.cols() != p.weight.cols() ||
        g.bias.size() != p.bias.size() || v.bias.size() != p.bias.size())
      throw ShapeError("sgd_step: shape mismatch in layer " + std::to_string(k));
    auto update = [&opt](std::span<double> pv, std::span<const double> gv, std::span<double> vv) {
      for (std::size_t i = 0; i < pv.size(); ++i) {
        vv[i] = opt.momentum * vv[i] + gv[i] + opt.weight_decay * pv[i];
        pv[i] -= opt.learning_rate * vv[i];
      }
    };
    update(p.weight.values(), g.weight.values(), v.weight.values());
    update(p.bias, g.bias, v.bias);
  }
}

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Unwrapped mean cross-entropy and argmax accuracy over the whole dataset.
inline Evaluation evaluate(const MlpModel &model, const Dataset &ds) {
  const auto logits = forward(model, ds.features).logits;
  const auto ce = cross_entropy(logits, ds.labels);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto r = logits.row(i);
    const auto pred = std::max_element(r.begin(), r.end()) - r.begin();
    if (pred == ds.labels[i])
      ++correct;
  }
  return {ce.mean_loss, static_cast<double>(correct) / static_cast<double>(ds.size())};
}

/// One pass over `train`: for each batch, forward → raw risk → wrap (one
/// Jitter draw) → backward scaled by the wrapper's sign → sgd_step.
/// Test fields of the result are left for the caller.
inline EpochMetrics train_epoch(MlpModel &model, const Dataset &train, const LossWrapper &wrapper,
                                const OptimizerConfig &opt, GradientSet &velocity,
                                RngStream &batch_rng, RngStream &jitter_rng,
                                std::size_t epoch_index = 0) {
  if (train.dim() != model.input_dim() || train.num_classes != model.output_dim())
    throw ShapeError("train_epoch: dataset and model dimensions disagree");
  EpochMetrics m;
  m.epoch = epoch_index;
  const auto batches = make_batches(train.size(), opt.batch_size, batch_rng);
  double raw_sum = 0.0, wrapped_sum = 0.0;
  std::vector<int> labels;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const Tensor2D x = gather_rows(train.features, batches[b]);
    labels.clear();
    for (auto i : batches[b])
      labels.push_back(train.labels[i]);
    const auto fwd = forward(model, x);
    const double risk = cross_entropy(fwd.logits, labels).mean_loss;
    if (!std::isfinite(risk))
      throw NonFiniteLoss(epoch_index, b);
    const WrappedLoss w = apply(wrapper, risk, jitter_rng);
    const auto grads = backward(model, fwd.cache, labels, w.grad_sign);
    sgd_step(model, grads, velocity, opt);
    raw_sum += w.raw;
    wrapped_sum += w.wrapped;
    m.batches.push_back({w.raw, w.alpha, w.grad_sign});
  }
  const double count = static_cast<double>(batches.size());
  m.raw_train_loss = raw_sum / count;
  m.wrapped_train_loss = wrapped_sum / count;
  if (!wrapper.is_original()) {
    AlphaStats s{0.0, std::numeric_limits<double>::infinity(),
                 -std::numeric_limits<double>::infinity()};
    for (const auto &rec : m.batches) {
      s.mean += *rec.alpha;
      s.min = std::min(s.min, *rec.alpha);
      s.max = std::max(s.max, *rec.alpha);
    }
    s.mean /= count;
    m.alpha_stats = s;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Per-run CSV log.

inline constexpr const char *kRunCsvHeader =
    "run_id,seed,epoch,raw_train_loss,wrapped_train_loss,test_loss,test_accuracy,"
    "alpha_mean,alpha_min,alpha_max";

/// %.9g, the serialization used by every CSV the library writes.
inline std::string format_float(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string csv_row(const std::string &run_id, std::uint64_t seed, const EpochMetrics &m) {
  std::string row = run_id + "," + std::to_string(seed) + "," + std::to_string(m.epoch) + "," +
                    format_float(m.raw_train_loss) + "," + format_float(m.wrapped_train_loss) +
                    "," + format_float(m.test_loss) + "," + format_float(m.test_accuracy) + ",";
  if (m.alpha_stats)
    row += format_float(m.alpha_stats->mean) + "," + format_float(m.alpha_stats->min) + "," +
           format_float(m.alpha_stats->max);
  else
    row += ",,";
  return row;
}

// ---------------------------------------------------------------------------

struct ExperimentSetup {
  std::string run_id = "run";
  std::string config_json;
  std::string comparison_key;
  const Dataset *train = nullptr;
  const Dataset *test = nullptr;
  std::vector<std::size_t> hidden{64, 32};
  LossWrapper wrapper;
  OptimizerConfig optimizer;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
};

struct ExperimentResult {
  RunRecord record;
  MlpModel model;
};

/// Fixed-budget training run. When `csv` is given, the header and each epoch
/// row are written and flushed as soon as they exist.
inline ExperimentResult run_experiment(const ExperimentSetup &setup, std::ostream *csv = nullptr,
                                       const std::function<void(const EpochMetrics &)> &on_epoch = {}) {
  if (!setup.train || !setup.test)
    throw InvalidArgument("run_experiment: train and test datasets are required");
  setup.optimizer.validate();
  setup.train->validate();
  setup.test->validate();
  if (setup.train->dim() != setup.test->dim() ||
      setup.train->num_classes != setup.test->num_classes)
    throw ShapeError("run_experiment: train and test datasets disagree in shape");

  const auto t0 = std::chrono::steady_clock::now();
  RngStream init_rng(setup.seed, streams::kWeightInit);
  RngStream batch_rng(setup.seed, streams::kBatchShuffle);
  RngStream jitter_rng(setup.seed, streams::kJitterPoints);

  ExperimentResult out;
  out.model = make_mlp(setup.train->dim(), setup.hidden, setup.train->num_classes, init_rng);
  out.record.run_id = setup.run_id;
  out.record.config_json = setup.config_json;
  out.record.comparison_key = setup.comparison_key;
  out.record.seed = setup.seed;
  out.record.wrapper = setup.wrapper.label();
  GradientSet velocity = zeros_like(out.model);

  if (csv)
    *csv << kRunCsvHeader << '\n' << std::flush;
  for (std::size_t e = 0; e < setup.epochs; ++e) {
    EpochMetrics m = train_epoch(out.model, *setup.train, setup.wrapper, setup.optimizer,
                                 velocity, batch_rng, jitter_rng, e);
    const auto ev = evaluate(out.model, *setup.test);
    if (!std::isfinite(ev.loss))
      throw NonFiniteLoss(e, m.batches.size());
    m.test_loss = ev.loss;
    m.test_accuracy = ev.accuracy;
    if (csv)
      *csv << csv_row(setup.run_id, setup.seed, m) << '\n' << std::flush;
    if (on_epoch)
      on_epoch(m);
    out.record.epochs.push_back(std::move(m));
  }
  out.record.duration_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

} // namespace jitter

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "jitter/data.hpp"
#include "jitter/losses.hpp"
#include "jitter/trainer.hpp"

namespace jitter {

using json = nlohmann::json;

/// Where a run's data comes from. Synthetic data and subsets draw from the
/// dataset's own seed, so every run of a sweep sees the same examples.
struct DatasetConfig {
  std::string kind = "synthetic"; // "synthetic" | "idx"
  BlobParams blobs{1000, 20, 4, 3.0, 0.2};
  std::size_t test_n = 1000;
  double test_label_noise_rate = 0.0;
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t num_classes = 0; // idx only; 0 = infer
  std::size_t subset_n = 0;    // 0 = whole training set
  std::uint64_t seed = 0;
};

struct RunConfig {
  DatasetConfig dataset;
  std::vector<std::size_t> hidden{64, 32};
  json wrapper = "original";
  OptimizerConfig optimizer;
  std::size_t epochs = 300;
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
};

/// A run config whose wrapper and seed are lists; runs are their product.
struct SweepConfig {
  RunConfig base;
  std::vector<json> wrappers;
  std::vector<std::uint64_t> seeds;
  std::size_t workers = 0; // 0 = hardware concurrency
};

/// The eight-method comparison grid.
inline std::vector<json> default_wrapper_grid() {
  return {"original", "flooding", "jitter_1", "jitter_2",
          "jitter_3", "jitter_4", "jitter_5", "jitter_s"};
}

inline constexpr double kDefaultFloodingLevel = 0.02;

namespace detail {

inline std::string locate(const std::string &text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

/// Reads typed fields out of a JSON object and rejects keys nobody asked for.
class ObjectReader {
public:
  ObjectReader(const json &obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object())
      fail("expected an object");
  }

  [[noreturn]] void fail(const std::string &msg) const {
    throw ConfigError(path_.empty() ? msg : path_ + ": " + msg);
  }

  bool has(const char *key) {
    seen_.push_back(key);
    return obj_.contains(key);
  }

  const json &raw(const char *key) {
    seen_.push_back(key);
    return obj_.at(key);
  }

  template <typename T>
  void read(const char *key, T &out) {
    if (!has(key))
      return;
    const json &v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned())
          throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number())
          throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string())
          throw ConfigError("");
      } else {
        // Lists of counts or seeds.
        if (!v.is_array())
          throw ConfigError("");
        for (const auto &e : v)
          if (!e.is_number_unsigned())
            throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception &) {
      throw ConfigError(path_ + "." + key + ": wrong type (got " + v.dump() + ")");
    }
  }

  void finish() const {
    for (const auto &[key, value] : obj_.items())
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
        fail("unknown key '" + key + "'");
  }

private:
  const json &obj_;
  std::string path_;
  std::vector<std::string> seen_;
};

inline DatasetConfig parse_dataset(const json &j) {
  DatasetConfig d;
  ObjectReader r(j, "dataset");
  r.read("kind", d.kind);
  r.read("seed", d.seed);
  r.read("subset_n", d.subset_n);
  if (d.kind == "synthetic") {
    r.read("n", d.blobs.n);
    r.read("dim", d.blobs.dim);
    r.read("num_classes", d.blobs.num_classes);
    r.read("class_separation", d.blobs.class_separation);
    r.read("label_noise_rate", d.blobs.label_noise_rate);
    r.read("test_n", d.test_n);
    r.read("test_label_noise_rate", d.test_label_noise_rate);
    if (d.blobs.num_classes < 2 || d.blobs.num_classes > d.blobs.dim)
      r.fail("num_classes must be in [2, dim]");
    if (d.blobs.n < d.blobs.num_classes || d.test_n < d.blobs.num_classes)
      r.fail("n and test_n must be >= num_classes");
    if (!(d.blobs.label_noise_rate >= 0.0 && d.blobs.label_noise_rate < 1.0) ||
        !(d.test_label_noise_rate >= 0.0 && d.test_label_noise_rate < 1.0))
      r.fail("label noise rates must be in [0, 1)");
  } else if (d.kind == "idx") {
    r.read("train_images", d.train_images);
    r.read("train_labels", d.train_labels);
    r.read("test_images", d.test_images);
    r.read("test_labels", d.test_labels);
    r.read("num_classes", d.num_classes);
    if (d.train_images.empty() || d.train_labels.empty() || d.test_images.empty() ||
        d.test_labels.empty())
      r.fail("idx datasets need train_images, train_labels, test_images, test_labels");
  } else {
    r.fail("kind must be \"synthetic\" or \"idx\"");
  }
  r.finish();
  return d;
}

inline JitterSpec parse_jitter_object(ObjectReader &r, const std::string &kind) {
  JitterSpec spec;
  r.read("correction", spec.correction);
  if (kind == "uniform") {
    UniformDist u{0, 0};
    if (!r.has("lo") || !r.has("hi"))
      r.fail("uniform needs lo and hi");
    r.read("lo", u.lo);
    r.read("hi", u.hi);
    spec.kind = u;
  } else if (kind == "trunc_gaussian") {
    TruncGaussianDist t{0, 0, 0, 0};
    if (!r.has("mu") || !r.has("sigma") || !r.has("lo") || !r.has("hi"))
      r.fail("trunc_gaussian needs mu, sigma, lo and hi");
    r.read("mu", t.mu);
    r.read("sigma", t.sigma);
    r.read("lo", t.lo);
    r.read("hi", t.hi);
    spec.kind = t;
  } else if (kind == "normal") {
    NormalDist nd{0, 1};
    r.read("mu", nd.mu);
    r.read("sigma", nd.sigma);
    spec.kind = nd;
  } else {
    r.fail("unknown wrapper kind '" + kind + "'");
  }
  return spec;
}

} // namespace detail

/// Builds a LossWrapper from its config form: "original", "flooding"
/// (level 0.02), a preset name, {"kind": "flooding", "level": b}, or an inline
/// Jitter distribution {"kind": "uniform" | "trunc_gaussian" | "normal", ...}.
inline LossWrapper parse_wrapper(const json &j, const std::string &path = "wrapper") {
  try {
    if (j.is_string()) {
      const auto name = j.get<std::string>();
      if (name == "original")
        return LossWrapper::original();
      if (name == "flooding")
        return LossWrapper::flooding(kDefaultFloodingLevel);
      if (is_preset(name))
        return LossWrapper::preset(name);
      throw ConfigError(path + ": unknown wrapper '" + name + "'");
    }
    detail::ObjectReader r(j, path);
    std::string kind;
    r.read("kind", kind);
    std::string name = "custom";
    r.read("name", name);
    if (kind == "original") {
      r.finish();
      return LossWrapper::original();
    }
    if (kind == "flooding") {
      double level = kDefaultFloodingLevel;
      r.read("level", level);
      r.finish();
      return LossWrapper::flooding(level);
    }
    const JitterSpec spec = detail::parse_jitter_object(r, kind);
    r.finish();
    return LossWrapper::jitter(spec, name);
  } catch (const InvalidArgument &e) {
    throw ConfigError(path + ": " + e.what());
  }
}

namespace detail {

inline void parse_run_fields(ObjectReader &r, RunConfig &c) {
  if (r.has("dataset"))
    c.dataset = parse_dataset(r.raw("dataset"));
  if (r.has("model")) {
    ObjectReader m(r.raw("model"), "model");
    m.read("hidden", c.hidden);
    m.finish();
  }
  if (r.has("optimizer")) {
    ObjectReader o(r.raw("optimizer"), "optimizer");
    o.read("learning_rate", c.optimizer.learning_rate);
    o.read("momentum", c.optimizer.momentum);
    o.read("weight_decay", c.optimizer.weight_decay);
    o.read("batch_size", c.optimizer.batch_size);
    o.finish();
    if (!(c.optimizer.learning_rate > 0.0))
      o.fail("learning_rate must be > 0");
    try {
      c.optimizer.validate();
    } catch (const InvalidArgument &e) {
      throw ConfigError(e.what());
    }
  }
  r.read("epochs", c.epochs);
  r.read("output_dir", c.output_dir);
  for (auto h : c.hidden)
    if (h == 0)
      r.fail("model.hidden sizes must be >= 1");
}

inline json parse_json_text(const std::string &text, const std::string &origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error &e) {
    std::string what = e.what();
    // Drop nlohmann's "[json.exception.parse_error.101] parse error at line…" prefix.
    if (auto pos = what.find(": syntax error"); pos != std::string::npos)
      what = what.substr(pos + 2);
    throw ConfigError(origin + ":" + locate(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + what);
  }
}

inline std::string read_text(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace detail

/// Parses and validates a single-run config.
inline RunConfig parse_run_config(const std::string &text, const std::string &origin = "config") {
  const json j = detail::parse_json_text(text, origin);
  RunConfig c;
  detail::ObjectReader r(j, "");
  detail::parse_run_fields(r, c);
  if (r.has("wrapper"))
    c.wrapper = r.raw("wrapper");
  r.read("seed", c.seed);
  r.finish();
  parse_wrapper(c.wrapper);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path &path) {
  return parse_run_config(detail::read_text(path), path.string());
}

/// Sweep config: a run config with "wrappers" and "seeds" lists (defaults:
/// the eight-method grid and seeds 0..4) and an optional "workers" count.
inline SweepConfig parse_sweep_config(const std::string &text, const std::string &origin = "config") {
  const json j = detail::parse_json_text(text, origin);
  SweepConfig s;
  detail::ObjectReader r(j, "");
  detail::parse_run_fields(r, s.base);
  s.wrappers = default_wrapper_grid();
  s.seeds = {0, 1, 2, 3, 4};
  if (r.has("wrappers")) {
    const json &w = r.raw("wrappers");
    if (!w.is_array() || w.empty())
      r.fail("wrappers must be a non-empty array");
    s.wrappers.assign(w.begin(), w.end());
  }
  r.read("seeds", s.seeds);
  r.read("workers", s.workers);
  r.finish();
  if (s.seeds.empty())
    r.fail("seeds must be non-empty");
  for (std::size_t i = 0; i < s.wrappers.size(); ++i)
    parse_wrapper(s.wrappers[i], "wrappers[" + std::to_string(i) + "]");
  return s;
}

inline SweepConfig load_sweep_config(const std::filesystem::path &path) {
  return parse_sweep_config(detail::read_text(path), path.string());
}

// ---------------------------------------------------------------------------

inline json to_json(const DatasetConfig &d) {
  json j{{"kind", d.kind}, {"seed", d.seed}, {"subset_n", d.subset_n}};
  if (d.kind == "synthetic") {
    j["n"] = d.blobs.n;
    j["dim"] = d.blobs.dim;
    j["num_classes"] = d.blobs.num_classes;
    j["class_separation"] = d.blobs.class_separation;
    j["label_noise_rate"] = d.blobs.label_noise_rate;
    j["test_n"] = d.test_n;
    j["test_label_noise_rate"] = d.test_label_noise_rate;
  } else {
    j["train_images"] = d.train_images;
    j["train_labels"] = d.train_labels;
    j["test_images"] = d.test_images;
    j["test_labels"] = d.test_labels;
    j["num_classes"] = d.num_classes;
  }
  return j;
}

/// The shared part of a run: everything except wrapper, seed and output_dir.
inline json comparison_json(const RunConfig &c) {
  return json{{"dataset", to_json(c.dataset)},
              {"model", {{"hidden", c.hidden}}},
              {"optimizer",
               {{"learning_rate", c.optimizer.learning_rate},
                {"momentum", c.optimizer.momentum},
                {"weight_decay", c.optimizer.weight_decay},
                {"batch_size", c.optimizer.batch_size}}},
              {"epochs", c.epochs}};
}

/// Fully defaulted config, keys sorted; output_dir is left out so moving the
/// output does not change the run's identity.
inline json canonical_json(const RunConfig &c) {
  json j = comparison_json(c);
  j["wrapper"] = c.wrapper;
  j["seed"] = c.seed;
  return j;
}

/// 64-bit FNV-1a of the canonical config dump, as 16 hex digits.
inline std::string run_id(const RunConfig &c) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canonical_json(c).dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct DatasetPair {
  Dataset train;
  Dataset test;
};

inline DatasetPair build_datasets(const DatasetConfig &d) {
  DatasetPair out;
  if (d.kind == "synthetic") {
    RngStream rng(d.seed, streams::kSyntheticData);
    out.train = synthetic_blobs(d.blobs, rng);
    BlobParams tp = d.blobs;
    tp.n = d.test_n;
    tp.label_noise_rate = d.test_label_noise_rate;
    out.test = synthetic_blobs(tp, rng);
  } else {
    out.train = load_idx(d.train_images, d.train_labels, d.num_classes);
    out.test = load_idx(d.test_images, d.test_labels,
                        d.num_classes ? d.num_classes : out.train.num_classes);
    if (out.test.num_classes != out.train.num_classes || out.test.dim() != out.train.dim())
      throw ShapeError("idx train and test sets disagree in shape or class count");
  }
  if (d.subset_n > 0) {
    RngStream rng(d.seed, streams::kSubset);
    out.train = subset(out.train, d.subset_n, rng);
  }
  return out;
}

} // namespace jitter

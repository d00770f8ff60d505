#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "jitter/samplers.hpp"
#include "jitter/tensor.hpp"

namespace jitter {

/// Weight (d_in × d_out) and bias (d_out) of one dense layer. Also used as
/// the gradient carrier for the same layer.
struct DenseParams {
  Tensor2D weight;
  std::vector<double> bias;

  std::size_t in_dim() const noexcept { return weight.rows(); }
  std::size_t out_dim() const noexcept { return weight.cols(); }

  friend bool operator==(const DenseParams &, const DenseParams &) = default;
};

/// Fully connected network: ReLU on every hidden layer, linear logits.
struct MlpModel {
  std::vector<DenseParams> layers;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto &l : layers)
      n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Throws unless adjacent layer dimensions chain.
  void validate() const {
    if (layers.empty())
      throw ShapeError("MlpModel: no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      if (layers[k].bias.size() != layers[k].out_dim())
        throw ShapeError("MlpModel: bias length mismatch in layer " + std::to_string(k));
      if (k + 1 < layers.size() && layers[k].out_dim() != layers[k + 1].in_dim())
        throw ShapeError("MlpModel: layer " + std::to_string(k) + " does not chain");
    }
  }

  friend bool operator==(const MlpModel &, const MlpModel &) = default;
};

/// Per-layer gradients, shape-congruent with the model they came from.
struct GradientSet {
  std::vector<DenseParams> layers;
};

/// Calls f(double&) on every parameter in a fixed order: per layer, weights
/// row-major then bias.
template <typename Params, typename F>
void for_each_param(Params &p, F &&f) {
  for (auto &layer : p.layers) {
    for (auto &w : layer.weight.values())
      f(w);
    for (auto &b : layer.bias)
      f(b);
  }
}

inline GradientSet zeros_like(const MlpModel &model) {
  GradientSet g;
  g.layers.reserve(model.layers.size());
  for (const auto &l : model.layers)
    g.layers.push_back({Tensor2D(l.in_dim(), l.out_dim()), std::vector<double>(l.out_dim())});
  return g;
}

/// Layer sizes input → hidden… → classes. Weights are Glorot-uniform on
/// ±√(6/(d_in+d_out)), biases zero.
inline MlpModel make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
                         std::size_t num_classes, RngStream &rng) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(num_classes);
  for (auto d : dims)
    if (d == 0)
      throw ShapeError("make_mlp: zero-width layer");
  MlpModel model;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const std::size_t din = dims[k], dout = dims[k + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(din + dout));
    DenseParams layer{Tensor2D(din, dout), std::vector<double>(dout, 0.0)};
    for (auto &w : layer.weight.values())
      w = rng.uniform(-limit, limit);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

namespace detail {
inline std::uint64_t fingerprint(const MlpModel &model) {
  std::uint64_t h = 1469598103934665603ULL;
  for_each_param(model, [&h](const double &v) {
    h ^= std::bit_cast<std::uint64_t>(v);
    h *= 1099511628211ULL;
  });
  return h;
}
} // namespace detail

/// Activations recorded by forward() for the matching backward() call.
struct ForwardCache {
  /// inputs[k] is the input of layer k (inputs[0] is the batch itself).
  std::vector<Tensor2D> inputs;
  /// Pre-activations of each hidden layer.
  std::vector<Tensor2D> pre_activations;
  std::uint64_t model_fingerprint = 0;
};

struct ForwardResult {
  Tensor2D logits;
  ForwardCache cache;
};

inline ForwardResult forward(const MlpModel &model, const Tensor2D &x) {
  model.validate();
  if (x.cols() != model.input_dim())
    throw ShapeError("forward: input has " + std::to_string(x.cols()) +
                     " features, model expects " + std::to_string(model.input_dim()));
  ForwardResult out;
  out.cache.model_fingerprint = detail::fingerprint(model);
  Tensor2D act = x;
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto &layer = model.layers[k];
    Tensor2D z = matmul(act, layer.weight);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      auto row = z.row(i);
      for (std::size_t j = 0; j < row.size(); ++j)
        row[j] += layer.bias[j];
    }
    out.cache.inputs.push_back(std::move(act));
    if (k + 1 == model.layers.size()) {
      out.logits = std::move(z);
    } else {
      act = z;
      for (auto &v : act.values())
        v = v > 0.0 ? v : 0.0;
      out.cache.pre_activations.push_back(std::move(z));
    }
  }
  return out;
}

struct CrossEntropyResult {
  double mean_loss = 0.0;
  Tensor2D probs;
};

/// Row-wise softmax with max subtraction.
inline Tensor2D softmax(const Tensor2D &logits) {
  Tensor2D probs(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto in = logits.row(i);
    auto out = probs.row(i);
    const double m = *std::max_element(in.begin(), in.end());
    double denom = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = std::exp(in[j] - m);
      denom += out[j];
    }
    for (auto &p : out)
      p /= denom;
  }
  return probs;
}

inline void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
  if (labels.size() != rows)
    throw ShapeError("labels: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw InvalidArgument("label " + std::to_string(y) + " out of range [0, " +
                            std::to_string(classes) + ")");
}

/// Mean softmax cross-entropy. Per-row loss is logsumexp(z) − z_y computed
/// from max-shifted logits.
inline CrossEntropyResult cross_entropy(const Tensor2D &logits, std::span<const int> labels) {
  check_labels(labels, logits.rows(), logits.cols());
  if (logits.rows() == 0)
    throw ShapeError("cross_entropy: empty batch");
  CrossEntropyResult out{0.0, softmax(logits)};
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    const double m = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z)
      denom += std::exp(v - m);
    total += std::log(denom) - (z[static_cast<std::size_t>(labels[i])] - m);
  }
  out.mean_loss = total / static_cast<double>(logits.rows());
  return out;
}

/// upstream_scale × ∂(mean cross-entropy)/∂θ by reverse-mode accumulation.
/// ReLU'(0) is taken as 0.
inline GradientSet backward(const MlpModel &model, const ForwardCache &cache,
                            std::span<const int> labels, double upstream_scale) {
  if (cache.inputs.size() != model.layers.size() ||
      cache.pre_activations.size() + 1 != model.layers.size() ||
      cache.model_fingerprint != detail::fingerprint(model))
    throw InvalidArgument("backward: cache does not belong to this model state");
  const std::size_t batch = cache.inputs.front().rows();
  check_labels(labels, batch, model.output_dim());

  // Logits are recomputed from the last layer input rather than stored twice.
  const auto &last = model.layers.back();
  Tensor2D logits = matmul(cache.inputs.back(), last.weight);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < logits.cols(); ++j)
      logits(i, j) += last.bias[j];

  Tensor2D delta = softmax(logits);
  const double scale = upstream_scale / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    delta(i, static_cast<std::size_t>(labels[i])) -= 1.0;
    for (auto &v : delta.row(i))
      v *= scale;
  }

  GradientSet grads;
  grads.layers.resize(model.layers.size());
  for (std::size_t k = model.layers.size(); k-- > 0;) {
    auto &g = grads.layers[k];
    g.weight = matmul_tn(cache.inputs[k], delta);
    g.bias.assign(delta.cols(), 0.0);
    for (std::size_t i = 0; i < delta.rows(); ++i)
      for (std::size_t j = 0; j < delta.cols(); ++j)
        g.bias[j] += delta(i, j);
    if (k == 0)
      break;
    Tensor2D prev = matmul_nt(delta, model.layers[k].weight);
    const auto &z = cache.pre_activations[k - 1];
    auto pv = prev.values();
    const auto zv = z.values();
    for (std::size_t i = 0; i < pv.size(); ++i)
      if (!(zv[i] > 0.0))
        pv[i] = 0.0;
    delta = std::move(prev);
  }
  return grads;
}

/// Batch predictions (argmax of logits, lowest index on ties).
inline std::vector<int> predict(const MlpModel &model, const Tensor2D &x) {
  const auto logits = forward(model, x).logits;
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto r = logits.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

} // namespace jitter

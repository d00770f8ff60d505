#pragma once

#include <algorithm>
#include <cmath>

#include "jitter/losses.hpp"
#include "jitter/mlp.hpp"

namespace jitter {

/// Wrapped batch loss of `model` on (x, labels) with the Jitter point pinned.
inline double wrapped_batch_loss(const MlpModel &model, const Tensor2D &x,
                                 std::span<const int> labels, const LossWrapper &wrapper,
                                 double alpha_fixed) {
  const double raw = cross_entropy(forward(model, x).logits, labels).mean_loss;
  return wrapped_value(wrapper, raw, alpha_fixed);
}

/// Central-difference gradient of the wrapped loss, one parameter at a time.
/// Reference oracle for backward(); O(parameters × forward).
inline GradientSet finite_diff_grad(const MlpModel &model, const Tensor2D &x,
                                    std::span<const int> labels, const LossWrapper &wrapper,
                                    double alpha_fixed, double eps) {
  if (!(eps > 0.0))
    throw InvalidArgument("finite_diff_grad: eps must be > 0");
  MlpModel probe = model;
  GradientSet grads = zeros_like(model);
  std::vector<double *> params, outs;
  for_each_param(probe, [&params](double &v) { params.push_back(&v); });
  for_each_param(grads, [&outs](double &v) { outs.push_back(&v); });
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + eps;
    const double up = wrapped_batch_loss(probe, x, labels, wrapper, alpha_fixed);
    *params[i] = saved - eps;
    const double down = wrapped_batch_loss(probe, x, labels, wrapper, alpha_fixed);
    *params[i] = saved;
    *outs[i] = (up - down) / (2.0 * eps);
  }
  return grads;
}

/// Largest per-parameter |a − b| / max(|a|, |b|, floor). The floor keeps
/// parameters with vanishing gradient (dead ReLU units) from dividing by zero.
inline double max_relative_error(const GradientSet &a, const GradientSet &b,
                                 double floor = 1e-6) {
  std::vector<double> av, bv;
  for_each_param(a, [&av](const double &v) { av.push_back(v); });
  for_each_param(b, [&bv](const double &v) { bv.push_back(v); });
  if (av.size() != bv.size())
    throw ShapeError("max_relative_error: gradient sets differ in size");
  double worst = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double denom = std::max({std::abs(av[i]), std::abs(bv[i]), floor});
    worst = std::max(worst, std::abs(av[i] - bv[i]) / denom);
  }
  return worst;
}

} // namespace jitter

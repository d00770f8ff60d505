#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <variant>

#include "jitter/samplers.hpp"

namespace jitter {

// |loss − level| + level, written branchwise: the loss ≥ level branch returns
// `loss` untouched, so no-op cases are bit-exact instead of (loss − a) + a.
inline double reflect_below(double loss, double level) {
  return loss >= level ? loss : 2.0 * level - loss;
}

/// Flooding: |loss − b| + b, never below b.
inline double flooding_transform(double loss, double b) { return reflect_below(loss, b); }

/// Jitter: |loss − α| + α for a sampled Jitter point α.
inline double jitter_transform(double loss, double alpha) { return reflect_below(loss, alpha); }

/// Chain-rule multiplier of the absolute-value wrapper. The kink loss == α
/// descends.
inline double grad_sign(double loss, double alpha) { return loss >= alpha ? 1.0 : -1.0; }

struct OriginalWrapper {};

struct FloodingWrapper {
  double level;
};

struct JitterWrapper {
  JitterSpec spec;
  std::string name = "custom";
};

/// Which transform wraps the batch loss before backpropagation.
class LossWrapper {
public:
  using Variant = std::variant<OriginalWrapper, FloodingWrapper, JitterWrapper>;

  LossWrapper() = default;

  static LossWrapper original() { return LossWrapper(OriginalWrapper{}); }

  static LossWrapper flooding(double level) {
    if (!(level > 0.0))
      throw InvalidArgument("flooding level must be > 0");
    return LossWrapper(FloodingWrapper{level});
  }

  static LossWrapper jitter(JitterSpec spec, std::string name = "custom") {
    spec.validate();
    return LossWrapper(JitterWrapper{spec, std::move(name)});
  }

  static LossWrapper preset(std::string_view name) {
    return jitter(jitter_preset(name), std::string(name));
  }

  const Variant &variant() const noexcept { return v_; }
  bool is_original() const noexcept { return std::holds_alternative<OriginalWrapper>(v_); }

  /// Short label used in logs and reports.
  std::string label() const {
    return std::visit(
        [](const auto &w) -> std::string {
          using T = std::decay_t<decltype(w)>;
          if constexpr (std::is_same_v<T, OriginalWrapper>) {
            return "original";
          } else if constexpr (std::is_same_v<T, FloodingWrapper>) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "flooding_%g", w.level);
            return buf;
          } else {
            return w.name;
          }
        },
        v_);
  }

private:
  explicit LossWrapper(Variant v) : v_(std::move(v)) {}
  Variant v_ = OriginalWrapper{};
};

struct WrappedLoss {
  double raw = 0.0;
  double wrapped = 0.0;
  std::optional<double> alpha;
  double grad_sign = 1.0;
};

/// Wraps one batch-mean loss. Jitter wrappers consume exactly one draw from
/// `rng`; the others leave it untouched.
inline WrappedLoss apply(const LossWrapper &wrapper, double raw_loss, RngStream &rng) {
  if (!(raw_loss >= 0.0))
    throw InvalidArgument("apply: raw loss must be >= 0");
  return std::visit(
      [&](const auto &w) -> WrappedLoss {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, OriginalWrapper>) {
          return {raw_loss, raw_loss, std::nullopt, 1.0};
        } else if constexpr (std::is_same_v<T, FloodingWrapper>) {
          return {raw_loss, flooding_transform(raw_loss, w.level), w.level,
                  grad_sign(raw_loss, w.level)};
        } else {
          const double alpha = sample(w.spec, rng);
          return {raw_loss, jitter_transform(raw_loss, alpha), alpha, grad_sign(raw_loss, alpha)};
        }
      },
      wrapper.variant());
}

/// Wrapped loss with the Jitter point pinned to `alpha` (ignored for
/// Original; Flooding uses its own level).
inline double wrapped_value(const LossWrapper &wrapper, double raw_loss, double alpha) {
  return std::visit(
      [&](const auto &w) -> double {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, OriginalWrapper>)
          return raw_loss;
        else if constexpr (std::is_same_v<T, FloodingWrapper>)
          return flooding_transform(raw_loss, w.level);
        else
          return jitter_transform(raw_loss, alpha);
      },
      wrapper.variant());
}

/// grad_sign with the Jitter point pinned, matching wrapped_value.
inline double pinned_grad_sign(const LossWrapper &wrapper, double raw_loss, double alpha) {
  return std::visit(
      [&](const auto &w) -> double {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, OriginalWrapper>)
          return 1.0;
        else if constexpr (std::is_same_v<T, FloodingWrapper>)
          return grad_sign(raw_loss, w.level);
        else
          return grad_sign(raw_loss, alpha);
      },
      wrapper.variant());
}

} // namespace jitter

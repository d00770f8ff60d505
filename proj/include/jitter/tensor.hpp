#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "jitter/error.hpp"

namespace jitter {

/// Dense row-major matrix of doubles. The only numeric container in the
/// library; vectors are 1×n or n×1 tensors or plain std::vector<double>.
class Tensor2D {
public:
  Tensor2D() = default;

  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_)
      throw ShapeError("Tensor2D: " + std::to_string(values_.size()) +
                       " values for shape " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
  }

  /// Nested-list construction, e.g. Tensor2D{{1, 2}, {3, 4}}.
  Tensor2D(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    values_.reserve(rows_ * cols_);
    for (const auto &row : rows) {
      if (row.size() != cols_)
        throw ShapeError("Tensor2D: ragged initializer");
      values_.insert(values_.end(), row.begin(), row.end());
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }

  double &operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool all_finite() const noexcept {
    for (double v : values_)
      if (!std::isfinite(v))
        return false;
    return true;
  }

  friend bool operator==(const Tensor2D &, const Tensor2D &) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

inline std::string shape_string(const Tensor2D &t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

/// a · b, accumulated row-major: out(i, j) += a(i, k) * b(k, j) for k ascending.
inline Tensor2D matmul(const Tensor2D &a, const Tensor2D &b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_string(a) + " * " + shape_string(b));
  Tensor2D out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j)
        out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

/// aᵀ · b without materializing the transpose.
inline Tensor2D matmul_tn(const Tensor2D &a, const Tensor2D &b) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn: " + shape_string(a) + "ᵀ * " + shape_string(b));
  Tensor2D out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto a_row = a.row(k);
    const auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j)
        out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

/// a · bᵀ without materializing the transpose.
inline Tensor2D matmul_nt(const Tensor2D &a, const Tensor2D &b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: " + shape_string(a) + " * " + shape_string(b) + "ᵀ");
  Tensor2D out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto a_row = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto b_row = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k)
        acc += a_row[k] * b_row[k];
      out(i, j) = acc;
    }
  }
  return out;
}

/// Rows of `t` selected by `indices`, in order.
inline Tensor2D gather_rows(const Tensor2D &t, std::span<const std::size_t> indices) {
  Tensor2D out(indices.size(), t.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= t.rows())
      throw ShapeError("gather_rows: index out of range");
    const auto src = t.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

} // namespace jitter

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "jitter/error.hpp"
#include "jitter/samplers.hpp"
#include "jitter/tensor.hpp"

namespace jitter {

struct Dataset {
  Tensor2D features;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }

  void validate() const {
    if (labels.empty())
      throw InvalidArgument("Dataset: empty");
    if (features.rows() != labels.size())
      throw ShapeError("Dataset: feature rows and label count differ");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
        throw InvalidArgument("Dataset: label out of range");
    if (!features.all_finite())
      throw InvalidArgument("Dataset: non-finite feature");
  }

  friend bool operator==(const Dataset &, const Dataset &) = default;
};

// ---------------------------------------------------------------------------
// IDX container: big-endian u32 magic, big-endian u32 dims, u8 payload.

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxHeader {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
};

namespace detail {
inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void write_be32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IdxError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
} // namespace detail

/// Parses the header and checks the payload length. Returns the header and
/// payload offset.
inline std::pair<IdxHeader, std::size_t> parse_idx_header(std::span<const std::uint8_t> bytes,
                                                          std::uint32_t expected_magic) {
  if (bytes.size() < 4)
    throw IdxTruncated("IDX: file shorter than magic number");
  IdxHeader h;
  h.magic = detail::read_be32(bytes, 0);
  if (h.magic != expected_magic) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "IDX: bad magic 0x%08x (expected 0x%08x)", h.magic,
                  expected_magic);
    throw IdxBadMagic(buf);
  }
  const std::size_t ndims = expected_magic == kIdxImageMagic ? 3 : 1;
  if (bytes.size() < 4 + 4 * ndims)
    throw IdxTruncated("IDX: truncated header");
  std::size_t payload = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    h.dims.push_back(detail::read_be32(bytes, 4 + 4 * i));
    payload *= h.dims.back();
  }
  const std::size_t offset = 4 + 4 * ndims;
  if (bytes.size() - offset < payload)
    throw IdxTruncated("IDX: payload has " + std::to_string(bytes.size() - offset) +
                       " bytes, header promises " + std::to_string(payload));
  return {h, offset};
}

/// Builds a dataset from in-memory IDX image and label files. Pixels are
/// scaled by 1/255 and each image is flattened row-major. The class count is
/// max(label) + 1 unless `num_classes` is given.
inline Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                         std::span<const std::uint8_t> label_bytes, std::size_t num_classes = 0) {
  const auto [ih, ioff] = parse_idx_header(image_bytes, kIdxImageMagic);
  const auto [lh, loff] = parse_idx_header(label_bytes, kIdxLabelMagic);
  const std::size_t n = ih.dims[0];
  if (lh.dims[0] != n)
    throw IdxCountMismatch("IDX: " + std::to_string(n) + " images but " +
                           std::to_string(lh.dims[0]) + " labels");
  if (n == 0)
    throw IdxTruncated("IDX: zero records");
  const std::size_t d = std::size_t{ih.dims[1]} * ih.dims[2];
  Dataset ds;
  ds.features = Tensor2D(n, d);
  auto fv = ds.features.values();
  for (std::size_t i = 0; i < n * d; ++i)
    fv[i] = static_cast<double>(image_bytes[ioff + i]) / 255.0;
  ds.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = label_bytes[loff + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = num_classes ? num_classes : static_cast<std::size_t>(max_label) + 1;
  ds.validate();
  return ds;
}

inline Dataset load_idx(const std::filesystem::path &images, const std::filesystem::path &labels,
                        std::size_t num_classes = 0) {
  const auto ib = detail::read_file(images);
  const auto lb = detail::read_file(labels);
  return parse_idx(ib, lb, num_classes);
}

/// Image file bytes for `ds`, one `rows × cols` image per record. Features
/// are mapped back with round(v·255). Used for test fixtures.
inline std::vector<std::uint8_t> encode_idx_images(const Dataset &ds, std::uint32_t rows,
                                                   std::uint32_t cols) {
  if (std::size_t{rows} * cols != ds.dim())
    throw ShapeError("encode_idx_images: rows*cols != feature dim");
  std::vector<std::uint8_t> out;
  detail::write_be32(out, kIdxImageMagic);
  detail::write_be32(out, static_cast<std::uint32_t>(ds.size()));
  detail::write_be32(out, rows);
  detail::write_be32(out, cols);
  for (double v : ds.features.values())
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return out;
}

inline std::vector<std::uint8_t> encode_idx_labels(const Dataset &ds) {
  std::vector<std::uint8_t> out;
  detail::write_be32(out, kIdxLabelMagic);
  detail::write_be32(out, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels)
    out.push_back(static_cast<std::uint8_t>(y));
  return out;
}

// ---------------------------------------------------------------------------

struct BlobParams {
  std::size_t n = 1000;
  std::size_t dim = 20;
  std::size_t num_classes = 4;
  double class_separation = 3.0;
  double label_noise_rate = 0.0;
};

/// Gaussian blobs: class k is centred at class_separation·e_k with unit
/// isotropic noise; classes cycle through 0..C−1 so they are balanced. Each
/// label is then replaced, with probability label_noise_rate, by a uniformly
/// chosen different class.
inline Dataset synthetic_blobs(const BlobParams &p, RngStream &rng) {
  if (p.num_classes < 2)
    throw InvalidArgument("synthetic_blobs: need at least 2 classes");
  if (p.n < p.num_classes)
    throw InvalidArgument("synthetic_blobs: n must be >= num_classes");
  if (p.num_classes > p.dim)
    throw InvalidArgument("synthetic_blobs: num_classes must be <= dim (one axis per class)");
  if (!(p.label_noise_rate >= 0.0 && p.label_noise_rate < 1.0))
    throw InvalidArgument("synthetic_blobs: label_noise_rate must be in [0, 1)");
  if (!std::isfinite(p.class_separation))
    throw InvalidArgument("synthetic_blobs: class_separation must be finite");
  Dataset ds;
  ds.num_classes = p.num_classes;
  ds.features = Tensor2D(p.n, p.dim);
  ds.labels.resize(p.n);
  for (std::size_t i = 0; i < p.n; ++i) {
    const std::size_t clean = i % p.num_classes;
    auto row = ds.features.row(i);
    for (std::size_t j = 0; j < p.dim; ++j)
      row[j] = rng.standard_normal();
    row[clean] += p.class_separation;
    std::size_t label = clean;
    if (rng.uniform() < p.label_noise_rate)
      label = (clean + 1 + rng.below(p.num_classes - 1)) % p.num_classes;
    ds.labels[i] = static_cast<int>(label);
  }
  return ds;
}

/// n records drawn without replacement (partial Fisher–Yates).
inline Dataset subset(const Dataset &ds, std::size_t n, RngStream &rng) {
  if (n > ds.size())
    throw InvalidArgument("subset: n = " + std::to_string(n) + " exceeds dataset size " +
                          std::to_string(ds.size()));
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i)
    std::swap(idx[i], idx[i + rng.below(ds.size() - i)]);
  idx.resize(n);
  Dataset out;
  out.features = gather_rows(ds.features, idx);
  out.labels.reserve(n);
  for (auto i : idx)
    out.labels.push_back(ds.labels[i]);
  out.num_classes = ds.num_classes;
  return out;
}

} // namespace jitter

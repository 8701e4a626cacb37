#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "swarmsync/errors.hpp"
#include "swarmsync/model.hpp"
#include "swarmsync/rng.hpp"
#include "swarmsync/tensor.hpp"

namespace swarmsync {

// Immutable after load; shards are value copies shared read-only.
template <typename Scalar>
struct Dataset {
  Tensor<Scalar> images;  // [N, H, W] for image data, [N, D] for synthetic
  std::vector<int> labels;
  std::string name;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index sample_numel() const { return images.size() / std::max<Index>(size(), 1); }
};

struct SyntheticSpec {
  Index num_classes = 0;
  Index samples_per_class = 0;
  Index input_dim = 0;
  double cluster_spread = 0.0;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// IDX binary format (big-endian, magic-prefixed): 0x00000803 for ubyte image
// files with [N, H, W] dims, 0x00000801 for ubyte label files with [N].
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_u32_be(std::span<const std::uint8_t> bytes, std::size_t off) {
  return (std::uint32_t(bytes[off]) << 24) | (std::uint32_t(bytes[off + 1]) << 16) |
         (std::uint32_t(bytes[off + 2]) << 8) | std::uint32_t(bytes[off + 3]);
}

inline void write_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

}  // namespace detail

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // 2051
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // 2049

template <typename Scalar = double>
Dataset<Scalar> parse_idx(std::span<const std::uint8_t> images_bytes,
                          std::span<const std::uint8_t> labels_bytes, std::string name = "idx") {
  if (images_bytes.size() < 16) throw FormatError("images file: truncated header (need 16 bytes)");
  const std::uint32_t img_magic = detail::read_u32_be(images_bytes, 0);
  if (img_magic != kIdxImagesMagic) {
    std::string hint = img_magic == kIdxLabelsMagic ? " (this looks like a labels file)" : "";
    throw FormatError("images file: expected magic 2051, got " + std::to_string(img_magic) + hint);
  }
  const std::uint32_t n = detail::read_u32_be(images_bytes, 4);
  const std::uint32_t h = detail::read_u32_be(images_bytes, 8);
  const std::uint32_t w = detail::read_u32_be(images_bytes, 12);
  const std::size_t expected_img = 16 + std::size_t(n) * h * w;
  if (images_bytes.size() < expected_img) {
    throw FormatError("images file: truncated payload, expected " + std::to_string(expected_img) +
                      " bytes, got " + std::to_string(images_bytes.size()));
  }
  if (images_bytes.size() > expected_img) {
    throw FormatError("images file: " + std::to_string(images_bytes.size() - expected_img) +
                      " trailing bytes");
  }

  if (labels_bytes.size() < 8) throw FormatError("labels file: truncated header (need 8 bytes)");
  const std::uint32_t lab_magic = detail::read_u32_be(labels_bytes, 0);
  if (lab_magic != kIdxLabelsMagic) {
    std::string hint = lab_magic == kIdxImagesMagic ? " (this looks like an images file)" : "";
    throw FormatError("labels file: expected magic 2049, got " + std::to_string(lab_magic) + hint);
  }
  const std::uint32_t n_lab = detail::read_u32_be(labels_bytes, 4);
  if (n_lab != n) {
    throw FormatError("images file holds " + std::to_string(n) + " samples but labels file holds " +
                      std::to_string(n_lab));
  }
  const std::size_t expected_lab = 8 + std::size_t(n);
  if (labels_bytes.size() < expected_lab) {
    throw FormatError("labels file: truncated payload, expected " + std::to_string(expected_lab) +
                      " bytes, got " + std::to_string(labels_bytes.size()));
  }
  if (labels_bytes.size() > expected_lab) {
    throw FormatError("labels file: " + std::to_string(labels_bytes.size() - expected_lab) +
                      " trailing bytes");
  }

  Dataset<Scalar> ds;
  ds.name = std::move(name);
  ds.images = Tensor<Scalar>::zeros({Index(n), Index(h), Index(w)});
  for (std::size_t i = 0; i < std::size_t(n) * h * w; ++i) {
    ds.images.data[static_cast<Index>(i)] = static_cast<Scalar>(images_bytes[16 + i]) / Scalar(255);
  }
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = labels_bytes[8 + i];
  return ds;
}

// Inverse of parse_idx for rank-3 image datasets; pixel values must be
// exact multiples of 1/255 (as produced by parse_idx).
template <typename Scalar>
std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> idx_bytes(const Dataset<Scalar>& ds) {
  if (ds.images.rank() != 3) throw FormatError("idx_bytes: images must be [N, H, W]");
  const Index n = ds.images.shape[0], h = ds.images.shape[1], w = ds.images.shape[2];
  std::vector<std::uint8_t> img;
  img.reserve(16 + std::size_t(ds.images.size()));
  detail::write_u32_be(img, kIdxImagesMagic);
  detail::write_u32_be(img, std::uint32_t(n));
  detail::write_u32_be(img, std::uint32_t(h));
  detail::write_u32_be(img, std::uint32_t(w));
  for (Index i = 0; i < ds.images.size(); ++i) {
    img.push_back(std::uint8_t(std::lround(static_cast<double>(ds.images.data[i]) * 255.0)));
  }
  std::vector<std::uint8_t> lab;
  lab.reserve(8 + ds.labels.size());
  detail::write_u32_be(lab, kIdxLabelsMagic);
  detail::write_u32_be(lab, std::uint32_t(ds.labels.size()));
  for (int l : ds.labels) lab.push_back(std::uint8_t(l));
  return {std::move(img), std::move(lab)};
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

template <typename Scalar = double>
Dataset<Scalar> load_idx_files(const std::string& images_path, const std::string& labels_path,
                               std::string name = "idx") {
  const auto img = read_file_bytes(images_path);
  const auto lab = read_file_bytes(labels_path);
  return parse_idx<Scalar>(std::span<const std::uint8_t>(img), std::span<const std::uint8_t>(lab),
                           std::move(name));
}

// First `limit` samples (0 keeps everything).
template <typename Scalar>
Dataset<Scalar> head(const Dataset<Scalar>& ds, Index limit) {
  if (limit <= 0 || limit >= ds.size()) return ds;
  const Index d = ds.sample_numel();
  std::vector<Index> shape = ds.images.shape;
  shape[0] = limit;
  Dataset<Scalar> out;
  out.name = ds.name;
  out.images = Tensor<Scalar>(shape, ds.images.data.segment(0, limit * d));
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + limit);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic clusters: one seeded centroid per class inside [0.2, 0.8]^d,
// samples drawn centroid + N(0, spread^2) per coordinate, clamped to [0, 1].
// ---------------------------------------------------------------------------

template <typename Scalar = double>
Dataset<Scalar> make_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes <= 0 || spec.samples_per_class <= 0 || spec.input_dim <= 0) {
    throw ConfigError("synthetic: num_classes, samples_per_class and input_dim must be positive");
  }
  if (spec.cluster_spread < 0) throw ConfigError("synthetic: cluster_spread must be non-negative");
  RngStream rng(spec.seed);

  std::vector<std::vector<double>> centroids;
  for (Index c = 0; c < spec.num_classes; ++c) {
    std::vector<double> centroid(spec.input_dim);
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (auto& v : centroid) v = rng.uniform(0.2, 0.8);
      double min_dist2 = std::numeric_limits<double>::infinity();
      for (const auto& other : centroids) {
        double d2 = 0;
        for (Index i = 0; i < spec.input_dim; ++i) d2 += (centroid[i] - other[i]) * (centroid[i] - other[i]);
        min_dist2 = std::min(min_dist2, d2);
      }
      if (min_dist2 > 0.01) break;  // at least 0.1 apart
    }
    centroids.push_back(std::move(centroid));
  }

  const Index n = spec.num_classes * spec.samples_per_class;
  Dataset<Scalar> ds;
  ds.name = "synthetic";
  ds.images = Tensor<Scalar>::zeros({n, spec.input_dim});
  ds.labels.resize(n);
  Index row = 0;
  for (Index c = 0; c < spec.num_classes; ++c) {
    for (Index s = 0; s < spec.samples_per_class; ++s, ++row) {
      ds.labels[row] = static_cast<int>(c);
      for (Index i = 0; i < spec.input_dim; ++i) {
        double v = centroids[c][i] + spec.cluster_spread * rng.gaussian();
        v = std::min(1.0, std::max(0.0, v));
        ds.images.data[row * spec.input_dim + i] = static_cast<Scalar>(v);
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Batching: seeded shuffle, then floor(size/batch_size) full batches; the
// remainder is dropped for this epoch.
// ---------------------------------------------------------------------------

template <typename Scalar>
Batch<Scalar> make_batch(const Dataset<Scalar>& ds, std::span<const Index> rows) {
  const Index b = static_cast<Index>(rows.size());
  const Index d = ds.sample_numel();
  Batch<Scalar> batch;
  batch.inputs = Tensor<Scalar>::zeros({b, d});
  batch.labels.resize(b);
  for (Index i = 0; i < b; ++i) {
    batch.inputs.data.segment(i * d, d) = ds.images.data.segment(rows[i] * d, d);
    batch.labels[i] = ds.labels[static_cast<std::size_t>(rows[i])];
  }
  return batch;
}

template <typename Scalar>
std::vector<Batch<Scalar>> batches(const Dataset<Scalar>& shard, Index batch_size,
                                   std::uint64_t epoch_seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (batch_size > shard.size()) {
    throw ConfigError("batch_size " + std::to_string(batch_size) + " exceeds shard size " +
                      std::to_string(shard.size()));
  }
  std::vector<Index> order(static_cast<std::size_t>(shard.size()));
  for (Index i = 0; i < shard.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  RngStream rng(epoch_seed);
  rng.shuffle(order);

  const Index count = shard.size() / batch_size;
  std::vector<Batch<Scalar>> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index b = 0; b < count; ++b) {
    out.push_back(make_batch(shard, std::span<const Index>(order.data() + b * batch_size,
                                                           static_cast<std::size_t>(batch_size))));
  }
  return out;
}

}  // namespace swarmsync

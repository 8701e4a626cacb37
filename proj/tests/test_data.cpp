#include <cstdint>
#include <set>
#include <vector>

#include "doctest.h"
#include "swarmsync/data.hpp"

using namespace swarmsync;

namespace {

// Minimal hand-built IDX pair: n images of h x w with given pixel bytes.
std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t h, std::uint32_t w,
                                     const std::vector<std::uint8_t>& pixels) {
  std::vector<std::uint8_t> b;
  detail::write_u32_be(b, kIdxImagesMagic);
  detail::write_u32_be(b, n);
  detail::write_u32_be(b, h);
  detail::write_u32_be(b, w);
  b.insert(b.end(), pixels.begin(), pixels.end());
  return b;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> b;
  detail::write_u32_be(b, kIdxLabelsMagic);
  detail::write_u32_be(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("parse_idx reads a well-formed pair and scales pixels") {
  std::vector<std::uint8_t> pixels(2 * 28 * 28, 7);
  pixels[0] = 0;
  pixels[1] = 255;
  const auto img = idx_images(2, 28, 28, pixels);
  const auto lab = idx_labels({3, 9});
  const auto ds = parse_idx<double>(img, lab, "tiny");
  CHECK(ds.size() == 2);
  CHECK(ds.images.shape == std::vector<Index>{2, 28, 28});
  CHECK(ds.images.data[0] == 0.0);
  CHECK(ds.images.data[1] == 1.0);
  CHECK(ds.images.data[2] == doctest::Approx(7.0 / 255.0));
  CHECK(ds.labels[0] == 3);
  CHECK(ds.labels[1] == 9);
}

TEST_CASE("parse_idx rejects swapped, truncated and inconsistent input") {
  std::vector<std::uint8_t> pixels(1 * 2 * 2, 0);
  const auto img = idx_images(1, 2, 2, pixels);
  const auto lab = idx_labels({1});

  // labels magic handed over as images
  CHECK_THROWS_AS((void)parse_idx<double>(lab, lab), FormatError);
  // images magic handed over as labels
  CHECK_THROWS_AS((void)parse_idx<double>(img, img), FormatError);

  auto truncated = img;
  truncated.pop_back();
  CHECK_THROWS_AS((void)parse_idx<double>(truncated, lab), FormatError);

  auto trailing = img;
  trailing.push_back(0);
  CHECK_THROWS_AS((void)parse_idx<double>(trailing, lab), FormatError);

  const auto two_labels = idx_labels({1, 2});
  CHECK_THROWS_AS((void)parse_idx<double>(img, two_labels), FormatError);
}

TEST_CASE("idx round-trip reproduces the dataset exactly") {
  std::vector<std::uint8_t> pixels;
  for (int i = 0; i < 3 * 4 * 4; ++i) pixels.push_back(static_cast<std::uint8_t>((i * 37) % 256));
  const auto img = idx_images(3, 4, 4, pixels);
  const auto lab = idx_labels({0, 5, 2});
  const auto ds = parse_idx<double>(img, lab);
  const auto [img2, lab2] = idx_bytes(ds);
  CHECK(img2 == img);
  CHECK(lab2 == lab);
  const auto ds2 = parse_idx<double>(img2, lab2);
  CHECK(ds2.images.data == ds.images.data);
  CHECK(ds2.labels == ds.labels);
}

TEST_CASE("reduced MNIST fixtures load and look like MNIST") {
  const std::string dir = SWARMSYNC_DATA_DIR;
  const auto train = load_idx_files<double>(dir + "/train-images-idx3-ubyte",
                                            dir + "/train-labels-idx1-ubyte", "train");
  const auto test = load_idx_files<double>(dir + "/t10k-images-idx3-ubyte",
                                           dir + "/t10k-labels-idx1-ubyte", "test");
  CHECK(train.size() == 10000);
  CHECK(test.size() == 2000);
  CHECK(train.images.shape == std::vector<Index>{10000, 28, 28});
  for (int l : train.labels) CHECK((l >= 0 && l <= 9));
  CHECK(train.images.data.minCoeff() >= 0.0);
  CHECK(train.images.data.maxCoeff() <= 1.0);
}

TEST_CASE("make_synthetic is deterministic with the documented count") {
  SyntheticSpec spec{3, 5, 8, 0.05, 42};
  const auto a = make_synthetic<double>(spec);
  const auto b = make_synthetic<double>(spec);
  CHECK(a.images.data == b.images.data);
  CHECK(a.labels == b.labels);
  CHECK(a.size() == 15);
  CHECK(a.images.shape == std::vector<Index>{15, 8});
}

TEST_CASE("zero spread collapses samples onto centroids") {
  SyntheticSpec spec{4, 6, 5, 0.0, 9};
  const auto ds = make_synthetic<double>(spec);
  // all samples of a class identical
  for (Index c = 0; c < 4; ++c) {
    const Index first = c * 6;
    for (Index s = 1; s < 6; ++s) {
      CHECK(ds.images.data.segment((first + s) * 5, 5) == ds.images.data.segment(first * 5, 5));
    }
  }
  // nearest-centroid classification is perfect
  std::vector<VecX<double>> centroids;
  for (Index c = 0; c < 4; ++c) centroids.push_back(ds.images.data.segment(c * 6 * 5, 5));
  for (Index i = 0; i < ds.size(); ++i) {
    const VecX<double> x = ds.images.data.segment(i * 5, 5);
    Index best = 0;
    for (Index c = 1; c < 4; ++c) {
      if ((x - centroids[c]).squaredNorm() < (x - centroids[best]).squaredNorm()) best = c;
    }
    CHECK(best == ds.labels[i]);
  }
}

TEST_CASE("small spread keeps nearest-centroid accuracy above 95 percent") {
  SyntheticSpec spec{3, 50, 10, 0.02, 4};
  const auto ds = make_synthetic<double>(spec);
  SyntheticSpec zero = spec;
  zero.cluster_spread = 0.0;
  const auto centers = make_synthetic<double>(zero);
  Index correct = 0;
  for (Index i = 0; i < ds.size(); ++i) {
    const VecX<double> x = ds.images.data.segment(i * 10, 10);
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < 3; ++c) {
      const VecX<double> mu = centers.images.data.segment(c * 50 * 10, 10);
      const double d = (x - mu).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (best == ds.labels[i]) ++correct;
  }
  CHECK(static_cast<double>(correct) / ds.size() > 0.95);
}

TEST_CASE("batches splits a shard into disjoint full batches") {
  SyntheticSpec spec{4, 25, 3, 0.1, 8};
  const auto shard = make_synthetic<double>(spec);  // 100 samples
  const auto bs = batches(shard, 25, 123);
  REQUIRE(bs.size() == 4);
  std::multiset<double> seen;
  for (const auto& b : bs) {
    CHECK(b.inputs.shape == std::vector<Index>{25, 3});
    for (Index s = 0; s < 25; ++s) seen.insert(b.inputs.data[s * 3]);
  }
  std::multiset<double> all;
  for (Index i = 0; i < 100; ++i) all.insert(shard.images.data[i * 3]);
  CHECK(seen == all);  // disjoint and covering
}

TEST_CASE("batches drops the remainder") {
  SyntheticSpec spec{4, 25, 3, 0.1, 8};
  const auto shard = make_synthetic<double>(spec);
  const auto bs = batches(shard, 30, 5);
  CHECK(bs.size() == 3);  // 10 samples dropped this epoch
}

TEST_CASE("different epoch seeds reorder but keep the batch count") {
  SyntheticSpec spec{2, 30, 4, 0.1, 3};
  const auto shard = make_synthetic<double>(spec);
  const auto a = batches(shard, 10, 1);
  const auto b = batches(shard, 10, 2);
  REQUIRE(a.size() == b.size());
  bool any_difference = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].inputs.data != b[i].inputs.data) any_difference = true;
  }
  CHECK(any_difference);
}

TEST_CASE("batch larger than shard is rejected") {
  SyntheticSpec spec{2, 5, 4, 0.1, 3};
  const auto shard = make_synthetic<double>(spec);
  CHECK_THROWS_AS((void)batches(shard, 11, 1), ConfigError);
}

TEST_CASE("head limits the sample count") {
  SyntheticSpec spec{2, 10, 4, 0.1, 3};
  const auto ds = make_synthetic<double>(spec);
  const auto cut = head(ds, 7);
  CHECK(cut.size() == 7);
  CHECK(cut.images.shape == std::vector<Index>{7, 4});
  CHECK(cut.images.data == ds.images.data.segment(0, 7 * 4));
  CHECK(head(ds, 0).size() == 20);
  CHECK(head(ds, 100).size() == 20);
}

}  // TEST_SUITE

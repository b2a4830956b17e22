#include "cnnma/dataset.hpp"
#include "cnnma/idx.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace cnnma;

namespace {

std::vector<std::uint8_t> image_header(std::uint32_t magic, std::uint32_t count,
                                       std::uint32_t rows, std::uint32_t cols) {
  std::vector<std::uint8_t> b;
  for (std::uint32_t v : {magic, count, rows, cols}) {
    b.push_back(std::uint8_t(v >> 24));
    b.push_back(std::uint8_t(v >> 16));
    b.push_back(std::uint8_t(v >> 8));
    b.push_back(std::uint8_t(v));
  }
  return b;
}

std::vector<std::uint8_t> label_header(std::uint32_t magic, std::uint32_t count) {
  std::vector<std::uint8_t> b;
  for (std::uint32_t v : {magic, count}) {
    b.push_back(std::uint8_t(v >> 24));
    b.push_back(std::uint8_t(v >> 16));
    b.push_back(std::uint8_t(v >> 8));
    b.push_back(std::uint8_t(v));
  }
  return b;
}

IdxErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const IdxError& e) {
    return e.code();
  }
  throw std::logic_error("expected IdxError");
}

}  // namespace

TEST_SUITE("idx") {

TEST_CASE("official train file header parses to 60000x28x28") {
  const auto bytes = read_idx_file(testutil::data_dir() + "/train-images-idx3-ubyte.gz");
  const ImageSet set = parse_idx_images(bytes);
  CHECK(set.count == 60000);
  CHECK(set.rows == 28);
  CHECK(set.cols == 28);
}

TEST_CASE("official label file parses to 60000 labels via the gzip path") {
  const auto bytes = read_idx_file(testutil::data_dir() + "/train-labels-idx1-ubyte.gz");
  const LabelSet labels = parse_idx_labels(bytes);
  CHECK(labels.count() == 60000);
}

TEST_CASE("empty image set parses") {
  const auto bytes = image_header(0x00000803, 0, 28, 28);
  const ImageSet set = parse_idx_images(bytes);
  CHECK(set.count == 0);
  CHECK(set.pixels.empty());
}

TEST_CASE("label magic fed to the image parser is a malformed-magic error") {
  auto bytes = image_header(0x00000801, 0, 28, 28);
  CHECK(code_of([&] { parse_idx_images(bytes); }) == IdxErrorCode::BadMagic);
}

TEST_CASE("truncated image payload is reported distinctly") {
  auto bytes = image_header(0x00000803, 2, 2, 2);
  bytes.resize(bytes.size() + 7);  // needs 8 payload bytes
  CHECK(code_of([&] { parse_idx_images(bytes); }) == IdxErrorCode::Truncated);
}

TEST_CASE("dimension overflow is reported distinctly") {
  const auto bytes = image_header(0x00000803, 0xffffffffu, 0xffffffffu, 0xffffffffu);
  CHECK(code_of([&] { parse_idx_images(bytes); }) == IdxErrorCode::DimensionOverflow);
}

TEST_CASE("single label payload") {
  auto bytes = label_header(0x00000801, 1);
  bytes.push_back(3);
  const LabelSet set = parse_idx_labels(bytes);
  CHECK(set.count() == 1);
  CHECK(set.labels[0] == 3);
}

TEST_CASE("label value 200 is an invalid-label error") {
  auto bytes = label_header(0x00000801, 1);
  bytes.push_back(200);
  CHECK(code_of([&] { parse_idx_labels(bytes); }) == IdxErrorCode::BadLabel);
}

TEST_CASE("label parser rejects image magic and truncation") {
  CHECK(code_of([&] { parse_idx_labels(label_header(0x00000803, 0)); }) == IdxErrorCode::BadMagic);
  CHECK(code_of([&] { parse_idx_labels(label_header(0x00000801, 4)); }) ==
        IdxErrorCode::Truncated);
}

TEST_CASE("round-trip: serialize then parse is identity, parse then serialize is identity") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    ImageSet set;
    set.count = std::int64_t(rng() % 5);
    set.rows = 1 + int(rng() % 6);
    set.cols = 1 + int(rng() % 6);
    set.pixels.resize(size_t(set.count) * set.rows * set.cols);
    for (auto& p : set.pixels) p = std::uint8_t(rng());

    const auto bytes = serialize_idx_images(set);
    const ImageSet back = parse_idx_images(bytes);
    CHECK(back.count == set.count);
    CHECK(back.rows == set.rows);
    CHECK(back.cols == set.cols);
    CHECK(back.pixels == set.pixels);
    CHECK(serialize_idx_images(back) == bytes);

    LabelSet labels;
    labels.labels.resize(size_t(rng() % 40));
    for (auto& l : labels.labels) l = std::uint8_t(rng() % 10);
    const auto lbytes = serialize_idx_labels(labels);
    CHECK(parse_idx_labels(lbytes).labels == labels.labels);
  }
}

TEST_CASE("normalize maps endpoints and exact ratios") {
  ImageSet set;
  set.count = 1;
  set.rows = 1;
  set.cols = 3;
  set.pixels = {255, 0, 51};
  const Tensor t = normalize(set);
  CHECK(t[0] == 1.0);
  CHECK(t[1] == 0.0);
  CHECK(t[2] == 0.2);
}

TEST_CASE("normalization stays in [0, 1]") {
  ImageSet set;
  set.count = 4;
  set.rows = 3;
  set.cols = 3;
  set.pixels.resize(36);
  std::mt19937_64 rng(5);
  for (auto& p : set.pixels) p = std::uint8_t(rng());
  const Tensor t = normalize(set);
  CHECK(t.flat().minCoeff() >= 0.0);
  CHECK(t.flat().maxCoeff() <= 1.0);
}

namespace {

std::pair<Tensor, LabelSet> synthetic_data(Index n, int rows, int cols, std::uint64_t seed) {
  Tensor images({n, rows, cols});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dis(0.0, 1.0);
  for (Index i = 0; i < images.size(); ++i) images[i] = dis(rng);
  LabelSet labels;
  labels.labels.resize(size_t(n));
  for (auto& l : labels.labels) l = std::uint8_t(rng() % 10);
  return {std::move(images), std::move(labels)};
}

}  // namespace

TEST_CASE("10000 samples at batch size 100 give 100 batches of 100") {
  auto [images, labels] = synthetic_data(10000, 2, 2, 3);
  const auto batches = make_batches(images, labels, 100, 99);
  REQUIRE(batches.size() == 100);
  for (const auto& b : batches) CHECK(b.inputs.dim(0) == 100);
}

TEST_CASE("5 samples at batch size 5 give one batch containing all 5") {
  auto [images, labels] = synthetic_data(5, 2, 2, 3);
  const auto batches = make_batches(images, labels, 5, 1234);
  REQUIRE(batches.size() == 1);
  CHECK(batches[0].inputs.dim(0) == 5);
  std::set<std::int64_t> seen(batches[0].indices.begin(), batches[0].indices.end());
  CHECK(seen.size() == 5);
}

TEST_CASE("a final short batch is emitted, never dropped") {
  auto [images, labels] = synthetic_data(7, 2, 2, 3);
  const auto batches = make_batches(images, labels, 3, 0);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].inputs.dim(0) == 3);
  CHECK(batches[1].inputs.dim(0) == 3);
  CHECK(batches[2].inputs.dim(0) == 1);
}

TEST_CASE("batch size zero is an error") {
  auto [images, labels] = synthetic_data(5, 2, 2, 3);
  CHECK_THROWS_AS(make_batches(images, labels, 0, 0), std::invalid_argument);
}

TEST_CASE("per-epoch batches partition the sample indices") {
  auto [images, labels] = synthetic_data(257, 2, 2, 3);
  const auto batches = make_batches(images, labels, 32, 17);
  std::set<std::int64_t> seen;
  std::int64_t total = 0;
  for (const auto& b : batches) {
    for (auto i : b.indices) seen.insert(i);
    total += std::int64_t(b.indices.size());
  }
  CHECK(total == 257);
  CHECK(seen.size() == 257);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 256);
}

TEST_CASE("equal seeds give identical batch order; distinct seeds differ") {
  auto [images, labels] = synthetic_data(150, 2, 2, 3);
  const auto a = make_batches(images, labels, 10, 42);
  const auto b = make_batches(images, labels, 10, 42);
  const auto c = make_batches(images, labels, 10, 43);
  REQUIRE(a.size() == b.size());
  bool same_ab = true, same_ac = true;
  for (size_t i = 0; i < a.size(); ++i) {
    same_ab = same_ab && a[i].indices == b[i].indices;
    same_ac = same_ac && a[i].indices == c[i].indices;
  }
  CHECK(same_ab);
  CHECK_FALSE(same_ac);
  CHECK(a[0].inputs == b[0].inputs);
}

TEST_CASE("every target row is one-hot and sums to exactly 1") {
  auto [images, labels] = synthetic_data(23, 2, 2, 9);
  for (const auto& batch : make_batches(images, labels, 4, 5)) {
    for (Index r = 0; r < batch.targets.dim(0); ++r) {
      double sum = 0.0;
      for (Index c = 0; c < 10; ++c) sum += batch.targets.at({r, c});
      CHECK(sum == 1.0);
      CHECK(batch.targets.at({r, Index(labels.labels[size_t(batch.indices[size_t(r)])])}) == 1.0);
    }
  }
}

TEST_CASE("stratified subset takes k/10 per class in dataset order") {
  ImageSet images;
  images.count = 200;
  images.rows = 2;
  images.cols = 2;
  images.pixels.resize(800);
  for (size_t i = 0; i < images.pixels.size(); ++i) images.pixels[i] = std::uint8_t(i);
  LabelSet labels;
  for (int i = 0; i < 200; ++i) labels.labels.push_back(std::uint8_t(i % 10));

  auto [sub, sub_labels] = stratified_subset(images, labels, 50);
  REQUIRE(sub.count == 50);
  int per_class[10] = {};
  for (auto l : sub_labels.labels) ++per_class[l];
  for (int c = 0; c < 10; ++c) CHECK(per_class[c] == 5);
  // Dataset order: the first sample of class 0 is sample 0.
  CHECK(sub.pixels[0] == images.pixels[0]);
}

TEST_CASE("stratified subset fails when a class runs short") {
  ImageSet images;
  images.count = 20;
  images.rows = 1;
  images.cols = 1;
  images.pixels.resize(20);
  LabelSet labels;
  for (int i = 0; i < 20; ++i) labels.labels.push_back(0);  // single class only
  CHECK_THROWS_AS(stratified_subset(images, labels, 10), std::invalid_argument);
}

TEST_CASE("missing dataset directory raises an Io error") {
  CHECK(code_of([] { load_mnist("/nonexistent-dir"); }) == IdxErrorCode::Io);
}

}  // TEST_SUITE

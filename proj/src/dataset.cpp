#include "cnnma/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>
#include <stdexcept>

namespace cnnma {

Tensor normalize(const ImageSet& images) {
  Tensor out({images.count, images.rows, images.cols});
  for (Index i = 0; i < out.size(); ++i) out[i] = images.pixels[size_t(i)] / 255.0;
  return out;
}

std::vector<MiniBatch> make_batches(const Tensor& images, const LabelSet& labels,
                                    int batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  if (images.rank() != 3) throw std::invalid_argument("make_batches: images must be rank 3");
  const Index n = images.dim(0);
  if (n != labels.count())
    throw std::invalid_argument("make_batches: image/label count mismatch");
  const Index rows = images.dim(1), cols = images.dim(2);

  std::vector<std::int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<MiniBatch> batches;
  batches.reserve(size_t((n + batch_size - 1) / batch_size));
  for (Index start = 0; start < n; start += batch_size) {
    const Index b = std::min<Index>(batch_size, n - start);
    MiniBatch batch;
    batch.inputs = Tensor({b, rows, cols});
    batch.targets = Tensor({b, Index(kNumClasses)});
    batch.indices.resize(size_t(b));
    for (Index r = 0; r < b; ++r) {
      const std::int64_t src = order[size_t(start + r)];
      batch.indices[size_t(r)] = src;
      batch.inputs.plane(r) = images.plane(src);
      batch.targets.at({r, Index(labels.labels[size_t(src)])}) = 1.0;
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::pair<ImageSet, LabelSet> stratified_subset(const ImageSet& images,
                                                const LabelSet& labels, std::int64_t k) {
  if (k < 0 || k > images.count)
    throw std::invalid_argument("stratified_subset: k out of range");
  std::int64_t quota[kNumClasses];
  for (int c = 0; c < kNumClasses; ++c) quota[c] = k / kNumClasses + (c < k % kNumClasses ? 1 : 0);

  ImageSet sub;
  sub.rows = images.rows;
  sub.cols = images.cols;
  LabelSet sub_labels;
  const std::int64_t px = std::int64_t(images.rows) * images.cols;
  for (std::int64_t i = 0; i < images.count && sub.count < k; ++i) {
    const int c = labels.labels[size_t(i)];
    if (quota[c] == 0) continue;
    --quota[c];
    sub.pixels.insert(sub.pixels.end(), images.pixels.begin() + i * px,
                      images.pixels.begin() + (i + 1) * px);
    sub_labels.labels.push_back(std::uint8_t(c));
    ++sub.count;
  }
  if (sub.count < k)
    throw std::invalid_argument("stratified_subset: not enough samples per class for k=" +
                                std::to_string(k));
  return {std::move(sub), std::move(sub_labels)};
}

namespace {

std::vector<std::uint8_t> read_either(const std::string& dir, const std::string& name) {
  namespace fs = std::filesystem;
  const std::string raw = dir + "/" + name;
  const std::string gz = raw + ".gz";
  if (fs::exists(raw)) return read_idx_file(raw);
  if (fs::exists(gz)) return read_idx_file(gz);
  throw IdxError(IdxErrorCode::Io, "missing dataset file: tried " + raw + " and " + gz);
}

}  // namespace

MnistData load_mnist(const std::string& dir) {
  MnistData data;
  data.train_images = parse_idx_images(read_either(dir, "train-images-idx3-ubyte"));
  data.train_labels = parse_idx_labels(read_either(dir, "train-labels-idx1-ubyte"));
  data.test_images = parse_idx_images(read_either(dir, "t10k-images-idx3-ubyte"));
  data.test_labels = parse_idx_labels(read_either(dir, "t10k-labels-idx1-ubyte"));
  if (data.train_images.count != data.train_labels.count() ||
      data.test_images.count != data.test_labels.count())
    throw IdxError(IdxErrorCode::Truncated, "image/label counts disagree in " + dir);
  return data;
}

}  // namespace cnnma

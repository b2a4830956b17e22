#pragma once

#include "cnnma/idx.hpp"
#include "cnnma/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cnnma {

struct MiniBatch {
  Tensor inputs;                       // (batch, rows, cols), values in [0, 1]
  Tensor targets;                      // one-hot, (batch, 10)
  std::vector<std::int64_t> indices;   // source sample index per row
};

constexpr int kNumClasses = 10;

// Maps pixels to [0, 1] by /255; output shape (count, rows, cols).
Tensor normalize(const ImageSet& images);

// Seeded shuffle of all N samples, then consecutive slices of batch_size.
// A final short batch is emitted when N is not divisible. The order is a
// pure function of the seed.
std::vector<MiniBatch> make_batches(const Tensor& images, const LabelSet& labels,
                                    int batch_size, std::uint64_t seed);

// First k samples in dataset order, stratified by label (k/10 per class,
// remainder spread over the lowest class indices).
std::pair<ImageSet, LabelSet> stratified_subset(const ImageSet& images,
                                                const LabelSet& labels, std::int64_t k);

struct MnistData {
  ImageSet train_images;
  LabelSet train_labels;
  ImageSet test_images;
  LabelSet test_labels;
};

// Loads the four standard files from a directory; each may be raw or
// gzip-compressed (name or name.gz).
MnistData load_mnist(const std::string& dir);

}  // namespace cnnma

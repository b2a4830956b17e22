#pragma once

#include "cnnma/dataset.hpp"
#include "cnnma/tensor.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cnnma {

// Signals a non-finite loss during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConvLayer {
  int in_maps = 1;
  int out_maps = 1;
  int kernel_size = 5;
  std::vector<RowMat> kernels;  // out_maps * in_maps entries, index k * in_maps + i
  Vector biases;                // per output map

  const RowMat& kernel(int k, int i) const { return kernels[size_t(k) * in_maps + i]; }
  RowMat& kernel(int k, int i) { return kernels[size_t(k) * in_maps + i]; }
};

// Trainable scaled block-sum pooling: out = tanh(beta * sum_2x2 + bias).
struct SubsampleLayer {
  Vector beta;  // per map
  Vector bias;  // per map
  int pool = 2;
};

struct DenseOutputLayer {
  RowMat weights;  // classes x features
  Vector biases;   // per class
};

struct Network {
  struct Stage {
    ConvLayer conv;
    SubsampleLayer pool;
  };

  int in_rows = 0;
  int in_cols = 0;
  std::vector<Stage> stages;
  DenseOutputLayer output;
  std::string architecture;  // e.g. "i-6c-2s-12c-2s"

  // Spatial dims and map count after the last stage.
  int feature_rows = 0;
  int feature_cols = 0;
  int feature_maps = 0;
  Index feature_size() const { return Index(feature_maps) * feature_rows * feature_cols; }
};

// Builds a net of (conv -> subsample) stages plus the 10-way dense output.
// The shape chain is validated at construction (each conv shrinks by
// kernel-1, each pool needs even dims and halves them). Weights start
// uniform in +-sqrt(6/(fan_in+fan_out)); biases 0, pool scales 1.
Network make_network(int rows, int cols, const std::vector<int>& stage_maps, std::uint64_t seed,
                     int kernel_size = 5);

// The paper architecture for 28x28 inputs: i-6c-2s-12c-2s.
Network make_mnist_network(std::uint64_t seed);

// ---- layer and network forward ----

// (B, in_maps, h, w) -> (B, out_maps, h-k+1, w-k+1), tanh activation.
Tensor conv_forward(const ConvLayer& layer, const Tensor& input);
// (B, maps, h, w) -> (B, maps, h/2, w/2), tanh(beta * blocksum + bias).
Tensor subsample_forward(const SubsampleLayer& layer, const Tensor& input);
// (B, ...) flattened per sample -> (B, classes), sigmoid activation.
Tensor dense_forward(const DenseOutputLayer& layer, const Tensor& input);

struct ForwardCache {
  std::vector<Tensor> conv_act;  // per stage, post-tanh
  std::vector<Tensor> pool_act;  // per stage, post-tanh
  RowMat logits;                 // B x classes, pre-sigmoid
  Tensor probs;                  // (B, classes)
};

// Sequential application of all layers; input is (B, rows, cols).
const Tensor& network_forward(const Network& net, const Tensor& input, ForwardCache& cache);
Tensor network_forward(const Network& net, const Tensor& input);

// ---- loss ----

// 0.5 * sqrt(sum((x - y)^2) / N) with N = samples in the batch.
double loss(const Tensor& predicted, const Tensor& target);

// ---- parameter vector ----

struct ParamSegment {
  std::string name;
  std::vector<Index> shape;
  Index offset = 0;
  Index length = 0;
};

struct ParamLayout {
  std::vector<ParamSegment> segments;
  Index total = 0;
};

ParamLayout param_layout(const Network& net);
Vector flatten_params(const Network& net);
void unflatten_params(Network& net, const Eigen::Ref<const Vector>& values);

// ---- training ----

struct BackpropCache {
  ForwardCache fwd;
  std::vector<Tensor> dconv;  // per stage
  std::vector<Tensor> dpool;  // per stage
  RowMat delta_out;           // d loss / d logits
};

// Gradient of the batch loss with respect to every trainable parameter, in
// param_layout order. Returns the batch loss.
double backprop_grads(const Network& net, const MiniBatch& batch, Vector& grads,
                      BackpropCache& cache);
Vector backprop_grads(const Network& net, const MiniBatch& batch);

// One pass over the batches: params <- params - lr * grad per batch.
// Returns the mean of per-batch losses (measured before each update).
// Throws DivergenceError on a non-finite loss.
double sgd_epoch(Network& net, const std::vector<MiniBatch>& batches, double learning_rate);

// Percentage of samples whose argmax output matches the label; ties break
// toward the lowest class index.
double accuracy(const Network& net, const Tensor& images, const LabelSet& labels);

// ---- checkpoints ----

// Single self-describing binary file: architecture tag, stage map counts,
// layout descriptor, raw little-endian parameter doubles. Round-trips
// parameters bitwise.
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

}  // namespace cnnma

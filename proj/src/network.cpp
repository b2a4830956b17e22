#include "cnnma/network.hpp"

#include "cnnma/conv_ops.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace cnnma {

namespace {

void ensure_shape(Tensor& t, std::vector<Index> shape) {
  if (t.shape() != shape) t = Tensor(std::move(shape));
}

// Input to stage 0 is the rank-3 batch (B, r, c), a single implicit map;
// later stages consume rank-4 activations.
ConstMatMap input_plane(const Tensor& t, Index b, Index i) {
  if (t.rank() == 3) return t.plane(b);
  return t.plane(b, i);
}

Index input_maps(const Tensor& t) { return t.rank() == 3 ? 1 : t.dim(1); }
Index input_height(const Tensor& t) { return t.dim(t.rank() == 3 ? 1 : 2); }
Index input_width(const Tensor& t) { return t.dim(t.rank() == 3 ? 2 : 3); }

void conv_forward_into(const ConvLayer& layer, const Tensor& in, Tensor& out) {
  const Index b_count = in.dim(0);
  const Index maps = input_maps(in);
  const Index h = input_height(in), w = input_width(in);
  if (maps != layer.in_maps)
    throw std::invalid_argument("conv_forward: input has " + std::to_string(maps) +
                                " maps, layer expects " + std::to_string(layer.in_maps));
  if (h < layer.kernel_size || w < layer.kernel_size)
    throw std::invalid_argument("conv_forward: input " + in.shape_string() +
                                " smaller than kernel");
  const Index oh = h - layer.kernel_size + 1, ow = w - layer.kernel_size + 1;
  ensure_shape(out, {b_count, Index(layer.out_maps), oh, ow});
  for (Index b = 0; b < b_count; ++b) {
    for (Index k = 0; k < layer.out_maps; ++k) {
      auto o = out.plane(b, k);
      o.setConstant(layer.biases[k]);
      for (Index i = 0; i < maps; ++i)
        add_xcorr_valid(o, input_plane(in, b, i), layer.kernel(int(k), int(i)));
    }
  }
  out.flat() = out.flat().array().tanh();
}

void subsample_forward_into(const SubsampleLayer& layer, const Tensor& in, Tensor& out) {
  if (in.rank() != 4) throw std::invalid_argument("subsample_forward: rank-4 input expected");
  const Index b_count = in.dim(0), maps = in.dim(1), h = in.dim(2), w = in.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    throw std::invalid_argument("subsample_forward: odd spatial dims " + in.shape_string());
  if (maps != layer.beta.size())
    throw std::invalid_argument("subsample_forward: map count mismatch");
  ensure_shape(out, {b_count, maps, h / 2, w / 2});
  for (Index b = 0; b < b_count; ++b)
    for (Index m = 0; m < maps; ++m)
      out.plane(b, m) =
          (layer.beta[m] * pool_sum_2x2(in.plane(b, m))).array() + layer.bias[m];
  out.flat() = out.flat().array().tanh();
}

void dense_forward_into(const DenseOutputLayer& layer, const Tensor& in, RowMat& logits,
                        Tensor& out) {
  const Index b_count = in.dim(0);
  const Index features = b_count == 0 ? layer.weights.cols() : in.size() / b_count;
  if (features != layer.weights.cols())
    throw std::invalid_argument("dense_forward: " + std::to_string(features) +
                                " features, layer expects " + std::to_string(layer.weights.cols()));
  const Index classes = layer.weights.rows();
  ConstMatMap feat(in.data(), b_count, features);
  logits.resize(b_count, classes);
  logits.noalias() = feat * layer.weights.transpose();
  logits.rowwise() += layer.biases.transpose();
  ensure_shape(out, {b_count, classes});
  MatMap(out.data(), b_count, classes) = ((-logits).array().exp() + 1.0).inverse();
}

}  // namespace

Tensor conv_forward(const ConvLayer& layer, const Tensor& input) {
  if (input.rank() != 4) throw std::invalid_argument("conv_forward: rank-4 input expected");
  Tensor out;
  conv_forward_into(layer, input, out);
  return out;
}

Tensor subsample_forward(const SubsampleLayer& layer, const Tensor& input) {
  Tensor out;
  subsample_forward_into(layer, input, out);
  return out;
}

Tensor dense_forward(const DenseOutputLayer& layer, const Tensor& input) {
  Tensor out;
  RowMat logits;
  dense_forward_into(layer, input, logits, out);
  return out;
}

const Tensor& network_forward(const Network& net, const Tensor& input, ForwardCache& cache) {
  if (input.rank() != 3 || input.dim(1) != net.in_rows || input.dim(2) != net.in_cols)
    throw std::invalid_argument("network_forward: input " + input.shape_string() + " does not fit " +
                                std::to_string(net.in_rows) + "x" + std::to_string(net.in_cols));
  const size_t n_stages = net.stages.size();
  cache.conv_act.resize(n_stages);
  cache.pool_act.resize(n_stages);
  const Tensor* cur = &input;
  for (size_t s = 0; s < n_stages; ++s) {
    conv_forward_into(net.stages[s].conv, *cur, cache.conv_act[s]);
    subsample_forward_into(net.stages[s].pool, cache.conv_act[s], cache.pool_act[s]);
    cur = &cache.pool_act[s];
  }
  dense_forward_into(net.output, *cur, cache.logits, cache.probs);
  return cache.probs;
}

Tensor network_forward(const Network& net, const Tensor& input) {
  ForwardCache cache;
  network_forward(net, input, cache);
  return std::move(cache.probs);
}

double loss(const Tensor& predicted, const Tensor& target) {
  if (predicted.shape() != target.shape())
    throw std::invalid_argument("loss: shape mismatch " + predicted.shape_string() + " vs " +
                                target.shape_string());
  if (predicted.rank() == 0 || predicted.dim(0) == 0)
    throw std::invalid_argument("loss: empty batch");
  const double n = double(predicted.dim(0));
  const double s = (predicted.flat() - target.flat()).squaredNorm();
  return 0.5 * std::sqrt(s / n);
}

// ---- construction ----

Network make_network(int rows, int cols, const std::vector<int>& stage_maps, std::uint64_t seed,
                     int kernel_size) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("make_network: bad input dims");
  if (stage_maps.empty()) throw std::invalid_argument("make_network: need at least one stage");

  Network net;
  net.in_rows = rows;
  net.in_cols = cols;
  net.architecture = "i";

  std::mt19937_64 rng(seed);
  auto uniform_fill = [&rng](RowMat& m, double limit) {
    std::uniform_real_distribution<double> dis(-limit, limit);
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = dis(rng);
  };

  int h = rows, w = cols, maps_in = 1;
  for (int maps_out : stage_maps) {
    if (maps_out < 1) throw std::invalid_argument("make_network: bad map count");
    if (h < kernel_size || w < kernel_size)
      throw std::invalid_argument("make_network: spatial dims collapse below kernel size");
    h -= kernel_size - 1;
    w -= kernel_size - 1;
    if (h % 2 != 0 || w % 2 != 0)
      throw std::invalid_argument("make_network: odd dims reach the subsample layer");

    Network::Stage stage;
    stage.conv.in_maps = maps_in;
    stage.conv.out_maps = maps_out;
    stage.conv.kernel_size = kernel_size;
    stage.conv.kernels.resize(size_t(maps_out) * maps_in);
    const double fan_in = double(maps_in) * kernel_size * kernel_size;
    const double fan_out = double(maps_out) * kernel_size * kernel_size;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& k : stage.conv.kernels) {
      k.resize(kernel_size, kernel_size);
      uniform_fill(k, limit);
    }
    stage.conv.biases = Vector::Zero(maps_out);
    stage.pool.beta = Vector::Ones(maps_out);
    stage.pool.bias = Vector::Zero(maps_out);
    net.stages.push_back(std::move(stage));

    net.architecture += "-" + std::to_string(maps_out) + "c-2s";
    h /= 2;
    w /= 2;
    maps_in = maps_out;
  }

  net.feature_rows = h;
  net.feature_cols = w;
  net.feature_maps = maps_in;
  const Index features = net.feature_size();
  net.output.weights.resize(kNumClasses, features);
  uniform_fill(net.output.weights, std::sqrt(6.0 / (double(features) + kNumClasses)));
  net.output.biases = Vector::Zero(kNumClasses);
  return net;
}

Network make_mnist_network(std::uint64_t seed) { return make_network(28, 28, {6, 12}, seed); }

// ---- parameter vector ----

namespace {

struct StageOffsets {
  Index kernels = 0, conv_biases = 0, beta = 0, pool_bias = 0;
};

struct Offsets {
  std::vector<StageOffsets> stage;
  Index dense_weights = 0, dense_biases = 0, total = 0;
};

Offsets compute_offsets(const Network& net) {
  Offsets off;
  Index at = 0;
  for (const auto& stage : net.stages) {
    StageOffsets so;
    const auto& c = stage.conv;
    so.kernels = at;
    at += Index(c.out_maps) * c.in_maps * c.kernel_size * c.kernel_size;
    so.conv_biases = at;
    at += c.out_maps;
    so.beta = at;
    at += stage.pool.beta.size();
    so.pool_bias = at;
    at += stage.pool.bias.size();
    off.stage.push_back(so);
  }
  off.dense_weights = at;
  at += net.output.weights.size();
  off.dense_biases = at;
  at += net.output.biases.size();
  off.total = at;
  return off;
}

}  // namespace

ParamLayout param_layout(const Network& net) {
  const Offsets off = compute_offsets(net);
  ParamLayout layout;
  for (size_t s = 0; s < net.stages.size(); ++s) {
    const auto& c = net.stages[s].conv;
    const std::string prefix = "stage" + std::to_string(s);
    const Index ks = c.kernel_size;
    layout.segments.push_back({prefix + ".conv.kernels",
                               {Index(c.out_maps), Index(c.in_maps), ks, ks},
                               off.stage[s].kernels,
                               Index(c.out_maps) * c.in_maps * ks * ks});
    layout.segments.push_back(
        {prefix + ".conv.biases", {Index(c.out_maps)}, off.stage[s].conv_biases, Index(c.out_maps)});
    layout.segments.push_back({prefix + ".pool.beta",
                               {net.stages[s].pool.beta.size()},
                               off.stage[s].beta,
                               net.stages[s].pool.beta.size()});
    layout.segments.push_back({prefix + ".pool.bias",
                               {net.stages[s].pool.bias.size()},
                               off.stage[s].pool_bias,
                               net.stages[s].pool.bias.size()});
  }
  layout.segments.push_back({"output.weights",
                             {net.output.weights.rows(), net.output.weights.cols()},
                             off.dense_weights,
                             net.output.weights.size()});
  layout.segments.push_back(
      {"output.biases", {net.output.biases.size()}, off.dense_biases, net.output.biases.size()});
  layout.total = off.total;
  return layout;
}

Vector flatten_params(const Network& net) {
  const Offsets off = compute_offsets(net);
  Vector v(off.total);
  for (size_t s = 0; s < net.stages.size(); ++s) {
    const auto& stage = net.stages[s];
    const Index ks = stage.conv.kernel_size;
    Index at = off.stage[s].kernels;
    for (const auto& k : stage.conv.kernels) {
      std::memcpy(v.data() + at, k.data(), sizeof(Scalar) * size_t(ks) * ks);
      at += ks * ks;
    }
    v.segment(off.stage[s].conv_biases, stage.conv.biases.size()) = stage.conv.biases;
    v.segment(off.stage[s].beta, stage.pool.beta.size()) = stage.pool.beta;
    v.segment(off.stage[s].pool_bias, stage.pool.bias.size()) = stage.pool.bias;
  }
  std::memcpy(v.data() + off.dense_weights, net.output.weights.data(),
              sizeof(Scalar) * size_t(net.output.weights.size()));
  v.segment(off.dense_biases, net.output.biases.size()) = net.output.biases;
  return v;
}

void unflatten_params(Network& net, const Eigen::Ref<const Vector>& values) {
  const Offsets off = compute_offsets(net);
  if (values.size() != off.total)
    throw std::invalid_argument("unflatten_params: vector length " + std::to_string(values.size()) +
                                " does not match layout total " + std::to_string(off.total));
  for (size_t s = 0; s < net.stages.size(); ++s) {
    auto& stage = net.stages[s];
    const Index ks = stage.conv.kernel_size;
    Index at = off.stage[s].kernels;
    for (auto& k : stage.conv.kernels) {
      std::memcpy(k.data(), values.data() + at, sizeof(Scalar) * size_t(ks) * ks);
      at += ks * ks;
    }
    stage.conv.biases = values.segment(off.stage[s].conv_biases, stage.conv.biases.size());
    stage.pool.beta = values.segment(off.stage[s].beta, stage.pool.beta.size());
    stage.pool.bias = values.segment(off.stage[s].pool_bias, stage.pool.bias.size());
  }
  std::memcpy(net.output.weights.data(), values.data() + off.dense_weights,
              sizeof(Scalar) * size_t(net.output.weights.size()));
  net.output.biases = values.segment(off.dense_biases, net.output.biases.size());
}

// ---- backprop ----

double backprop_grads(const Network& net, const MiniBatch& batch, Vector& grads,
                      BackpropCache& cache) {
  const Tensor& probs = network_forward(net, batch.inputs, cache.fwd);
  if (probs.shape() != batch.targets.shape())
    throw std::invalid_argument("backprop_grads: target shape mismatch");
  const Index b_count = probs.dim(0);
  const Index classes = probs.dim(1);
  const double s_total = (probs.flat() - batch.targets.flat()).squaredNorm();
  const double batch_loss = 0.5 * std::sqrt(s_total / double(b_count));

  const Offsets off = compute_offsets(net);
  if (grads.size() != off.total) grads.resize(off.total);
  grads.setZero();
  if (s_total == 0.0) return batch_loss;  // flat minimum: gradient vanishes

  const size_t n_stages = net.stages.size();
  cache.dconv.resize(n_stages);
  cache.dpool.resize(n_stages);

  // Dense layer: d loss / d logits.
  const double coef = 1.0 / (2.0 * std::sqrt(double(b_count) * s_total));
  ConstMatMap probs_m(probs.data(), b_count, classes);
  ConstMatMap targets_m(batch.targets.data(), b_count, classes);
  cache.delta_out = coef * (probs_m - targets_m).cwiseProduct(
                               probs_m.cwiseProduct((1.0 - probs_m.array()).matrix()));

  const Tensor& feat_act = cache.fwd.pool_act.back();
  const Index features = net.output.weights.cols();
  ConstMatMap feat(feat_act.data(), b_count, features);
  MatMap dw(grads.data() + off.dense_weights, classes, features);
  dw.noalias() = cache.delta_out.transpose() * feat;
  grads.segment(off.dense_biases, classes) = cache.delta_out.colwise().sum();

  // Seed the pool-level delta of the last stage from the dense layer.
  ensure_shape(cache.dpool.back(), feat_act.shape());
  MatMap(cache.dpool.back().data(), b_count, features).noalias() =
      cache.delta_out * net.output.weights;

  for (size_t s = n_stages; s-- > 0;) {
    const auto& stage = net.stages[s];
    const Tensor& pool_act = cache.fwd.pool_act[s];
    const Tensor& conv_act = cache.fwd.conv_act[s];
    Tensor& dpool = cache.dpool[s];
    Tensor& dconv = cache.dconv[s];
    const Index maps = pool_act.dim(1);

    // Through the pool tanh.
    dpool.flat().array() *= 1.0 - pool_act.flat().array().square();

    ensure_shape(dconv, conv_act.shape());
    dconv.flat().setZero();
    for (Index b = 0; b < b_count; ++b) {
      for (Index m = 0; m < maps; ++m) {
        const auto dz = dpool.plane(b, m);
        grads[off.stage[s].beta + m] +=
            dz.cwiseProduct(pool_sum_2x2(conv_act.plane(b, m))).sum();
        grads[off.stage[s].pool_bias + m] += dz.sum();
        add_pool_sum_2x2_grad(dconv.plane(b, m), dz, stage.pool.beta[m]);
      }
    }

    // Through the conv tanh.
    dconv.flat().array() *= 1.0 - conv_act.flat().array().square();

    const Tensor& in = s == 0 ? batch.inputs : cache.fwd.pool_act[s - 1];
    const Index in_maps = input_maps(in);
    const Index ks = stage.conv.kernel_size;
    if (s > 0) {
      ensure_shape(cache.dpool[s - 1], cache.fwd.pool_act[s - 1].shape());
      cache.dpool[s - 1].flat().setZero();
    }
    for (Index b = 0; b < b_count; ++b) {
      for (Index k = 0; k < stage.conv.out_maps; ++k) {
        const auto dz = dconv.plane(b, k);
        grads[off.stage[s].conv_biases + k] += dz.sum();
        for (Index i = 0; i < in_maps; ++i) {
          MatMap dk(grads.data() + off.stage[s].kernels + (k * in_maps + i) * ks * ks, ks, ks);
          add_xcorr_kernel_grad(dk, input_plane(in, b, i), dz);
          if (s > 0)
            add_xcorr_input_grad(cache.dpool[s - 1].plane(b, i),
                                 stage.conv.kernel(int(k), int(i)), dz);
        }
      }
    }
  }
  return batch_loss;
}

Vector backprop_grads(const Network& net, const MiniBatch& batch) {
  Vector grads;
  BackpropCache cache;
  backprop_grads(net, batch, grads, cache);
  return grads;
}

double sgd_epoch(Network& net, const std::vector<MiniBatch>& batches, double learning_rate) {
  if (learning_rate < 0) throw std::invalid_argument("sgd_epoch: negative learning rate");
  if (batches.empty()) return 0.0;
  Vector grads, params;
  BackpropCache cache;
  double total = 0.0;
  for (const auto& batch : batches) {
    const double batch_loss = backprop_grads(net, batch, grads, cache);
    if (!std::isfinite(batch_loss))
      throw DivergenceError("sgd_epoch: non-finite loss " + std::to_string(batch_loss));
    total += batch_loss;
    params = flatten_params(net);
    params -= learning_rate * grads;
    unflatten_params(net, params);
  }
  return total / double(batches.size());
}

double accuracy(const Network& net, const Tensor& images, const LabelSet& labels) {
  if (images.rank() != 3 || images.dim(0) != labels.count())
    throw std::invalid_argument("accuracy: image/label shapes disagree");
  const Index n = images.dim(0);
  if (n == 0) return 0.0;
  const Index chunk = 200;
  ForwardCache cache;
  Index correct = 0;
  Tensor slice;
  for (Index start = 0; start < n; start += chunk) {
    const Index b = std::min(chunk, n - start);
    ensure_shape(slice, {b, images.dim(1), images.dim(2)});
    std::memcpy(slice.data(), images.data() + start * images.dim(1) * images.dim(2),
                sizeof(Scalar) * size_t(b) * images.dim(1) * images.dim(2));
    const Tensor& probs = network_forward(net, slice, cache);
    for (Index r = 0; r < b; ++r) {
      Index arg = 0;
      double best = probs.at({r, 0});
      for (Index c = 1; c < probs.dim(1); ++c) {
        if (probs.at({r, c}) > best) {  // strict: ties keep the lowest class
          best = probs.at({r, c});
          arg = c;
        }
      }
      if (arg == Index(labels.labels[size_t(start + r)])) ++correct;
    }
  }
  return 100.0 * double(correct) / double(n);
}

// ---- checkpoints ----

namespace {

constexpr char kCheckpointMagic[4] = {'C', 'N', 'M', 'A'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_i64(std::ostream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, std::uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::int64_t read_i64(std::istream& in) {
  std::int64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::string read_string(std::istream& in) {
  const std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), std::streamsize(n));
  return s;
}

}  // namespace

void save_checkpoint(const Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, 4);
  write_u32(out, kCheckpointVersion);
  write_string(out, net.architecture);
  write_u32(out, std::uint32_t(net.in_rows));
  write_u32(out, std::uint32_t(net.in_cols));
  write_u32(out, std::uint32_t(net.stages.empty() ? 5 : net.stages[0].conv.kernel_size));
  write_u32(out, std::uint32_t(net.stages.size()));
  for (const auto& stage : net.stages) write_u32(out, std::uint32_t(stage.conv.out_maps));

  const ParamLayout layout = param_layout(net);
  write_u32(out, std::uint32_t(layout.segments.size()));
  for (const auto& seg : layout.segments) {
    write_string(out, seg.name);
    write_u32(out, std::uint32_t(seg.shape.size()));
    for (Index d : seg.shape) write_i64(out, d);
    write_i64(out, seg.offset);
    write_i64(out, seg.length);
  }
  const Vector params = flatten_params(net);
  write_i64(out, params.size());
  out.write(reinterpret_cast<const char*>(params.data()),
            std::streamsize(sizeof(Scalar) * size_t(params.size())));
  if (!out) throw std::runtime_error("save_checkpoint: write failed on " + path);
}

Network load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  if (read_u32(in) != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version in " + path);
  const std::string arch = read_string(in);
  const int rows = int(read_u32(in));
  const int cols = int(read_u32(in));
  const int kernel_size = int(read_u32(in));
  const std::uint32_t n_stages = read_u32(in);
  std::vector<int> maps(n_stages);
  for (auto& m : maps) m = int(read_u32(in));

  Network net = make_network(rows, cols, maps, 0, kernel_size);
  if (net.architecture != arch)
    throw std::runtime_error("load_checkpoint: architecture tag mismatch: file says " + arch +
                             ", rebuilt " + net.architecture);

  const ParamLayout layout = param_layout(net);
  const std::uint32_t n_segments = read_u32(in);
  if (n_segments != layout.segments.size())
    throw std::runtime_error("load_checkpoint: segment count mismatch in " + path);
  for (const auto& seg : layout.segments) {
    const std::string name = read_string(in);
    const std::uint32_t rank = read_u32(in);
    std::vector<Index> shape(rank);
    for (auto& d : shape) d = read_i64(in);
    const Index offset = read_i64(in);
    const Index length = read_i64(in);
    if (name != seg.name || shape != seg.shape || offset != seg.offset || length != seg.length)
      throw std::runtime_error("load_checkpoint: layout mismatch at segment " + name);
  }
  const Index count = read_i64(in);
  if (count != layout.total)
    throw std::runtime_error("load_checkpoint: parameter count mismatch in " + path);
  Vector params(count);
  in.read(reinterpret_cast<char*>(params.data()),
          std::streamsize(sizeof(Scalar) * size_t(count)));
  if (!in) throw std::runtime_error("load_checkpoint: truncated file " + path);
  unflatten_params(net, params);
  return net;
}

}  // namespace cnnma

#pragma once

// Independent scalar-loop oracles used by the tests. These deliberately use
// plain nested loops and element access only, no shared code with the
// library's Eigen block-expression implementations.

#include "cnnma/network.hpp"
#include "cnnma/tensor.hpp"

#include <cmath>
#include <vector>

namespace cnnma::oracle {

// tanh((sum over in-maps of valid cross-correlation) + bias), one scalar at
// a time.
inline Tensor conv_forward(const ConvLayer& layer, const Tensor& in) {
  const Index b_count = in.dim(0), maps = in.dim(1), h = in.dim(2), w = in.dim(3);
  const Index ks = layer.kernel_size;
  const Index oh = h - ks + 1, ow = w - ks + 1;
  Tensor out({b_count, Index(layer.out_maps), oh, ow});
  for (Index b = 0; b < b_count; ++b)
    for (Index k = 0; k < layer.out_maps; ++k)
      for (Index r = 0; r < oh; ++r)
        for (Index c = 0; c < ow; ++c) {
          double sum = layer.biases[k];
          for (Index i = 0; i < maps; ++i)
            for (Index dr = 0; dr < ks; ++dr)
              for (Index dc = 0; dc < ks; ++dc)
                sum += in.at({b, i, r + dr, c + dc}) * layer.kernel(int(k), int(i))(dr, dc);
          out.at({b, k, r, c}) = std::tanh(sum);
        }
  return out;
}

// tanh(beta * 2x2 block sum + bias) per output cell.
inline Tensor subsample_forward(const SubsampleLayer& layer, const Tensor& in) {
  const Index b_count = in.dim(0), maps = in.dim(1), h = in.dim(2), w = in.dim(3);
  Tensor out({b_count, maps, h / 2, w / 2});
  for (Index b = 0; b < b_count; ++b)
    for (Index m = 0; m < maps; ++m)
      for (Index r = 0; r < h / 2; ++r)
        for (Index c = 0; c < w / 2; ++c) {
          const double block = in.at({b, m, 2 * r, 2 * c}) + in.at({b, m, 2 * r, 2 * c + 1}) +
                               in.at({b, m, 2 * r + 1, 2 * c}) +
                               in.at({b, m, 2 * r + 1, 2 * c + 1});
          out.at({b, m, r, c}) = std::tanh(layer.beta[m] * block + layer.bias[m]);
        }
  return out;
}

// sigmoid(W x + b) via scalar dot products, flattening the input per sample.
inline Tensor dense_forward(const DenseOutputLayer& layer, const Tensor& in) {
  const Index b_count = in.dim(0);
  const Index features = in.size() / b_count;
  const Index classes = layer.weights.rows();
  Tensor out({b_count, classes});
  for (Index b = 0; b < b_count; ++b)
    for (Index k = 0; k < classes; ++k) {
      double z = layer.biases[k];
      for (Index f = 0; f < features; ++f) z += layer.weights(k, f) * in[b * features + f];
      out.at({b, k}) = 1.0 / (1.0 + std::exp(-z));
    }
  return out;
}

// Brute-force 0.5 * sqrt(sum((x - y)^2) / N).
inline double loss(const Tensor& x, const Tensor& y) {
  double sum = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sum += d * d;
  }
  return 0.5 * std::sqrt(sum / double(x.dim(0)));
}

// Central finite differences of the batch loss over every parameter.
inline Vector fd_grads(const Network& net, const MiniBatch& batch, double h) {
  Network work = net;
  Vector params = flatten_params(net);
  Vector grads(params.size());
  for (Index i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    unflatten_params(work, params);
    const double up = cnnma::loss(network_forward(work, batch.inputs), batch.targets);
    params[i] = keep - h;
    unflatten_params(work, params);
    const double down = cnnma::loss(network_forward(work, batch.inputs), batch.targets);
    params[i] = keep;
    grads[i] = (up - down) / (2.0 * h);
  }
  unflatten_params(work, params);
  return grads;
}

// The microcanonical acceptance rule, spelled out directly.
struct DemonOracle {
  double energy;
  double kinetic;
  bool step(double candidate_energy) {
    const double de = candidate_energy - energy;
    if (de <= kinetic) {
      energy = candidate_energy;
      kinetic = kinetic - de;
      return true;
    }
    return false;
  }
};

}  // namespace cnnma::oracle

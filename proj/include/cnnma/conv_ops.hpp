#pragma once

#include "cnnma/tensor.hpp"

#include <Eigen/Core>

namespace cnnma {

// Valid cross-correlation, pooling and their adjoints as free functions over
// Eigen expressions. Kernels stay small (5x5 here) so each primitive is a
// handful of scaled block operations, which Eigen vectorizes well.

// dst += valid cross-correlation of `in` with `kernel` (no flip).
template <typename Dst, typename In, typename K>
void add_xcorr_valid(const Eigen::MatrixBase<Dst>& dst_, const Eigen::MatrixBase<In>& in,
                     const Eigen::MatrixBase<K>& kernel) {
  auto& dst = const_cast<Eigen::MatrixBase<Dst>&>(dst_);
  const Index oh = dst.rows(), ow = dst.cols();
  for (Index r = 0; r < kernel.rows(); ++r)
    for (Index c = 0; c < kernel.cols(); ++c)
      dst += kernel(r, c) * in.block(r, c, oh, ow);
}

// dKernel += correlation of `in` with `delta` (gradient of add_xcorr_valid
// with respect to the kernel).
template <typename Dst, typename In, typename D>
void add_xcorr_kernel_grad(const Eigen::MatrixBase<Dst>& dk_, const Eigen::MatrixBase<In>& in,
                           const Eigen::MatrixBase<D>& delta) {
  auto& dk = const_cast<Eigen::MatrixBase<Dst>&>(dk_);
  const Index oh = delta.rows(), ow = delta.cols();
  for (Index r = 0; r < dk.rows(); ++r)
    for (Index c = 0; c < dk.cols(); ++c)
      dk(r, c) += in.block(r, c, oh, ow).cwiseProduct(delta).sum();
}

// dIn += full correlation of `delta` with `kernel` (gradient of
// add_xcorr_valid with respect to the input).
template <typename Dst, typename K, typename D>
void add_xcorr_input_grad(const Eigen::MatrixBase<Dst>& din_, const Eigen::MatrixBase<K>& kernel,
                          const Eigen::MatrixBase<D>& delta) {
  auto& din = const_cast<Eigen::MatrixBase<Dst>&>(din_);
  const Index oh = delta.rows(), ow = delta.cols();
  for (Index r = 0; r < kernel.rows(); ++r)
    for (Index c = 0; c < kernel.cols(); ++c)
      din.block(r, c, oh, ow) += kernel(r, c) * delta;
}

// Sum over non-overlapping 2x2 blocks; input dims must be even.
template <typename In>
RowMat pool_sum_2x2(const Eigen::MatrixBase<In>& in) {
  const Index oh = in.rows() / 2, ow = in.cols() / 2;
  RowMat out(oh, ow);
  const auto re = Eigen::seq(0, in.rows() - 2, 2), ro = Eigen::seq(1, in.rows() - 1, 2);
  const auto ce = Eigen::seq(0, in.cols() - 2, 2), co = Eigen::seq(1, in.cols() - 1, 2);
  out = in(re, ce) + in(re, co) + in(ro, ce) + in(ro, co);
  return out;
}

// dIn += scale * delta broadcast over each source 2x2 block (adjoint of
// pool_sum_2x2).
template <typename Dst, typename D>
void add_pool_sum_2x2_grad(const Eigen::MatrixBase<Dst>& din_, const Eigen::MatrixBase<D>& delta,
                           Scalar scale) {
  auto& din = const_cast<Eigen::MatrixBase<Dst>&>(din_);
  const auto re = Eigen::seq(0, din.rows() - 2, 2), ro = Eigen::seq(1, din.rows() - 1, 2);
  const auto ce = Eigen::seq(0, din.cols() - 2, 2), co = Eigen::seq(1, din.cols() - 1, 2);
  din(re, ce) += scale * delta;
  din(re, co) += scale * delta;
  din(ro, ce) += scale * delta;
  din(ro, co) += scale * delta;
}

}  // namespace cnnma

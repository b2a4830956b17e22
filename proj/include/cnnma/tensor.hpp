#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cnnma {

using Scalar = double;
using Vector = Eigen::VectorXd;
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using Index = Eigen::Index;

// Dense n-dimensional array of doubles, row-major and contiguous. The last
// two dimensions are exposed as Eigen matrix views so layer code can work
// plane by plane with ordinary Eigen expressions.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    Index n = 1;
    for (Index d : shape_) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    data_.setZero(n);
  }

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }

  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<size_t>(i)); }
  const std::vector<Index>& shape() const { return shape_; }
  Index size() const { return data_.size(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Vector& flat() { return data_; }
  const Vector& flat() const { return data_; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& at(std::initializer_list<Index> idx) { return data_[offset(idx)]; }
  Scalar at(std::initializer_list<Index> idx) const { return data_[offset(idx)]; }

  // Matrix view of the trailing two dimensions of a rank-3 tensor.
  MatMap plane(Index i) {
    check_rank(3);
    const Index h = shape_[1], w = shape_[2];
    return MatMap(data_.data() + i * h * w, h, w);
  }
  ConstMatMap plane(Index i) const {
    check_rank(3);
    const Index h = shape_[1], w = shape_[2];
    return ConstMatMap(data_.data() + i * h * w, h, w);
  }

  // Matrix view of the trailing two dimensions of a rank-4 tensor.
  MatMap plane(Index i, Index j) {
    check_rank(4);
    const Index h = shape_[2], w = shape_[3];
    return MatMap(data_.data() + (i * shape_[1] + j) * h * w, h, w);
  }
  ConstMatMap plane(Index i, Index j) const {
    check_rank(4);
    const Index h = shape_[2], w = shape_[3];
    return ConstMatMap(data_.data() + (i * shape_[1] + j) * h * w, h, w);
  }

  // Whole tensor as a rank-2 view (leading dims collapsed into rows).
  MatMap as_matrix() {
    const Index w = shape_.empty() ? 0 : shape_.back();
    return MatMap(data_.data(), w == 0 ? 0 : data_.size() / w, w);
  }
  ConstMatMap as_matrix() const {
    const Index w = shape_.empty() ? 0 : shape_.back();
    return ConstMatMap(data_.data(), w == 0 ? 0 : data_.size() / w, w);
  }

  bool all_finite() const { return data_.allFinite(); }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

  std::string shape_string() const {
    std::string s = "(";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(shape_[i]);
    }
    return s + ")";
  }

 private:
  Index offset(std::initializer_list<Index> idx) const {
    if (static_cast<Index>(idx.size()) != rank())
      throw std::invalid_argument("Tensor: index rank mismatch");
    Index off = 0;
    auto it = idx.begin();
    for (size_t d = 0; d < shape_.size(); ++d, ++it) off = off * shape_[d] + *it;
    return off;
  }

  void check_rank(Index r) const {
    if (rank() != r)
      throw std::invalid_argument("Tensor: expected rank " + std::to_string(r) +
                                  ", have " + shape_string());
  }

  std::vector<Index> shape_;
  Vector data_;
};

}  // namespace cnnma

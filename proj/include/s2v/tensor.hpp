#pragma once

#include <Eigen/Core>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "s2v/common.hpp"

namespace s2v {

// Dense row-major tensor. Image-like tensors use NHWC order; the innermost
// (channel) axis is contiguous, which keeps im2col patches and channel
// concatenation cache-friendly.
template <class T>
class TensorT {
public:
  using Scalar = T;
  using MatrixMap =
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(size_t(numel_of(shape_)), T(0));
  }
  TensorT(std::initializer_list<int64_t> shape) : TensorT(std::vector<int64_t>(shape)) {}

  static TensorT zeros(std::vector<int64_t> shape) { return TensorT(std::move(shape)); }
  static TensorT full(std::vector<int64_t> shape, T value) {
    TensorT t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return numel_of(shape_); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[size_t(i)]; }
  const T& operator[](int64_t i) const { return data_[size_t(i)]; }

  T& at(int64_t i, int64_t j) {
    assert(rank() == 2);
    return data_[size_t(i * shape_[1] + j)];
  }
  const T& at(int64_t i, int64_t j) const {
    assert(rank() == 2);
    return data_[size_t(i * shape_[1] + j)];
  }
  // NHWC accessor
  T& at(int64_t n, int64_t h, int64_t w, int64_t c) {
    assert(rank() == 4);
    return data_[size_t(((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c)];
  }
  const T& at(int64_t n, int64_t h, int64_t w, int64_t c) const {
    assert(rank() == 4);
    return data_[size_t(((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c)];
  }

  TensorT reshaped(std::vector<int64_t> shape) const {
    TensorT out = *this;
    if (numel_of(shape) != numel())
      throw DataError("reshape: element count mismatch");
    out.shape_ = std::move(shape);
    return out;
  }

  // 2-D Eigen view of the flattened tensor as (rows, numel/rows)
  MatrixMap as_matrix(int64_t rows, int64_t cols) {
    assert(rows * cols == numel());
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap as_matrix(int64_t rows, int64_t cols) const {
    assert(rows * cols == numel());
    return ConstMatrixMap(data_.data(), rows, cols);
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out(shape_);
    for (int64_t i = 0; i < numel(); ++i) out[i] = U(data_[size_t(i)]);
    return out;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
  }

  static int64_t numel_of(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }

private:
  std::vector<int64_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

#ifndef NDEBUG
#define S2V_CHECK_FINITE(t, where)                                   \
  do {                                                               \
    if (!(t).all_finite())                                           \
      throw ::s2v::NumericError(std::string("non-finite values in ") + (where)); \
  } while (0)
#else
#define S2V_CHECK_FINITE(t, where) ((void)0)
#endif

}  // namespace s2v

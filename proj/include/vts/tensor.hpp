#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vts/common.hpp"

namespace vts {

/// Dense row-major tensor of rank 0..4. Rank-3 sequence tensors use the
/// (batch, time, channel) convention throughout the library.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, T fill = T{})
      : shape_(std::move(shape)), v_(count(shape_), fill) {}

  Tensor(std::initializer_list<std::size_t> shape, T fill = T{})
      : Tensor(std::vector<std::size_t>(shape), fill) {}

  static Tensor zeros(std::initializer_list<std::size_t> shape) { return Tensor(shape, T{}); }
  static Tensor full(std::initializer_list<std::size_t> shape, T v) { return Tensor(shape, v); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return i < shape_.size() ? shape_[i] : 1; }
  std::size_t numel() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }

  T& operator[](std::size_t i) { return v_[i]; }
  const T& operator[](std::size_t i) const { return v_[i]; }

  T& operator()(std::size_t i) { return v_[i]; }
  const T& operator()(std::size_t i) const { return v_[i]; }
  T& operator()(std::size_t i, std::size_t j) { return v_[i * shape_[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return v_[i * shape_[1] + j]; }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return v_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return v_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(T v) { std::fill(v_.begin(), v_.end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < v_.size(); ++i) out[i] = static_cast<U>(v_[i]);
    return out;
  }

  bool all_finite() const {
    for (const T& x : v_)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) s += (i ? "," : "") + std::to_string(shape_[i]);
    return s + ")";
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  std::vector<std::size_t> shape_;
  std::vector<T> v_;
};

template <class T>
using EigenRowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// View an arbitrary tensor as a (rows x cols) Eigen matrix over its flat
/// row-major storage. Caller asserts rows*cols == numel.
template <class T>
Eigen::Map<EigenRowMat<T>> as_matrix(Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return Eigen::Map<EigenRowMat<T>>(t.data(), static_cast<Eigen::Index>(rows),
                                    static_cast<Eigen::Index>(cols));
}

template <class T>
Eigen::Map<const EigenRowMat<T>> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return Eigen::Map<const EigenRowMat<T>>(t.data(), static_cast<Eigen::Index>(rows),
                                          static_cast<Eigen::Index>(cols));
}

template <class T>
void require_shape(const Tensor<T>& t, const std::vector<std::size_t>& shape, const char* what) {
  if (t.shape() != shape) {
    Tensor<T> expect(shape);
    throw ShapeError(std::string(what) + ": expected " + expect.shape_str() + ", got " + t.shape_str());
  }
}

}  // namespace vts

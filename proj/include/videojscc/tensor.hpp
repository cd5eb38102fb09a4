// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.

#ifndef VIDEOJSCC_TENSOR_HPP
#define VIDEOJSCC_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "videojscc/errors.hpp"

namespace videojscc {

/// Dense row-major tensor. Activations and parameters use the NCHW layout.
/// Plain value type: copying copies the buffer, no views, no ref counting.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(numel_of(shape_)), T(0));
  }

  Tensor(std::vector<int> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != numel_of(shape_)) {
      throw ShapeError("tensor data size does not match shape");
    }
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // 4D accessors (NCHW).
  T& at(int n, int c, int h, int w) { return data_[static_cast<std::size_t>(index4(n, c, h, w))]; }
  const T& at(int n, int c, int h, int w) const { return data_[static_cast<std::size_t>(index4(n, c, h, w))]; }

  std::int64_t index4(int n, int c, int h, int w) const {
    return ((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  /// Reinterprets the buffer under a new shape with identical element count.
  Tensor reshaped(std::vector<int> shape) const {
    if (numel_of(shape) != numel()) throw ShapeError("reshape changes element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Slice along the leading dimension: rows [begin, end).
  Tensor slice0(int begin, int end) const {
    if (rank() < 1 || begin < 0 || end > shape_[0] || begin > end) throw ShapeError("bad slice bounds");
    std::vector<int> s = shape_;
    s[0] = end - begin;
    std::int64_t stride = numel() / std::max<std::int64_t>(1, shape_[0]);
    Tensor t(s);
    std::copy(data_.begin() + begin * stride, data_.begin() + end * stride, t.data_.begin());
    return t;
  }

  /// Writes `src` into rows [begin, begin + src.dim(0)) along the leading dimension.
  void set_slice0(int begin, const Tensor& src) {
    std::int64_t stride = numel() / std::max<std::int64_t>(1, shape_[0]);
    std::copy(src.data_.begin(), src.data_.end(), data_.begin() + begin * stride);
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (const T& v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  Tensor& operator+=(const Tensor& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(T s) {
    for (T& v : data_) v *= s;
    return *this;
  }

  static std::int64_t numel_of(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw ShapeError("negative dimension");
      n *= d;
    }
    return n;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ']';
    return os.str();
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> t(shape_);
    for (std::int64_t i = 0; i < numel(); ++i) t[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
    return t;
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

}  // namespace videojscc

#endif  // VIDEOJSCC_TENSOR_HPP

/* Copyright 2026 The quakenet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef QUAKENET_TENSOR_HPP_
#define QUAKENET_TENSOR_HPP_

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "quakenet/gemm.hpp"

namespace quakenet {

/// Any inconsistency between declared and actual extents.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

inline void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (std::size_t extent : shape) {
    if (extent == 0) {
      throw ShapeError("tensor extent must be positive, got " + shape_to_string(shape));
    }
  }
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

/// Dense row-major N-dimensional array.
///
/// Every extent is at least one and the element count always equals the
/// product of the extents. The shape is fixed at construction except through
/// `reshape`; element values may be written through `data()` / `at()`.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    validate_shape(shape_);
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor of shape " + shape_to_string(shape_) + " needs " +
                       std::to_string(shape_numel(shape_)) + " values, got " +
                       std::to_string(data_.size()));
    }
  }

  Tensor(Shape shape, std::initializer_list<T> values)
      : Tensor(std::move(shape), std::vector<T>(values)) {}

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  T& operator[](std::size_t linear) { return data_[linear]; }
  const T& operator[](std::size_t linear) const { return data_[linear]; }

  Shape strides() const {
    Shape result(shape_.size(), 1);
    for (std::size_t i = shape_.size(); i-- > 1;) result[i - 1] = result[i] * shape_[i];
    return result;
  }

  /// Row-major linear offset of a full multi-index; throws on any index
  /// outside its extent.
  std::size_t offset(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) {
      throw ShapeError("index rank " + std::to_string(index.size()) +
                       " does not match tensor rank " + std::to_string(shape_.size()));
    }
    std::size_t linear = 0;
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] >= shape_[i]) {
        throw std::out_of_range("index " + std::to_string(index[i]) + " out of extent " +
                                std::to_string(shape_[i]) + " on axis " + std::to_string(i));
      }
      linear = linear * shape_[i] + index[i];
    }
    return linear;
  }

  T& at(std::initializer_list<std::size_t> index) {
    return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
  }
  const T& at(std::initializer_list<std::size_t> index) const {
    return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  template <typename U>
  friend Tensor<U> reshape(Tensor<U> t, Shape new_shape);

  Shape shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Same element sequence under a new shape with equal element count.
template <typename T>
Tensor<T> reshape(Tensor<T> t, Shape new_shape) {
  validate_shape(new_shape);
  if (shape_numel(new_shape) != t.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(t.shape()) + " to " +
                     shape_to_string(new_shape));
  }
  t.shape_ = std::move(new_shape);
  return t;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul needs rank-2 operands, got " + shape_to_string(a.shape()) +
                     " and " + shape_to_string(b.shape()));
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) {
    throw ShapeError("matmul inner extents differ: " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor<T> c({m, n});
  gemm(false, false, m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
  return c;
}

template <typename T, typename F>
Tensor<T> map_elementwise(const Tensor<T>& t, F&& f) {
  Tensor<T> out(t.shape());
  std::transform(t.begin(), t.end(), out.begin(), std::forward<F>(f));
  return out;
}

template <typename T, typename F>
Tensor<T> zip_elementwise(const Tensor<T>& a, const Tensor<T>& b, F&& f) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise shapes differ: " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  Tensor<T> out(a.shape());
  std::transform(a.begin(), a.end(), b.begin(), out.begin(), std::forward<F>(f));
  return out;
}

}  // namespace quakenet

#endif  // QUAKENET_TENSOR_HPP_

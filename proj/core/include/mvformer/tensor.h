/* Copyright 2026 The MVFormer Kit Authors. All Rights Reserved.

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
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mvformer/errors.h"

namespace mvformer {

enum class Axis : int { kN = 0, kC = 1, kH = 2, kW = 3 };

// Bit set over {n, c, h, w}.
class AxisSet {
 public:
  constexpr AxisSet() = default;
  constexpr AxisSet(std::initializer_list<Axis> axes) {
    for (Axis a : axes) bits_ |= 1u << static_cast<int>(a);
  }
  constexpr bool contains(Axis a) const {
    return (bits_ >> static_cast<int>(a)) & 1u;
  }
  constexpr bool contains(int a) const { return (bits_ >> a) & 1u; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool operator==(const AxisSet&) const = default;

 private:
  unsigned bits_ = 0;
};

struct Shape {
  int64_t n = 0;
  int64_t c = 0;
  int64_t h = 0;
  int64_t w = 0;

  constexpr int64_t numel() const { return n * c * h * w; }
  constexpr int64_t operator[](int axis) const {
    switch (axis) {
      case 0: return n;
      case 1: return c;
      case 2: return h;
      default: return w;
    }
  }
  constexpr bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense rank-4 (n, c, h, w) array, row-major. A value type: copies are deep.
// Gradients live on the tape and in Param, not here.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T v) { return Tensor(Shape{1, 1, 1, 1}, v); }
  // (1, C, 1, 1) vector used for per-channel broadcast operands.
  static Tensor channel_vector(std::span<const T> values);

  const Shape& shape() const { return shape_; }
  int64_t numel() const { return shape_.numel(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  int64_t offset(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(offset(n, c, h, w))];
  }
  const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(offset(n, c, h, w))];
  }

  T item() const;
  void fill(T v);
  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mvformer

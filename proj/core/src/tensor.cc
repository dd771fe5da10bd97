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
#include "mvformer/tensor.h"

#include <cmath>

#include <fmt/format.h>

namespace mvformer {

std::string Shape::str() const {
  return fmt::format("({}, {}, {}, {})", n, c, h, w);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw DimensionError("negative extent in shape " + shape.str());
  }
  data_.assign(static_cast<size_t>(shape.numel()), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(shape), data_(std::move(data)) {
  if (static_cast<int64_t>(data_.size()) != shape.numel()) {
    throw DimensionError(fmt::format("data length {} does not match shape {}",
                                     data_.size(), shape.str()));
  }
}

template <typename T>
Tensor<T> Tensor<T>::channel_vector(std::span<const T> values) {
  return Tensor(Shape{1, static_cast<int64_t>(values.size()), 1, 1},
                std::vector<T>(values.begin(), values.end()));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on non-scalar tensor " + shape_.str());
  }
  return data_[0];
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace mvformer

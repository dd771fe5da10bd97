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

#include <optional>
#include <span>
#include <vector>

#include "mvformer/tape.h"
#include "mvformer/tensor.h"

namespace mvformer {

struct Conv2dGeometry {
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
  int groups = 1;

  static Conv2dGeometry square(int stride, int pad, int groups = 1) {
    return {stride, stride, pad, pad, groups};
  }
};

// Validates operand shapes and returns the output shape. Weight layout is
// (c_out, c_in / groups, kh, kw).
Shape conv2d_output_shape(const Shape& x, const Shape& w,
                          const Conv2dGeometry& g);

template <typename T>
struct Moments {
  Tensor<T> mean;
  Tensor<T> var;  // population variance
};

// ---------------------------------------------------------------------------
// Plain tensor kernels. No tape involvement.
// ---------------------------------------------------------------------------

// Cross-correlation (no kernel flip). `bias` may be null.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const Conv2dGeometry& g);

// Mean and biased variance over `reduce`. Results keep rank 4 with reduced
// axes collapsed to 1.
template <typename T>
Moments<T> moments(const Tensor<T>& x, AxisSet reduce);

// Zero-sized entries produce tensors with c == 0.
template <typename T>
std::vector<Tensor<T>> channel_split(const Tensor<T>& x,
                                     std::span<const int64_t> sizes);

// Parts with c == 0 are skipped.
template <typename T>
Tensor<T> channel_concat(std::span<const Tensor<T>> parts);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// Broadcast rule shared by add/mul: `b` either has the shape of `a`, or is a
// (1, C, 1, 1) channel vector applied at every (n, h, w).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

// ---------------------------------------------------------------------------
// Differentiable ops recorded on a tape.
// ---------------------------------------------------------------------------
namespace ops {

template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, std::optional<Var> bias,
           const Conv2dGeometry& g);

template <typename T>
Var add(Tape<T>& t, Var a, Var b);
template <typename T>
Var mul(Tape<T>& t, Var a, Var b);
template <typename T>
Var scale(Tape<T>& t, Var x, T factor);
// Sum of all elements; result is (1, 1, 1, 1).
template <typename T>
Var sum(Tape<T>& t, Var x);

// (x - mean) / sqrt(var + eps) with statistics over `reduce`. Statistics are
// optionally copied to `stats`.
template <typename T>
Var normalize(Tape<T>& t, Var x, AxisSet reduce, T eps,
              Moments<T>* stats = nullptr);

// Same formula with frozen per-channel statistics, i.e. a fixed affine map.
template <typename T>
Var normalize_frozen(Tape<T>& t, Var x, const Tensor<T>& mean,
                     const Tensor<T>& var, T eps);

// y = s * relu(x)^2 + b with scalar (1, 1, 1, 1) operands s and b.
template <typename T>
Var star_relu(Tape<T>& t, Var x, Var s, Var b);

// Empty groups come back as nullopt and are not recorded.
template <typename T>
std::vector<std::optional<Var>> channel_split(Tape<T>& t, Var x,
                                              std::span<const int64_t> sizes);

template <typename T>
Var channel_concat(Tape<T>& t, std::span<const Var> parts);

template <typename T>
Var global_avg_pool(Tape<T>& t, Var x);

// y[n] = x[n] * sample_scale[n]. Drop path passes mask / keep_prob here.
template <typename T>
Var scale_samples(Tape<T>& t, Var x, std::span<const T> sample_scale);

// Mean over the batch of cross-entropy against (1 - eps) * onehot + eps / K.
// `logits` is (n, K, 1, 1).
template <typename T>
Var cross_entropy(Tape<T>& t, Var logits, std::span<const int> targets,
                  T label_smoothing);

}  // namespace ops
}  // namespace mvformer

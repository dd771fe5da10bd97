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

#include <string>
#include <string_view>

#include "mvformer/ops.h"
#include "mvformer/tape.h"

namespace mvformer {

enum class Mode { kTrain, kEval };

enum class NormKind { kBatch, kLayer, kInstance };

std::string_view to_string(NormKind kind);

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// BN / LN / IN followed by its own channelwise affine.
template <typename T>
struct PlainNormState {
  NormKind kind = NormKind::kLayer;
  Param<T> gamma;
  Param<T> beta;
  // Only populated for NormKind::kBatch.
  Buffer<T> run_mean;
  Buffer<T> run_var;
  T eps = static_cast<T>(kNormEps);
  T momentum = static_cast<T>(kBatchNormMomentum);

  static PlainNormState make(NormKind kind, int64_t channels,
                             const std::string& prefix);
  int64_t channels() const { return gamma.value.numel(); }

  template <typename F>
  void for_each_param(F&& f) {
    f(gamma);
    f(beta);
  }
  template <typename F>
  void for_each_buffer(F&& f) {
    if (kind == NormKind::kBatch) {
      f(run_mean);
      f(run_var);
    }
  }
};

// Multi-view normalization: per-channel weighted sum of the BN, LN and IN
// views of the input, followed by one shared affine.
template <typename T>
struct MvnState {
  Param<T> alpha_bn;
  Param<T> alpha_ln;
  Param<T> alpha_in;
  Param<T> gamma;
  Param<T> beta;
  Buffer<T> run_mean;
  Buffer<T> run_var;
  T eps = static_cast<T>(kNormEps);
  T momentum = static_cast<T>(kBatchNormMomentum);

  // alpha and gamma start at one, beta at zero, running var at one.
  static MvnState make(int64_t channels, const std::string& prefix);
  int64_t channels() const { return gamma.value.numel(); }

  template <typename F>
  void for_each_param(F&& f) {
    f(alpha_bn);
    f(alpha_ln);
    f(alpha_in);
    f(gamma);
    f(beta);
  }
  template <typename F>
  void for_each_buffer(F&& f) {
    f(run_mean);
    f(run_var);
  }
};

// Batch normalization without affine. Training mode normalizes with batch
// statistics over (n, h, w) and folds them into the running estimates;
// eval mode applies the running estimates.
template <typename T>
Var batch_norm(Tape<T>& t, Var x, Buffer<T>& run_mean, Buffer<T>& run_var,
               T eps, T momentum, Mode mode);

// Layer normalization over the channel axis at every (n, h, w).
template <typename T>
Var layer_norm(Tape<T>& t, Var x, T eps);

// Instance normalization over (h, w) for every (n, c).
template <typename T>
Var instance_norm(Tape<T>& t, Var x, T eps);

template <typename T>
Var apply_affine(Tape<T>& t, Var x, Var gamma, Var beta);

template <typename T>
Var plain_norm(Tape<T>& t, Var x, PlainNormState<T>& st, Mode mode);

// y = gamma * (a_bn * BN(x) + a_ln * LN(x) + a_in * IN(x)) + beta.
// A 1x1 spatial extent is accepted here: the IN view is then identically
// zero, the eps-regularized limit, rather than an error.
template <typename T>
Var mvn(Tape<T>& t, Var x, MvnState<T>& st, Mode mode);

}  // namespace mvformer

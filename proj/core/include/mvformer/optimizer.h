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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvformer/tape.h"

namespace mvformer {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// Moments are kept per parameter, in registry order.
template <typename T>
struct OptimState {
  AdamWConfig config;
  int64_t step = 0;
  std::vector<std::string> names;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  static OptimState init(std::span<Param<T>* const> params,
                         const AdamWConfig& cfg);
};

// One decoupled-decay Adam update at learning rate `lr`. Parameters with
// decay == false skip the shrink. A non-finite gradient throws NumericError
// naming the parameter before anything is modified.
template <typename T>
void adamw_step(std::span<Param<T>* const> params, OptimState<T>& st,
                double lr);

// Linear 0 -> base_lr over `warmup` steps, then half-cosine down to 0 at
// `total`.
double cosine_lr(int64_t step, int64_t total, int64_t warmup, double base_lr);

}  // namespace mvformer

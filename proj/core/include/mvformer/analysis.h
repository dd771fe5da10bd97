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
#include <cstdint>
#include <string>
#include <vector>

#include "mvformer/model.h"

namespace mvformer {

struct CostRow {
  std::string name;  // module path, e.g. "stage2.block0.mixer.pw1"
  int64_t params = 0;
  int64_t macs = 0;

  bool operator==(const CostRow&) const = default;
};

// Per-module learnable-scalar and multiply-accumulate counts. MACs are per
// single image: c_out * h_out * w_out * (c_in / groups) * kh * kw for every
// convolution and dense map; norms, activations, biases and residual adds
// are not counted.
struct CostReport {
  std::string model;
  int64_t input_hw = 0;
  std::vector<CostRow> rows;

  int64_t total_params() const;
  int64_t total_macs() const;
  // Rows folded by their first path component (stage1..stage4, head).
  std::vector<CostRow> by_stage() const;
  // "name,params,macs" header, one line per row, then a "total" line.
  std::string to_csv() const;
};

// Closed-form counts from the architecture description alone; no weights are
// allocated. `count_params` leaves the MAC column at zero.
CostReport count_params(const ModelConfig& cfg);
CostReport count_macs(const ModelConfig& cfg, int64_t input_hw);

// Counts read back from an instantiated model's parameter registry, grouped
// by module path. Running statistics are not parameters.
template <typename T>
CostReport count_params(const Model<T>& model);

struct AlphaRow {
  int stage = 0;
  int block = 0;
  std::string site;  // "mixer" (norm1) or "mlp" (norm2)
  double alpha_bn = 0;
  double alpha_ln = 0;
  double alpha_in = 0;
};

struct AlphaProfile {
  std::vector<AlphaRow> rows;
  // "stage,block,site,alpha_bn,alpha_ln,alpha_in", shortest round-trip
  // decimal for the values.
  std::string to_csv() const;
};

// Signed channel means of every block MVN site in network order. Throws
// ConfigError when the model has no MVN block norms.
template <typename T>
AlphaProfile dump_alpha_profile(const Model<T>& model);

template <typename T>
struct NormalizedImages {
  Tensor<T> bn;
  Tensor<T> ln;
  Tensor<T> in;
  Tensor<T> composite;  // w_bn * bn + w_ln * ln + w_in * in
};

// Applies BN, LN and IN (no affine) directly to raw pixels and forms the
// weighted composite. All four are pre-display values. Requires n >= 2.
template <typename T>
NormalizedImages<T> normalize_image_grid(const Tensor<T>& images,
                                         const std::array<double, 3>& weights);

// Per-image min-max rescale to [0, 1]; constant images map to zero.
template <typename T>
Tensor<T> rescale_per_image(const Tensor<T>& x);

}  // namespace mvformer

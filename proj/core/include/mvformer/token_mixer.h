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
#include <optional>
#include <string>
#include <string_view>

#include "mvformer/ops.h"
#include "mvformer/random.h"
#include "mvformer/tape.h"

namespace mvformer {

// StarReLU initial values, one (scale, bias) pair per activation site.
inline constexpr double kStarReluScale = 0.8944;
inline constexpr double kStarReluBias = -0.4472;

inline constexpr int kLocalKernel = 3;
inline constexpr int kIntermediateKernel = 7;

// Channel routing and global-filter geometry of one multi-view token mixer.
// Group sizes are counted on the expanded (2C) feature.
struct StageSpec {
  int stage = 1;
  int64_t channels = 0;  // C, the block width
  int64_t dim_local = 0;
  int64_t dim_intermediate = 0;
  int64_t dim_global = 0;
  int global_kernel = 7;
  // k x 1 followed by 1 x k when true, a square k x k filter otherwise.
  bool global_decomposed = false;

  int64_t expanded() const { return 2 * channels; }
  int global_pad() const { return global_kernel / 2; }
  bool operator==(const StageSpec&) const = default;
};

// Stage-specific configuration: ratios 50:50:0, 25:50:25, 25:50:25, 0:50:50
// of 2C and global kernels 55, 27, 13 (decomposed) and 7x7 (square).
StageSpec make_stage_spec(int stage, int64_t channels);

enum class MixerAblation {
  kNone,
  kNoStageSplit,    // 25:50:25 everywhere
  kNoStageGlobal,   // stage-3 global filter (13, decomposed) everywhere
  kNoStageBoth,
  kDropLocal,       // intermediate filter absorbs the local share
  kDropIntermediate,  // local and global shares doubled
  kDropGlobal,      // intermediate filter absorbs the global share
};

std::string_view to_string(MixerAblation a);
// Accepts the names printed by to_string(); throws ConfigError otherwise.
MixerAblation parse_ablation(std::string_view name);

StageSpec ablate_spec(const StageSpec& spec, MixerAblation mode);

template <typename T>
struct DepthwiseBranch {
  Param<T> weight;  // (dim, 1, k, k)
  Param<T> bias;
};

// Global depthwise filter. Decomposed: `weight` is (dim, 1, k, 1) without
// bias and `weight2` is (dim, 1, 1, k) carrying the bias. Square: `weight`
// is (dim, 1, k, k) and `weight2` is unset.
template <typename T>
struct GlobalBranch {
  Param<T> weight;
  std::optional<Param<T>> weight2;
  Param<T> bias;
};

template <typename T>
struct MvtmParams {
  Param<T> pw1_weight;  // (2C, C, 1, 1)
  Param<T> pw1_bias;
  Param<T> act_scale;
  Param<T> act_bias;
  std::optional<DepthwiseBranch<T>> local;
  std::optional<DepthwiseBranch<T>> intermediate;
  std::optional<GlobalBranch<T>> global;
  Param<T> pw2_weight;  // (C, 2C, 1, 1)
  Param<T> pw2_bias;

  // Empty groups get no kernels at all.
  static MvtmParams make(const StageSpec& spec, const std::string& prefix,
                         Rng& rng);

  template <typename F>
  void for_each_param(F&& f) {
    f(pw1_weight);
    f(pw1_bias);
    f(act_scale);
    f(act_bias);
    if (local) {
      f(local->weight);
      f(local->bias);
    }
    if (intermediate) {
      f(intermediate->weight);
      f(intermediate->bias);
    }
    if (global) {
      f(global->weight);
      if (global->weight2) f(*global->weight2);
      f(global->bias);
    }
    f(pw2_weight);
    f(pw2_bias);
  }
};

// Scalar (1, 1, 1, 1) parameter initialised to `v`, exempt from decay.
template <typename T>
Param<T> scalar_param(const std::string& name, double v);

// Depthwise k x 1 convolution followed by depthwise 1 x k, both padded to
// keep the spatial size. `bias` is added after the second half.
template <typename T>
Var decomposed_global_conv(Tape<T>& t, Var x, Var vertical, Var horizontal,
                           std::optional<Var> bias);

template <typename T>
Var star_relu_site(Tape<T>& t, Var x, Param<T>& scale, Param<T>& bias) {
  return ops::star_relu(t, x, t.param(scale), t.param(bias));
}

// pwconv1 -> StarReLU -> split (local / intermediate / global) -> per-group
// depthwise filters -> concat -> pwconv2. Output shape equals input shape.
template <typename T>
Var mvtm_forward(Tape<T>& t, Var x, MvtmParams<T>& p, const StageSpec& spec);

}  // namespace mvformer

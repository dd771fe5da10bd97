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
#include <variant>
#include <vector>

#include "mvformer/normalization.h"
#include "mvformer/random.h"
#include "mvformer/token_mixer.h"

namespace mvformer {

// Norm used at the two sites inside every block. kMvn is the MVFormer
// default; the plain kinds exist for ablations and loss-curve comparisons.
enum class BlockNorm { kMvn, kBatch, kLayer, kInstance };

std::string_view to_string(BlockNorm n);
BlockNorm parse_block_norm(std::string_view name);

struct ModelConfig {
  std::string name = "custom";
  std::array<int64_t, 4> embed_dims = {64, 128, 320, 512};
  std::array<int, 4> depths = {2, 2, 4, 2};
  int mlp_ratio = 4;
  int head_ratio = 4;
  int num_classes = 1000;
  int in_channels = 3;
  double drop_path_rate = 0.0;
  std::array<bool, 4> res_scale = {false, false, true, true};
  BlockNorm block_norm = BlockNorm::kMvn;
  MixerAblation ablation = MixerAblation::kNone;

  int stem_kernel = 7;
  int stem_stride = 4;
  int stem_pad = 2;
  int down_kernel = 3;
  int down_stride = 2;
  int down_pad = 1;

  // Throws ConfigError on odd widths, empty stages and similar.
  void validate() const;
  // Stage spec (1-based stage) with the configured ablation applied.
  StageSpec stage_spec(int stage) const;
  int total_blocks() const;
  // Stochastic-depth probability ramping linearly from 0 to drop_path_rate
  // over blocks in depth order.
  double drop_prob(int block_index) const;
  Conv2dGeometry embed_geometry(int stage) const;
  int embed_kernel(int stage) const;
  // Spatial size after the patch embedding of `stage`.
  int64_t stage_resolution(int stage, int64_t input_hw) const;
};

// "xT", "T", "S", "B" and the desk-scale "micro".
ModelConfig preset(std::string_view name);
std::vector<std::string> preset_names();

template <typename T>
using BlockNormState = std::variant<MvnState<T>, PlainNormState<T>>;

template <typename T>
struct MlpParams {
  Param<T> fc1_weight;
  Param<T> fc1_bias;
  Param<T> act_scale;
  Param<T> act_bias;
  Param<T> fc2_weight;
  Param<T> fc2_bias;

  static MlpParams make(int64_t in, int64_t hidden, int64_t out,
                        const std::string& prefix, Rng& rng);

  template <typename F>
  void for_each_param(F&& f) {
    f(fc1_weight);
    f(fc1_bias);
    f(act_scale);
    f(act_bias);
    f(fc2_weight);
    f(fc2_bias);
  }
};

template <typename T>
struct Block {
  BlockNormState<T> norm1;
  StageSpec spec;
  MvtmParams<T> mixer;
  BlockNormState<T> norm2;
  MlpParams<T> mlp;
  std::optional<Param<T>> res_scale1;
  std::optional<Param<T>> res_scale2;
  double drop_prob = 0.0;

  template <typename F>
  void for_each_param(F&& f) {
    std::visit([&](auto& n) { n.for_each_param(f); }, norm1);
    mixer.for_each_param(f);
    if (res_scale1) f(*res_scale1);
    std::visit([&](auto& n) { n.for_each_param(f); }, norm2);
    mlp.for_each_param(f);
    if (res_scale2) f(*res_scale2);
  }
  template <typename F>
  void for_each_buffer(F&& f) {
    std::visit([&](auto& n) { n.for_each_buffer(f); }, norm1);
    std::visit([&](auto& n) { n.for_each_buffer(f); }, norm2);
  }
};

// Strided convolution that opens a stage; stages 2-4 normalize first.
template <typename T>
struct PatchEmbed {
  std::optional<MvnState<T>> norm;
  Param<T> weight;
  Param<T> bias;
  Conv2dGeometry geometry;

  template <typename F>
  void for_each_param(F&& f) {
    if (norm) norm->for_each_param(f);
    f(weight);
    f(bias);
  }
  template <typename F>
  void for_each_buffer(F&& f) {
    if (norm) norm->for_each_buffer(f);
  }
};

template <typename T>
struct Stage {
  PatchEmbed<T> embed;
  std::vector<Block<T>> blocks;
};

// Global pool -> LayerNorm -> C -> 4C -> classes MLP.
template <typename T>
struct Head {
  PlainNormState<T> norm;
  MlpParams<T> mlp;
};

template <typename T>
struct Model {
  ModelConfig config;
  std::array<Stage<T>, 4> stages;
  Head<T> head;

  // Visits every learnable tensor once, in network order.
  template <typename F>
  void for_each_param(F&& f) {
    for (auto& st : stages) {
      st.embed.for_each_param(f);
      for (auto& b : st.blocks) b.for_each_param(f);
    }
    head.norm.for_each_param(f);
    head.mlp.for_each_param(f);
  }
  template <typename F>
  void for_each_buffer(F&& f) {
    for (auto& st : stages) {
      st.embed.for_each_buffer(f);
      for (auto& b : st.blocks) b.for_each_buffer(f);
    }
    head.norm.for_each_buffer(f);
  }

  std::vector<Param<T>*> parameters();
  std::vector<const Param<T>*> parameters() const;
  std::vector<Buffer<T>*> buffers();
  std::vector<const Buffer<T>*> buffers() const;
  void zero_grad();
};

// Truncated-normal (std 0.02) conv/dense weights, zero biases, unit
// alpha/gamma/ResScale, StarReLU at (0.8944, -0.4472). Seed-deterministic.
template <typename T>
Model<T> build_model(const ModelConfig& cfg, uint64_t seed);

// Same architecture in another precision; values converted elementwise.
template <typename U, typename T>
Model<U> cast_model(const Model<T>& src);

struct ForwardContext {
  Mode mode = Mode::kEval;
  // Drop-path source; required in training mode when any block drops.
  Rng* rng = nullptr;
};

template <typename T>
Var norm_forward(Tape<T>& t, Var x, BlockNormState<T>& n, Mode mode);

template <typename T>
Var mlp_forward(Tape<T>& t, Var x, MlpParams<T>& p);

template <typename T>
Var patch_embed_forward(Tape<T>& t, Var x, PatchEmbed<T>& pe, Mode mode);

// x_hat = x + r1 * MVTM(norm1(x)); y = x_hat + r2 * MLP(norm2(x_hat)).
template <typename T>
Var block_forward(Tape<T>& t, Var x, Block<T>& blk, const ForwardContext& ctx);

// Logits of shape (n, num_classes, 1, 1).
template <typename T>
Var model_forward(Tape<T>& t, Var images, Model<T>& m,
                  const ForwardContext& ctx);

// Gradient-free forward returning logits.
template <typename T>
Tensor<T> predict(Model<T>& m, const Tensor<T>& images,
                  Mode mode = Mode::kEval);

}  // namespace mvformer

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
#include "mvformer/model.h"

#include <fmt/format.h>

namespace mvformer {

std::string_view to_string(BlockNorm n) {
  switch (n) {
    case BlockNorm::kMvn: return "mvn";
    case BlockNorm::kBatch: return "bn";
    case BlockNorm::kLayer: return "ln";
    case BlockNorm::kInstance: return "in";
  }
  return "?";
}

BlockNorm parse_block_norm(std::string_view name) {
  for (auto n : {BlockNorm::kMvn, BlockNorm::kBatch, BlockNorm::kLayer,
                 BlockNorm::kInstance}) {
    if (to_string(n) == name) return n;
  }
  throw ConfigError(fmt::format("unknown block norm '{}'", name));
}

void ModelConfig::validate() const {
  for (int s = 0; s < 4; ++s) {
    if (embed_dims[s] < 2 || embed_dims[s] % 2 != 0) {
      throw ConfigError(fmt::format(
          "embed dim {} of stage {} must be even and positive", embed_dims[s],
          s + 1));
    }
    if (depths[s] < 1) {
      throw ConfigError(fmt::format("stage {} needs at least one block", s + 1));
    }
  }
  if (mlp_ratio < 1 || head_ratio < 1) {
    throw ConfigError("mlp_ratio and head_ratio must be >= 1");
  }
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (!(drop_path_rate >= 0.0 && drop_path_rate < 1.0)) {
    throw ConfigError(
        fmt::format("drop_path_rate {} outside [0, 1)", drop_path_rate));
  }
}

StageSpec ModelConfig::stage_spec(int stage) const {
  return ablate_spec(make_stage_spec(stage, embed_dims[stage - 1]), ablation);
}

int ModelConfig::total_blocks() const {
  return depths[0] + depths[1] + depths[2] + depths[3];
}

double ModelConfig::drop_prob(int block_index) const {
  const int total = total_blocks();
  if (total <= 1) return 0.0;
  return drop_path_rate * block_index / static_cast<double>(total - 1);
}

Conv2dGeometry ModelConfig::embed_geometry(int stage) const {
  return stage == 1 ? Conv2dGeometry::square(stem_stride, stem_pad)
                    : Conv2dGeometry::square(down_stride, down_pad);
}

int ModelConfig::embed_kernel(int stage) const {
  return stage == 1 ? stem_kernel : down_kernel;
}

int64_t ModelConfig::stage_resolution(int stage, int64_t input_hw) const {
  int64_t r = input_hw;
  for (int s = 1; s <= stage; ++s) {
    const Conv2dGeometry g = embed_geometry(s);
    const int64_t span = r + 2 * g.pad_h - embed_kernel(s);
    if (span < 0) {
      throw DimensionError(fmt::format(
          "input {}x{} too small: stage {} patch embedding sees {}x{}",
          input_hw, input_hw, s, r, r));
    }
    r = span / g.stride_h + 1;
  }
  return r;
}

ModelConfig preset(std::string_view name) {
  ModelConfig c;
  c.name = std::string(name);
  if (name == "xT") {
    c.embed_dims = {64, 128, 320, 512};
    c.depths = {2, 2, 4, 2};
    c.drop_path_rate = 0.2;
  } else if (name == "T") {
    c.embed_dims = {64, 128, 320, 512};
    c.depths = {3, 3, 9, 3};
    c.drop_path_rate = 0.2;
  } else if (name == "S") {
    c.embed_dims = {64, 128, 320, 512};
    c.depths = {3, 12, 18, 3};
    c.drop_path_rate = 0.3;
  } else if (name == "B") {
    c.embed_dims = {96, 192, 384, 576};
    c.depths = {3, 12, 18, 3};
    c.drop_path_rate = 0.4;
  } else if (name == "micro") {
    c.embed_dims = {8, 16, 32, 64};
    c.depths = {1, 1, 2, 1};
    c.num_classes = 4;
    c.drop_path_rate = 0.0;
  } else {
    throw ConfigError(fmt::format(
        "unknown preset '{}' (expected one of xT, T, S, B, micro)", name));
  }
  return c;
}

std::vector<std::string> preset_names() { return {"xT", "T", "S", "B", "micro"}; }

namespace {

template <typename T>
Param<T> dense_weight(const std::string& name, int64_t out, int64_t in,
                      int64_t kh, int64_t kw, Rng& rng) {
  Tensor<T> v(Shape{out, in, kh, kw});
  fill_trunc_normal<T>(v.span(), 0.02, rng);
  return Param<T>(name, std::move(v), true);
}

template <typename T>
Param<T> zero_bias(const std::string& name, int64_t n) {
  return Param<T>(name, Tensor<T>(Shape{1, n, 1, 1}), false);
}

template <typename T>
BlockNormState<T> make_block_norm(BlockNorm kind, int64_t channels,
                                  const std::string& prefix) {
  switch (kind) {
    case BlockNorm::kMvn:
      return MvnState<T>::make(channels, prefix);
    case BlockNorm::kBatch:
      return PlainNormState<T>::make(NormKind::kBatch, channels, prefix);
    case BlockNorm::kLayer:
      return PlainNormState<T>::make(NormKind::kLayer, channels, prefix);
    case BlockNorm::kInstance:
      return PlainNormState<T>::make(NormKind::kInstance, channels, prefix);
  }
  throw ConfigError("bad block norm");
}

// Per-sample keep mask scaled by 1 / keep_prob.
template <typename T>
Var drop_path(Tape<T>& t, Var x, double prob, const ForwardContext& ctx) {
  if (ctx.mode != Mode::kTrain || prob <= 0.0) return x;
  if (ctx.rng == nullptr) {
    throw ConfigError("drop path in training mode requires an RNG");
  }
  const double keep = 1.0 - prob;
  std::vector<T> factors(static_cast<size_t>(t.value(x).shape().n));
  for (T& f : factors) {
    f = uniform01(*ctx.rng) < keep ? static_cast<T>(1.0 / keep) : T(0);
  }
  return ops::scale_samples(t, x, std::span<const T>(factors));
}

}  // namespace

template <typename T>
MlpParams<T> MlpParams<T>::make(int64_t in, int64_t hidden, int64_t out,
                                const std::string& prefix, Rng& rng) {
  MlpParams p;
  p.fc1_weight = dense_weight<T>(prefix + ".fc1.weight", hidden, in, 1, 1, rng);
  p.fc1_bias = zero_bias<T>(prefix + ".fc1.bias", hidden);
  p.act_scale = scalar_param<T>(prefix + ".act.scale", kStarReluScale);
  p.act_bias = scalar_param<T>(prefix + ".act.bias", kStarReluBias);
  p.fc2_weight = dense_weight<T>(prefix + ".fc2.weight", out, hidden, 1, 1, rng);
  p.fc2_bias = zero_bias<T>(prefix + ".fc2.bias", out);
  return p;
}

template <typename T>
std::vector<Param<T>*> Model<T>::parameters() {
  std::vector<Param<T>*> out;
  for_each_param([&](Param<T>& p) { out.push_back(&p); });
  return out;
}

template <typename T>
std::vector<const Param<T>*> Model<T>::parameters() const {
  std::vector<const Param<T>*> out;
  const_cast<Model*>(this)->for_each_param(
      [&](Param<T>& p) { out.push_back(&p); });
  return out;
}

template <typename T>
std::vector<Buffer<T>*> Model<T>::buffers() {
  std::vector<Buffer<T>*> out;
  for_each_buffer([&](Buffer<T>& b) { out.push_back(&b); });
  return out;
}

template <typename T>
std::vector<const Buffer<T>*> Model<T>::buffers() const {
  std::vector<const Buffer<T>*> out;
  const_cast<Model*>(this)->for_each_buffer(
      [&](Buffer<T>& b) { out.push_back(&b); });
  return out;
}

template <typename T>
void Model<T>::zero_grad() {
  for_each_param([](Param<T>& p) { p.zero_grad(); });
}

template <typename T>
Model<T> build_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Model<T> m;
  m.config = cfg;
  int64_t in_c = cfg.in_channels;
  int block_index = 0;
  for (int s = 1; s <= 4; ++s) {
    const int64_t c = cfg.embed_dims[s - 1];
    const std::string sp = fmt::format("stage{}", s);
    Stage<T>& st = m.stages[s - 1];
    if (s > 1) st.embed.norm = MvnState<T>::make(in_c, sp + ".embed.norm");
    const int k = cfg.embed_kernel(s);
    st.embed.weight = dense_weight<T>(sp + ".embed.weight", c, in_c, k, k, rng);
    st.embed.bias = zero_bias<T>(sp + ".embed.bias", c);
    st.embed.geometry = cfg.embed_geometry(s);
    const StageSpec spec = cfg.stage_spec(s);
    for (int b = 0; b < cfg.depths[s - 1]; ++b, ++block_index) {
      const std::string bp = fmt::format("{}.block{}", sp, b);
      Block<T> blk{make_block_norm<T>(cfg.block_norm, c, bp + ".norm1"),
                   spec,
                   MvtmParams<T>::make(spec, bp + ".mixer", rng),
                   make_block_norm<T>(cfg.block_norm, c, bp + ".norm2"),
                   MlpParams<T>::make(c, cfg.mlp_ratio * c, c, bp + ".mlp", rng),
                   std::nullopt,
                   std::nullopt,
                   cfg.drop_prob(block_index)};
      if (cfg.res_scale[s - 1]) {
        blk.res_scale1 = Param<T>(bp + ".res_scale1",
                                  Tensor<T>(Shape{1, c, 1, 1}, T(1)), false);
        blk.res_scale2 = Param<T>(bp + ".res_scale2",
                                  Tensor<T>(Shape{1, c, 1, 1}, T(1)), false);
      }
      st.blocks.push_back(std::move(blk));
    }
    in_c = c;
  }
  m.head.norm = PlainNormState<T>::make(NormKind::kLayer, in_c, "head.norm");
  m.head.mlp = MlpParams<T>::make(in_c, cfg.head_ratio * in_c, cfg.num_classes,
                                  "head", rng);
  return m;
}

template <typename U, typename T>
Model<U> cast_model(const Model<T>& src) {
  Model<U> dst = build_model<U>(src.config, 0);
  auto sp = src.parameters();
  auto dp = dst.parameters();
  for (size_t i = 0; i < sp.size(); ++i) {
    dp[i]->value = sp[i]->value.template cast<U>();
    dp[i]->grad = sp[i]->grad.template cast<U>();
  }
  auto sb = src.buffers();
  auto db = dst.buffers();
  for (size_t i = 0; i < sb.size(); ++i) {
    db[i]->value = sb[i]->value.template cast<U>();
  }
  return dst;
}

template <typename T>
Var norm_forward(Tape<T>& t, Var x, BlockNormState<T>& n, Mode mode) {
  if (auto* m = std::get_if<MvnState<T>>(&n)) return mvn(t, x, *m, mode);
  return plain_norm(t, x, std::get<PlainNormState<T>>(n), mode);
}

template <typename T>
Var mlp_forward(Tape<T>& t, Var x, MlpParams<T>& p) {
  Var h = ops::conv2d(t, x, t.param(p.fc1_weight), t.param(p.fc1_bias),
                      Conv2dGeometry{});
  h = star_relu_site(t, h, p.act_scale, p.act_bias);
  return ops::conv2d(t, h, t.param(p.fc2_weight), t.param(p.fc2_bias),
                     Conv2dGeometry{});
}

template <typename T>
Var patch_embed_forward(Tape<T>& t, Var x, PatchEmbed<T>& pe, Mode mode) {
  const int64_t want = pe.weight.value.shape().c;
  if (t.value(x).shape().c != want) {
    throw DimensionError(fmt::format(
        "patch embedding: input axis c is {} but the embedding expects {}",
        t.value(x).shape().c, want));
  }
  if (pe.norm) x = mvn(t, x, *pe.norm, mode);
  return ops::conv2d(t, x, t.param(pe.weight), t.param(pe.bias), pe.geometry);
}

template <typename T>
Var block_forward(Tape<T>& t, Var x, Block<T>& blk, const ForwardContext& ctx) {
  if (t.value(x).shape().c != blk.spec.channels) {
    throw DimensionError(fmt::format(
        "block: input axis c is {} but the block width is {}",
        t.value(x).shape().c, blk.spec.channels));
  }
  Var h = norm_forward(t, x, blk.norm1, ctx.mode);
  h = mvtm_forward(t, h, blk.mixer, blk.spec);
  if (blk.res_scale1) h = ops::mul(t, h, t.param(*blk.res_scale1));
  h = drop_path(t, h, blk.drop_prob, ctx);
  Var mid = ops::add(t, x, h);

  h = norm_forward(t, mid, blk.norm2, ctx.mode);
  h = mlp_forward(t, h, blk.mlp);
  if (blk.res_scale2) h = ops::mul(t, h, t.param(*blk.res_scale2));
  h = drop_path(t, h, blk.drop_prob, ctx);
  return ops::add(t, mid, h);
}

template <typename T>
Var model_forward(Tape<T>& t, Var images, Model<T>& m,
                  const ForwardContext& ctx) {
  Var x = images;
  for (auto& st : m.stages) {
    x = patch_embed_forward(t, x, st.embed, ctx.mode);
    for (auto& blk : st.blocks) x = block_forward(t, x, blk, ctx);
  }
  x = ops::global_avg_pool(t, x);
  x = plain_norm(t, x, m.head.norm, ctx.mode);
  return mlp_forward(t, x, m.head.mlp);
}

template <typename T>
Tensor<T> predict(Model<T>& m, const Tensor<T>& images, Mode mode) {
  Tape<T> t;
  t.set_grad_enabled(false);
  Rng rng(0);
  ForwardContext ctx{mode, &rng};
  Var out = model_forward(t, t.constant(images), m, ctx);
  return t.value(out);
}

#define MVFORMER_INSTANTIATE_MODEL(T)                                       \
  template struct MlpParams<T>;                                             \
  template struct Model<T>;                                                 \
  template Model<T> build_model<T>(const ModelConfig&, uint64_t);           \
  template Var norm_forward(Tape<T>&, Var, BlockNormState<T>&, Mode);       \
  template Var mlp_forward(Tape<T>&, Var, MlpParams<T>&);                   \
  template Var patch_embed_forward(Tape<T>&, Var, PatchEmbed<T>&, Mode);    \
  template Var block_forward(Tape<T>&, Var, Block<T>&, const ForwardContext&); \
  template Var model_forward(Tape<T>&, Var, Model<T>&, const ForwardContext&); \
  template Tensor<T> predict(Model<T>&, const Tensor<T>&, Mode);

MVFORMER_INSTANTIATE_MODEL(float)
MVFORMER_INSTANTIATE_MODEL(double)

template Model<double> cast_model<double, float>(const Model<float>&);
template Model<float> cast_model<float, double>(const Model<double>&);
template Model<float> cast_model<float, float>(const Model<float>&);
template Model<double> cast_model<double, double>(const Model<double>&);

#undef MVFORMER_INSTANTIATE_MODEL

}  // namespace mvformer

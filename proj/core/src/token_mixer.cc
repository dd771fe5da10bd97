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
#include "mvformer/token_mixer.h"

#include <fmt/format.h>

namespace mvformer {
namespace {

constexpr std::array<int, 4> kGlobalKernels = {55, 27, 13, 7};

template <typename T>
Param<T> weight_param(const std::string& name, Shape shape, Rng& rng) {
  Tensor<T> v(shape);
  fill_trunc_normal<T>(v.span(), 0.02, rng);
  return Param<T>(name, std::move(v), true);
}

template <typename T>
Param<T> bias_param(const std::string& name, int64_t n) {
  return Param<T>(name, Tensor<T>(Shape{1, n, 1, 1}), false);
}

Conv2dGeometry depthwise(int64_t dim, int kh, int kw) {
  return Conv2dGeometry{1, 1, kh / 2, kw / 2, static_cast<int>(dim)};
}

}  // namespace

StageSpec make_stage_spec(int stage, int64_t channels) {
  if (stage < 1 || stage > 4) {
    throw ConfigError(fmt::format("stage must be in 1..4, got {}", stage));
  }
  if (channels < 1 || (2 * channels) % 4 != 0) {
    throw ConfigError(fmt::format(
        "stage {}: expanded width 2C = {} is not divisible by 4", stage,
        2 * channels));
  }
  const int64_t split = 2 * channels / 4;
  StageSpec s;
  s.stage = stage;
  s.channels = channels;
  s.dim_intermediate = 2 * split;
  s.dim_local = split * (2 - stage / 2);
  s.dim_global = split * (stage / 2);
  s.global_kernel = kGlobalKernels[stage - 1];
  s.global_decomposed = stage < 4;
  return s;
}

std::string_view to_string(MixerAblation a) {
  switch (a) {
    case MixerAblation::kNone: return "none";
    case MixerAblation::kNoStageSplit: return "no-stage-split";
    case MixerAblation::kNoStageGlobal: return "no-stage-global";
    case MixerAblation::kNoStageBoth: return "no-stage-both";
    case MixerAblation::kDropLocal: return "drop-local";
    case MixerAblation::kDropIntermediate: return "drop-intermediate";
    case MixerAblation::kDropGlobal: return "drop-global";
  }
  return "?";
}

MixerAblation parse_ablation(std::string_view name) {
  for (auto a : {MixerAblation::kNone, MixerAblation::kNoStageSplit,
                 MixerAblation::kNoStageGlobal, MixerAblation::kNoStageBoth,
                 MixerAblation::kDropLocal, MixerAblation::kDropIntermediate,
                 MixerAblation::kDropGlobal}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError(fmt::format("unknown ablation mode '{}'", name));
}

StageSpec ablate_spec(const StageSpec& spec, MixerAblation mode) {
  StageSpec s = spec;
  const int64_t split = spec.expanded() / 4;
  const bool fixed_split = mode == MixerAblation::kNoStageSplit ||
                           mode == MixerAblation::kNoStageBoth;
  const bool fixed_global = mode == MixerAblation::kNoStageGlobal ||
                            mode == MixerAblation::kNoStageBoth;
  if (fixed_split) {
    s.dim_local = split;
    s.dim_intermediate = 2 * split;
    s.dim_global = split;
  }
  if (fixed_global) {
    s.global_kernel = kGlobalKernels[2];
    s.global_decomposed = true;
  }
  switch (mode) {
    case MixerAblation::kDropLocal:
      s.dim_intermediate += s.dim_local;
      s.dim_local = 0;
      break;
    case MixerAblation::kDropGlobal:
      s.dim_intermediate += s.dim_global;
      s.dim_global = 0;
      break;
    case MixerAblation::kDropIntermediate:
      s.dim_local *= 2;
      s.dim_global *= 2;
      s.dim_intermediate = 0;
      break;
    default:
      break;
  }
  return s;
}

template <typename T>
Param<T> scalar_param(const std::string& name, double v) {
  return Param<T>(name, Tensor<T>::scalar(static_cast<T>(v)), false);
}

template <typename T>
MvtmParams<T> MvtmParams<T>::make(const StageSpec& spec,
                                  const std::string& prefix, Rng& rng) {
  const int64_t c = spec.channels;
  const int64_t e = spec.expanded();
  if (spec.dim_local + spec.dim_intermediate + spec.dim_global != e) {
    throw ConfigError(fmt::format(
        "{}: group sizes {}+{}+{} do not add up to 2C = {}", prefix,
        spec.dim_local, spec.dim_intermediate, spec.dim_global, e));
  }
  if (spec.global_kernel % 2 == 0) {
    throw ConfigError(fmt::format("{}: global kernel {} must be odd", prefix,
                                  spec.global_kernel));
  }
  MvtmParams p;
  p.pw1_weight = weight_param<T>(prefix + ".pw1.weight", {e, c, 1, 1}, rng);
  p.pw1_bias = bias_param<T>(prefix + ".pw1.bias", e);
  p.act_scale = scalar_param<T>(prefix + ".act.scale", kStarReluScale);
  p.act_bias = scalar_param<T>(prefix + ".act.bias", kStarReluBias);
  if (spec.dim_local > 0) {
    const int64_t d = spec.dim_local;
    p.local = DepthwiseBranch<T>{
        weight_param<T>(prefix + ".local.weight",
                        {d, 1, kLocalKernel, kLocalKernel}, rng),
        bias_param<T>(prefix + ".local.bias", d)};
  }
  if (spec.dim_intermediate > 0) {
    const int64_t d = spec.dim_intermediate;
    p.intermediate = DepthwiseBranch<T>{
        weight_param<T>(prefix + ".intermediate.weight",
                        {d, 1, kIntermediateKernel, kIntermediateKernel}, rng),
        bias_param<T>(prefix + ".intermediate.bias", d)};
  }
  if (spec.dim_global > 0) {
    const int64_t d = spec.dim_global;
    const int k = spec.global_kernel;
    GlobalBranch<T> g;
    if (spec.global_decomposed) {
      g.weight = weight_param<T>(prefix + ".global.weight_v", {d, 1, k, 1}, rng);
      g.weight2 =
          weight_param<T>(prefix + ".global.weight_h", {d, 1, 1, k}, rng);
    } else {
      g.weight = weight_param<T>(prefix + ".global.weight", {d, 1, k, k}, rng);
    }
    g.bias = bias_param<T>(prefix + ".global.bias", d);
    p.global = std::move(g);
  }
  p.pw2_weight = weight_param<T>(prefix + ".pw2.weight", {c, e, 1, 1}, rng);
  p.pw2_bias = bias_param<T>(prefix + ".pw2.bias", c);
  return p;
}

template <typename T>
Var decomposed_global_conv(Tape<T>& t, Var x, Var vertical, Var horizontal,
                           std::optional<Var> bias) {
  const Shape& vs = t.value(vertical).shape();
  const Shape& hs = t.value(horizontal).shape();
  const int64_t k = vs.h;
  if (k % 2 == 0) {
    throw ConfigError(fmt::format(
        "decomposed_global_conv: kernel length {} must be odd", k));
  }
  if (vs.w != 1 || hs.h != 1 || hs.w != k || vs.n != hs.n) {
    throw DimensionError(fmt::format(
        "decomposed_global_conv: expected (C,1,k,1) and (C,1,1,k) kernels, got "
        "{} and {}",
        vs.str(), hs.str()));
  }
  const int64_t dim = t.value(x).shape().c;
  const int kk = static_cast<int>(k);
  Var y = ops::conv2d(t, x, vertical, std::nullopt, depthwise(dim, kk, 1));
  return ops::conv2d(t, y, horizontal, bias, depthwise(dim, 1, kk));
}

template <typename T>
Var mvtm_forward(Tape<T>& t, Var x, MvtmParams<T>& p, const StageSpec& spec) {
  const Shape& xs = t.value(x).shape();
  if (xs.c != spec.channels || p.pw1_weight.value.shape().c != spec.channels) {
    throw DimensionError(fmt::format(
        "mvtm: input axis c is {}, stage spec expects {}, pwconv1 takes {}",
        xs.c, spec.channels, p.pw1_weight.value.shape().c));
  }
  auto check_branch = [&](const char* name, int64_t dim, bool present) {
    if ((dim > 0) != present) {
      throw DimensionError(fmt::format(
          "mvtm: {} group has {} channels but its kernel is {}", name, dim,
          present ? "present" : "absent"));
    }
  };
  check_branch("local", spec.dim_local, p.local.has_value());
  check_branch("intermediate", spec.dim_intermediate,
               p.intermediate.has_value());
  check_branch("global", spec.dim_global, p.global.has_value());

  Var h = ops::conv2d(t, x, t.param(p.pw1_weight), t.param(p.pw1_bias),
                      Conv2dGeometry{});
  h = star_relu_site(t, h, p.act_scale, p.act_bias);
  const std::array<int64_t, 3> sizes = {spec.dim_local, spec.dim_intermediate,
                                        spec.dim_global};
  auto groups = ops::channel_split(t, h, std::span<const int64_t>(sizes));

  std::vector<Var> mixed;
  if (groups[0]) {
    mixed.push_back(ops::conv2d(
        t, *groups[0], t.param(p.local->weight), t.param(p.local->bias),
        depthwise(spec.dim_local, kLocalKernel, kLocalKernel)));
  }
  if (groups[1]) {
    mixed.push_back(ops::conv2d(
        t, *groups[1], t.param(p.intermediate->weight),
        t.param(p.intermediate->bias),
        depthwise(spec.dim_intermediate, kIntermediateKernel,
                  kIntermediateKernel)));
  }
  if (groups[2]) {
    auto& g = *p.global;
    if (g.weight2) {
      mixed.push_back(decomposed_global_conv(t, *groups[2], t.param(g.weight),
                                             t.param(*g.weight2),
                                             t.param(g.bias)));
    } else {
      mixed.push_back(ops::conv2d(
          t, *groups[2], t.param(g.weight), t.param(g.bias),
          depthwise(spec.dim_global, spec.global_kernel, spec.global_kernel)));
    }
  }
  Var cat = ops::channel_concat(t, std::span<const Var>(mixed));
  return ops::conv2d(t, cat, t.param(p.pw2_weight), t.param(p.pw2_bias),
                     Conv2dGeometry{});
}

#define MVFORMER_INSTANTIATE_MIXER(T)                                     \
  template Param<T> scalar_param<T>(const std::string&, double);         \
  template struct MvtmParams<T>;                                          \
  template Var decomposed_global_conv(Tape<T>&, Var, Var, Var,            \
                                      std::optional<Var>);                \
  template Var mvtm_forward(Tape<T>&, Var, MvtmParams<T>&, const StageSpec&);

MVFORMER_INSTANTIATE_MIXER(float)
MVFORMER_INSTANTIATE_MIXER(double)

#undef MVFORMER_INSTANTIATE_MIXER

}  // namespace mvformer

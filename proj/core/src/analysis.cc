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
#include "mvformer/analysis.h"

#include <algorithm>
#include <map>
#include <optional>

#include <fmt/format.h>

namespace mvformer {
namespace {

class CostBuilder {
 public:
  explicit CostBuilder(std::optional<int64_t> hw) : hw_(hw) {}

  CostRow& row(const std::string& name) {
    for (auto& r : rows_) {
      if (r.name == name) return r;
    }
    rows_.push_back(CostRow{name, 0, 0});
    return rows_.back();
  }

  void conv(const std::string& name, int64_t c_in, int64_t c_out, int kh,
            int kw, int64_t groups, int64_t out_h, int64_t out_w, bool bias) {
    CostRow& r = row(name);
    r.params += c_out * (c_in / groups) * kh * kw + (bias ? c_out : 0);
    if (hw_) r.macs += c_out * out_h * out_w * (c_in / groups) * kh * kw;
  }

  void params(const std::string& name, int64_t n) { row(name).params += n; }

  void norm(const std::string& name, BlockNorm kind, int64_t c) {
    params(name, kind == BlockNorm::kMvn ? 5 * c : 2 * c);
  }

  std::vector<CostRow> take() { return std::move(rows_); }

 private:
  std::optional<int64_t> hw_;
  std::vector<CostRow> rows_;
};

CostReport enumerate_costs(const ModelConfig& cfg, std::optional<int64_t> hw) {
  cfg.validate();
  CostBuilder b(hw);
  int64_t in_c = cfg.in_channels;
  for (int s = 1; s <= 4; ++s) {
    const int64_t c = cfg.embed_dims[s - 1];
    const int64_t r = hw ? cfg.stage_resolution(s, *hw) : 0;
    const std::string sp = fmt::format("stage{}", s);
    if (s > 1) b.norm(sp + ".embed.norm", BlockNorm::kMvn, in_c);
    const int k = cfg.embed_kernel(s);
    b.conv(sp + ".embed", in_c, c, k, k, 1, r, r, true);
    const StageSpec spec = cfg.stage_spec(s);
    for (int i = 0; i < cfg.depths[s - 1]; ++i) {
      const std::string bp = fmt::format("{}.block{}", sp, i);
      const std::string mp = bp + ".mixer";
      const int64_t e = spec.expanded();
      b.norm(bp + ".norm1", cfg.block_norm, c);
      b.conv(mp + ".pw1", c, e, 1, 1, 1, r, r, true);
      b.params(mp + ".act", 2);
      if (spec.dim_local > 0) {
        b.conv(mp + ".local", spec.dim_local, spec.dim_local, kLocalKernel,
               kLocalKernel, spec.dim_local, r, r, true);
      }
      if (spec.dim_intermediate > 0) {
        b.conv(mp + ".intermediate", spec.dim_intermediate,
               spec.dim_intermediate, kIntermediateKernel, kIntermediateKernel,
               spec.dim_intermediate, r, r, true);
      }
      if (spec.dim_global > 0) {
        const int64_t d = spec.dim_global;
        const int gk = spec.global_kernel;
        if (spec.global_decomposed) {
          b.conv(mp + ".global", d, d, gk, 1, d, r, r, false);
          b.conv(mp + ".global", d, d, 1, gk, d, r, r, true);
        } else {
          b.conv(mp + ".global", d, d, gk, gk, d, r, r, true);
        }
      }
      b.conv(mp + ".pw2", e, c, 1, 1, 1, r, r, true);
      if (cfg.res_scale[s - 1]) b.params(bp, 2 * c);
      b.norm(bp + ".norm2", cfg.block_norm, c);
      const int64_t hidden = cfg.mlp_ratio * c;
      b.conv(bp + ".mlp.fc1", c, hidden, 1, 1, 1, r, r, true);
      b.params(bp + ".mlp.act", 2);
      b.conv(bp + ".mlp.fc2", hidden, c, 1, 1, 1, r, r, true);
    }
    in_c = c;
  }
  const int64_t one = hw ? 1 : 0;
  b.norm("head.norm", BlockNorm::kLayer, in_c);
  b.conv("head.fc1", in_c, cfg.head_ratio * in_c, 1, 1, 1, one, one, true);
  b.params("head.act", 2);
  b.conv("head.fc2", cfg.head_ratio * in_c, cfg.num_classes, 1, 1, 1, one, one,
         true);

  CostReport rep;
  rep.model = cfg.name;
  rep.input_hw = hw.value_or(0);
  rep.rows = b.take();
  return rep;
}

std::string module_path(const std::string& param_name) {
  const auto dot = param_name.rfind('.');
  return dot == std::string::npos ? param_name : param_name.substr(0, dot);
}

}  // namespace

int64_t CostReport::total_params() const {
  int64_t n = 0;
  for (const auto& r : rows) n += r.params;
  return n;
}

int64_t CostReport::total_macs() const {
  int64_t n = 0;
  for (const auto& r : rows) n += r.macs;
  return n;
}

std::vector<CostRow> CostReport::by_stage() const {
  std::vector<CostRow> out;
  for (const auto& r : rows) {
    const std::string top = r.name.substr(0, r.name.find('.'));
    if (out.empty() || out.back().name != top) out.push_back(CostRow{top, 0, 0});
    out.back().params += r.params;
    out.back().macs += r.macs;
  }
  return out;
}

std::string CostReport::to_csv() const {
  std::string s = "name,params,macs\n";
  for (const auto& r : rows) {
    s += fmt::format("{},{},{}\n", r.name, r.params, r.macs);
  }
  s += fmt::format("total,{},{}\n", total_params(), total_macs());
  return s;
}

CostReport count_params(const ModelConfig& cfg) {
  return enumerate_costs(cfg, std::nullopt);
}

CostReport count_macs(const ModelConfig& cfg, int64_t input_hw) {
  return enumerate_costs(cfg, input_hw);
}

template <typename T>
CostReport count_params(const Model<T>& model) {
  CostReport rep;
  rep.model = model.config.name;
  for (const Param<T>* p : model.parameters()) {
    const std::string path = module_path(p->name);
    auto it = std::find_if(rep.rows.begin(), rep.rows.end(),
                           [&](const CostRow& r) { return r.name == path; });
    if (it == rep.rows.end()) it = rep.rows.insert(it, CostRow{path, 0, 0});
    it->params += p->value.numel();
  }
  return rep;
}

std::string AlphaProfile::to_csv() const {
  std::string s = "stage,block,site,alpha_bn,alpha_ln,alpha_in\n";
  for (const auto& r : rows) {
    s += fmt::format("{},{},{},{},{},{}\n", r.stage, r.block, r.site,
                     r.alpha_bn, r.alpha_ln, r.alpha_in);
  }
  return s;
}

template <typename T>
AlphaProfile dump_alpha_profile(const Model<T>& model) {
  auto channel_mean = [](const Param<T>& p) {
    double acc = 0;
    for (T v : p.value.vec()) acc += v;
    return acc / static_cast<double>(p.value.numel());
  };
  AlphaProfile prof;
  for (int s = 0; s < 4; ++s) {
    const auto& blocks = model.stages[s].blocks;
    for (size_t b = 0; b < blocks.size(); ++b) {
      const std::pair<const BlockNormState<T>*, const char*> sites[] = {
          {&blocks[b].norm1, "mixer"}, {&blocks[b].norm2, "mlp"}};
      for (const auto& [norm, site] : sites) {
        const auto* m = std::get_if<MvnState<T>>(norm);
        if (m == nullptr) continue;
        prof.rows.push_back(AlphaRow{s + 1, static_cast<int>(b), site,
                                     channel_mean(m->alpha_bn),
                                     channel_mean(m->alpha_ln),
                                     channel_mean(m->alpha_in)});
      }
    }
  }
  if (prof.rows.empty()) {
    throw ConfigError(fmt::format(
        "model '{}' has no multi-view normalization sites (block norm is {})",
        model.config.name, to_string(model.config.block_norm)));
  }
  return prof;
}

template <typename T>
NormalizedImages<T> normalize_image_grid(const Tensor<T>& images,
                                         const std::array<double, 3>& weights) {
  const Shape& s = images.shape();
  if (s.n < 2) {
    throw DegenerateError(fmt::format(
        "normalize_image_grid: batch normalization needs at least 2 images, "
        "got {}",
        s.n));
  }
  Tape<T> t;
  t.set_grad_enabled(false);
  Var x = t.constant(images);
  const T eps = static_cast<T>(kNormEps);
  Buffer<T> run_mean{"scratch.run_mean", Tensor<T>(Shape{1, s.c, 1, 1})};
  Buffer<T> run_var{"scratch.run_var", Tensor<T>(Shape{1, s.c, 1, 1}, T(1))};
  NormalizedImages<T> out;
  out.bn = t.value(batch_norm(t, x, run_mean, run_var, eps,
                              static_cast<T>(kBatchNormMomentum), Mode::kTrain));
  out.ln = t.value(layer_norm(t, x, eps));
  out.in = t.value(instance_norm(t, x, eps));
  const T wb = static_cast<T>(weights[0]);
  const T wl = static_cast<T>(weights[1]);
  const T wi = static_cast<T>(weights[2]);
  out.composite = Tensor<T>(s);
  for (int64_t i = 0; i < images.numel(); ++i) {
    out.composite[i] = wb * out.bn[i] + wl * out.ln[i] + wi * out.in[i];
  }
  return out;
}

template <typename T>
Tensor<T> rescale_per_image(const Tensor<T>& x) {
  const Shape& s = x.shape();
  const int64_t per = s.c * s.h * s.w;
  Tensor<T> out(s);
  for (int64_t n = 0; n < s.n; ++n) {
    const T* p = x.data() + n * per;
    const auto [lo, hi] = std::minmax_element(p, p + per);
    const T range = *hi - *lo;
    T* q = out.data() + n * per;
    for (int64_t k = 0; k < per; ++k) {
      q[k] = range > T(0) ? (p[k] - *lo) / range : T(0);
    }
  }
  return out;
}

#define MVFORMER_INSTANTIATE_ANALYSIS(T)                                  \
  template CostReport count_params(const Model<T>&);                      \
  template AlphaProfile dump_alpha_profile(const Model<T>&);              \
  template NormalizedImages<T> normalize_image_grid(                      \
      const Tensor<T>&, const std::array<double, 3>&);                    \
  template Tensor<T> rescale_per_image(const Tensor<T>&);

MVFORMER_INSTANTIATE_ANALYSIS(float)
MVFORMER_INSTANTIATE_ANALYSIS(double)

#undef MVFORMER_INSTANTIATE_ANALYSIS

}  // namespace mvformer

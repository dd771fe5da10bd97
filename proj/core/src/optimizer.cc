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
#include "mvformer/optimizer.h"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace mvformer {

template <typename T>
OptimState<T> OptimState<T>::init(std::span<Param<T>* const> params,
                                  const AdamWConfig& cfg) {
  OptimState st;
  st.config = cfg;
  for (const Param<T>* p : params) {
    st.names.push_back(p->name);
    st.m.emplace_back(p->value.shape());
    st.v.emplace_back(p->value.shape());
  }
  return st;
}

template <typename T>
void adamw_step(std::span<Param<T>* const> params, OptimState<T>& st,
                double lr) {
  if (params.size() != st.m.size()) {
    throw DimensionError(fmt::format(
        "adamw: {} parameters but optimizer state holds {}", params.size(),
        st.m.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const Param<T>& p = *params[i];
    if (p.grad.shape() != p.value.shape() || st.m[i].shape() != p.value.shape()) {
      throw DimensionError("adamw: shape mismatch for " + p.name);
    }
    if (!p.grad.all_finite()) {
      throw NumericError("adamw: non-finite gradient in " + p.name);
    }
  }
  const AdamWConfig& c = st.config;
  ++st.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = *params[i];
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* m = st.m[i].data();
    T* v = st.v[i].data();
    const double shrink = p.decay ? 1.0 - lr * c.weight_decay : 1.0;
    for (int64_t k = 0; k < p.value.numel(); ++k) {
      const double gk = g[k];
      const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
      const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double update = (mk / bc1) / (std::sqrt(vk / bc2) + c.eps);
      w[k] = static_cast<T>(w[k] * shrink - lr * update);
    }
  }
}

double cosine_lr(int64_t step, int64_t total, int64_t warmup, double base_lr) {
  if (warmup < 0 || warmup >= total) {
    throw ConfigError(fmt::format(
        "cosine_lr: warmup {} must be in [0, total {})", warmup, total));
  }
  if (step < 0 || step > total) {
    throw IndexError(fmt::format("cosine_lr: step {} outside [0, {}]", step,
                                 total));
  }
  if (step < warmup) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(total - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template struct OptimState<float>;
template struct OptimState<double>;
template void adamw_step(std::span<Param<float>* const>, OptimState<float>&,
                         double);
template void adamw_step(std::span<Param<double>* const>, OptimState<double>&,
                         double);

}  // namespace mvformer

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
#include "mvformer/normalization.h"

#include <fmt/format.h>

namespace mvformer {

std::string_view to_string(NormKind kind) {
  switch (kind) {
    case NormKind::kBatch: return "bn";
    case NormKind::kLayer: return "ln";
    case NormKind::kInstance: return "in";
  }
  return "?";
}

namespace {

template <typename T>
Param<T> channel_param(const std::string& name, int64_t channels, T fill) {
  return Param<T>(name, Tensor<T>(Shape{1, channels, 1, 1}, fill), false);
}

template <typename T>
Buffer<T> channel_buffer(const std::string& name, int64_t channels, T fill) {
  return Buffer<T>{name, Tensor<T>(Shape{1, channels, 1, 1}, fill)};
}

template <typename T>
void check_channels(const char* op, const Tensor<T>& x, int64_t channels) {
  if (x.shape().c != channels) {
    throw DimensionError(fmt::format(
        "{}: input axis c is {} but the state holds {} channels", op,
        x.shape().c, channels));
  }
}

template <typename T>
Var batch_norm_impl(Tape<T>& t, Var x, Buffer<T>& run_mean, Buffer<T>& run_var,
                    T eps, T momentum, Mode mode) {
  const Shape& s = t.value(x).shape();
  check_channels("batch_norm", t.value(x), run_mean.value.numel());
  if (mode == Mode::kEval) {
    return ops::normalize_frozen(t, x, run_mean.value, run_var.value, eps);
  }
  if (s.n * s.h * s.w < 2) {
    throw DegenerateError(fmt::format(
        "batch_norm: training mode needs n*h*w >= 2 per channel, input is {}",
        s.str()));
  }
  Moments<T> stats;
  Var y = ops::normalize(t, x, AxisSet{Axis::kN, Axis::kH, Axis::kW}, eps,
                         &stats);
  for (int64_t c = 0; c < s.c; ++c) {
    T& rm = run_mean.value[c];
    T& rv = run_var.value[c];
    rm = (T(1) - momentum) * rm + momentum * stats.mean[c];
    rv = (T(1) - momentum) * rv + momentum * stats.var[c];
  }
  return y;
}

}  // namespace

template <typename T>
PlainNormState<T> PlainNormState<T>::make(NormKind kind, int64_t channels,
                                          const std::string& prefix) {
  PlainNormState st;
  st.kind = kind;
  st.gamma = channel_param<T>(prefix + ".gamma", channels, T(1));
  st.beta = channel_param<T>(prefix + ".beta", channels, T(0));
  if (kind == NormKind::kBatch) {
    st.run_mean = channel_buffer<T>(prefix + ".run_mean", channels, T(0));
    st.run_var = channel_buffer<T>(prefix + ".run_var", channels, T(1));
  }
  return st;
}

template <typename T>
MvnState<T> MvnState<T>::make(int64_t channels, const std::string& prefix) {
  MvnState st;
  st.alpha_bn = channel_param<T>(prefix + ".alpha_bn", channels, T(1));
  st.alpha_ln = channel_param<T>(prefix + ".alpha_ln", channels, T(1));
  st.alpha_in = channel_param<T>(prefix + ".alpha_in", channels, T(1));
  st.gamma = channel_param<T>(prefix + ".gamma", channels, T(1));
  st.beta = channel_param<T>(prefix + ".beta", channels, T(0));
  st.run_mean = channel_buffer<T>(prefix + ".run_mean", channels, T(0));
  st.run_var = channel_buffer<T>(prefix + ".run_var", channels, T(1));
  return st;
}

template <typename T>
Var batch_norm(Tape<T>& t, Var x, Buffer<T>& run_mean, Buffer<T>& run_var,
               T eps, T momentum, Mode mode) {
  return batch_norm_impl(t, x, run_mean, run_var, eps, momentum, mode);
}

template <typename T>
Var layer_norm(Tape<T>& t, Var x, T eps) {
  const Shape& s = t.value(x).shape();
  if (s.c < 2) {
    throw DegenerateError("layer_norm: needs at least 2 channels, input is " +
                          s.str());
  }
  return ops::normalize(t, x, AxisSet{Axis::kC}, eps);
}

template <typename T>
Var instance_norm(Tape<T>& t, Var x, T eps) {
  const Shape& s = t.value(x).shape();
  if (s.h * s.w < 2) {
    throw DegenerateError(
        "instance_norm: needs h*w >= 2 per plane, input is " + s.str());
  }
  return ops::normalize(t, x, AxisSet{Axis::kH, Axis::kW}, eps);
}

template <typename T>
Var apply_affine(Tape<T>& t, Var x, Var gamma, Var beta) {
  const int64_t c = t.value(x).shape().c;
  if (t.value(gamma).numel() != c || t.value(beta).numel() != c) {
    throw DimensionError(fmt::format(
        "apply_affine: gamma/beta lengths {}/{} but input axis c is {}",
        t.value(gamma).numel(), t.value(beta).numel(), c));
  }
  return ops::add(t, ops::mul(t, x, gamma), beta);
}

template <typename T>
Var plain_norm(Tape<T>& t, Var x, PlainNormState<T>& st, Mode mode) {
  check_channels("plain_norm", t.value(x), st.channels());
  Var y;
  switch (st.kind) {
    case NormKind::kBatch:
      y = batch_norm_impl(t, x, st.run_mean, st.run_var, st.eps, st.momentum,
                          mode);
      break;
    case NormKind::kLayer:
      y = layer_norm(t, x, st.eps);
      break;
    case NormKind::kInstance:
      y = instance_norm(t, x, st.eps);
      break;
  }
  return apply_affine(t, y, t.param(st.gamma), t.param(st.beta));
}

template <typename T>
Var mvn(Tape<T>& t, Var x, MvnState<T>& st, Mode mode) {
  check_channels("mvn", t.value(x), st.channels());
  Var x_bn = batch_norm_impl(t, x, st.run_mean, st.run_var, st.eps,
                             st.momentum, mode);
  Var x_ln = layer_norm(t, x, st.eps);
  Var x_in = ops::normalize(t, x, AxisSet{Axis::kH, Axis::kW}, st.eps);
  Var mixed = ops::add(t, ops::mul(t, x_bn, t.param(st.alpha_bn)),
                       ops::mul(t, x_ln, t.param(st.alpha_ln)));
  mixed = ops::add(t, mixed, ops::mul(t, x_in, t.param(st.alpha_in)));
  return apply_affine(t, mixed, t.param(st.gamma), t.param(st.beta));
}

#define MVFORMER_INSTANTIATE_NORM(T)                                         \
  template struct PlainNormState<T>;                                        \
  template struct MvnState<T>;                                              \
  template Var batch_norm(Tape<T>&, Var, Buffer<T>&, Buffer<T>&, T, T, Mode); \
  template Var layer_norm(Tape<T>&, Var, T);                                \
  template Var instance_norm(Tape<T>&, Var, T);                             \
  template Var apply_affine(Tape<T>&, Var, Var, Var);                       \
  template Var plain_norm(Tape<T>&, Var, PlainNormState<T>&, Mode);         \
  template Var mvn(Tape<T>&, Var, MvnState<T>&, Mode);

MVFORMER_INSTANTIATE_NORM(float)
MVFORMER_INSTANTIATE_NORM(double)

#undef MVFORMER_INSTANTIATE_NORM

}  // namespace mvformer

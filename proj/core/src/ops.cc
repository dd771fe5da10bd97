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
#include "mvformer/ops.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace mvformer {
namespace {

// Output indices o with 0 <= o * stride - pad + k < in form [lo, hi).
inline void valid_range(int64_t out, int64_t in, int stride, int pad, int k,
                        int64_t& lo, int64_t& hi) {
  const int64_t a = pad - k;
  lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  const int64_t b = in - 1 + pad - k;
  hi = b < 0 ? 0 : std::min<int64_t>(out, b / stride + 1);
  if (lo > hi) lo = hi;
}

enum class Broadcast { kSame, kChannel };

Broadcast broadcast_kind(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return Broadcast::kSame;
  if (b.n == 1 && b.h == 1 && b.w == 1 && b.c == a.c) return Broadcast::kChannel;
  throw BroadcastError(fmt::format(
      "{}: operand shapes {} and {} are neither equal nor (n,c,h,w) x (1,c,1,1)",
      op, a.str(), b.str()));
}

Shape reduced_shape(const Shape& s, AxisSet reduce) {
  return Shape{reduce.contains(Axis::kN) ? 1 : s.n,
               reduce.contains(Axis::kC) ? 1 : s.c,
               reduce.contains(Axis::kH) ? 1 : s.h,
               reduce.contains(Axis::kW) ? 1 : s.w};
}

// Multipliers mapping (n, c, h, w) to the offset of its group in a tensor of
// the reduced shape.
struct GroupIndexer {
  int64_t mn, mc, mh, mw;
  GroupIndexer(const Shape& ms, AxisSet reduce)
      : mn(reduce.contains(Axis::kN) ? 0 : ms.c * ms.h * ms.w),
        mc(reduce.contains(Axis::kC) ? 0 : ms.h * ms.w),
        mh(reduce.contains(Axis::kH) ? 0 : ms.w),
        mw(reduce.contains(Axis::kW) ? 0 : 1) {}
};

template <typename T, typename F>
void for_each_grouped(const Shape& s, const GroupIndexer& g, F&& f) {
  int64_t i = 0;
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t h = 0; h < s.h; ++h)
        for (int64_t w = 0; w < s.w; ++w, ++i)
          f(i, n * g.mn + c * g.mc + h * g.mh + w * g.mw);
}

struct GroupStats {
  Shape shape;
  int64_t count = 0;
  std::vector<double> mean;
  std::vector<double> var;
};

template <typename T>
GroupStats group_stats(const Tensor<T>& x, AxisSet reduce) {
  if (reduce.empty()) {
    throw DegenerateError("moments: reduction axis set is empty");
  }
  GroupStats st;
  st.shape = reduced_shape(x.shape(), reduce);
  const int64_t groups = st.shape.numel();
  st.count = groups == 0 ? 0 : x.numel() / groups;
  if (st.count == 0) {
    throw DegenerateError("moments: reduced slice of " + x.shape().str() +
                          " is empty");
  }
  GroupIndexer gi(st.shape, reduce);
  st.mean.assign(static_cast<size_t>(groups), 0.0);
  st.var.assign(static_cast<size_t>(groups), 0.0);
  const T* xd = x.data();
  for_each_grouped<T>(x.shape(), gi, [&](int64_t i, int64_t g) {
    st.mean[g] += static_cast<double>(xd[i]);
  });
  for (double& m : st.mean) m /= static_cast<double>(st.count);
  for_each_grouped<T>(x.shape(), gi, [&](int64_t i, int64_t g) {
    const double d = static_cast<double>(xd[i]) - st.mean[g];
    st.var[g] += d * d;
  });
  for (double& v : st.var) v /= static_cast<double>(st.count);
  return st;
}

template <typename T>
void conv_forward(const Tensor<T>& x, const Tensor<T>& w, const T* bias,
                  const Conv2dGeometry& g, Tensor<T>& y) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  const Shape& ys = y.shape();
  const int64_t icpg = ws.c;
  const int64_t ocpg = ws.n / g.groups;
  const int64_t out_plane = ys.h * ys.w;
  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t oc = 0; oc < ys.c; ++oc) {
      T* yp = y.data() + (n * ys.c + oc) * out_plane;
      std::fill(yp, yp + out_plane, bias ? bias[oc] : T(0));
      const int64_t grp = oc / ocpg;
      for (int64_t icg = 0; icg < icpg; ++icg) {
        const int64_t ic = grp * icpg + icg;
        const T* xp = x.data() + (n * xs.c + ic) * xs.h * xs.w;
        const T* wp = w.data() + (oc * icpg + icg) * ws.h * ws.w;
        for (int64_t ky = 0; ky < ws.h; ++ky) {
          int64_t oy0, oy1;
          valid_range(ys.h, xs.h, g.stride_h, g.pad_h, static_cast<int>(ky),
                      oy0, oy1);
          for (int64_t kx = 0; kx < ws.w; ++kx) {
            int64_t ox0, ox1;
            valid_range(ys.w, xs.w, g.stride_w, g.pad_w, static_cast<int>(kx),
                        ox0, ox1);
            const T wv = wp[ky * ws.w + kx];
            for (int64_t oy = oy0; oy < oy1; ++oy) {
              const T* xrow = xp + (oy * g.stride_h - g.pad_h + ky) * xs.w +
                              (kx - g.pad_w);
              T* yrow = yp + oy * ys.w;
              if (g.stride_w == 1) {
                for (int64_t ox = ox0; ox < ox1; ++ox) yrow[ox] += wv * xrow[ox];
              } else {
                for (int64_t ox = ox0; ox < ox1; ++ox)
                  yrow[ox] += wv * xrow[ox * g.stride_w];
              }
            }
          }
        }
      }
    }
  }
}

// Accumulates input, weight and bias gradients. Null targets are skipped.
template <typename T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& w,
                   const Conv2dGeometry& g, const Tensor<T>& dy, T* dx, T* dw,
                   T* db) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  const Shape& ys = dy.shape();
  const int64_t icpg = ws.c;
  const int64_t ocpg = ws.n / g.groups;
  const int64_t out_plane = ys.h * ys.w;
  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t oc = 0; oc < ys.c; ++oc) {
      const T* gp = dy.data() + (n * ys.c + oc) * out_plane;
      if (db) {
        T acc = 0;
        for (int64_t i = 0; i < out_plane; ++i) acc += gp[i];
        db[oc] += acc;
      }
      const int64_t grp = oc / ocpg;
      for (int64_t icg = 0; icg < icpg; ++icg) {
        const int64_t ic = grp * icpg + icg;
        const int64_t xoff = (n * xs.c + ic) * xs.h * xs.w;
        const T* xp = x.data() + xoff;
        const int64_t woff = (oc * icpg + icg) * ws.h * ws.w;
        for (int64_t ky = 0; ky < ws.h; ++ky) {
          int64_t oy0, oy1;
          valid_range(ys.h, xs.h, g.stride_h, g.pad_h, static_cast<int>(ky),
                      oy0, oy1);
          for (int64_t kx = 0; kx < ws.w; ++kx) {
            int64_t ox0, ox1;
            valid_range(ys.w, xs.w, g.stride_w, g.pad_w, static_cast<int>(kx),
                        ox0, ox1);
            const T wv = w.data()[woff + ky * ws.w + kx];
            T wacc = 0;
            for (int64_t oy = oy0; oy < oy1; ++oy) {
              const int64_t row =
                  (oy * g.stride_h - g.pad_h + ky) * xs.w + (kx - g.pad_w);
              const T* grow = gp + oy * ys.w;
              for (int64_t ox = ox0; ox < ox1; ++ox) {
                const int64_t xi = row + ox * g.stride_w;
                if (dx) dx[xoff + xi] += wv * grow[ox];
                wacc += xp[xi] * grow[ox];
              }
            }
            if (dw) dw[woff + ky * ws.w + kx] += wacc;
          }
        }
      }
    }
  }
}

template <typename T>
void check_channel_sizes(const Shape& s, std::span<const int64_t> sizes) {
  int64_t total = 0;
  for (int64_t sz : sizes) {
    if (sz < 0) throw SplitError("channel_split: negative group size");
    total += sz;
  }
  if (total != s.c) {
    throw SplitError(fmt::format(
        "channel_split: group sizes sum to {} but input has {} channels",
        total, s.c));
  }
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int64_t begin, int64_t count) {
  const Shape& s = x.shape();
  Tensor<T> out(Shape{s.n, count, s.h, s.w});
  const int64_t plane = s.h * s.w;
  for (int64_t n = 0; n < s.n; ++n) {
    const T* src = x.data() + (n * s.c + begin) * plane;
    std::copy(src, src + count * plane, out.data() + n * count * plane);
  }
  return out;
}

}  // namespace

Shape conv2d_output_shape(const Shape& x, const Shape& w,
                          const Conv2dGeometry& g) {
  if (g.groups < 1 || g.stride_h < 1 || g.stride_w < 1 || g.pad_h < 0 ||
      g.pad_w < 0) {
    throw DimensionError(fmt::format(
        "conv2d: invalid geometry stride=({}, {}) pad=({}, {}) groups={}",
        g.stride_h, g.stride_w, g.pad_h, g.pad_w, g.groups));
  }
  if (x.c % g.groups != 0) {
    throw DimensionError(
        fmt::format("conv2d: input channels (axis c) {} not divisible by "
                    "groups {}",
                    x.c, g.groups));
  }
  if (w.c * g.groups != x.c) {
    throw DimensionError(fmt::format(
        "conv2d: weight axis c_in/groups is {} but input axis c is {} with "
        "groups {}",
        w.c, x.c, g.groups));
  }
  if (w.n % g.groups != 0) {
    throw DimensionError(fmt::format(
        "conv2d: weight axis c_out {} not divisible by groups {}", w.n,
        g.groups));
  }
  if (w.h < 1 || w.w < 1) {
    throw DimensionError("conv2d: kernel axes kh, kw must be >= 1, got " +
                         w.str());
  }
  const int64_t eh = x.h + 2 * g.pad_h - w.h;
  const int64_t ew = x.w + 2 * g.pad_w - w.w;
  if (eh < 0 || ew < 0) {
    throw DimensionError(fmt::format(
        "conv2d: padded input (axes h, w) {}x{} smaller than kernel {}x{}",
        x.h + 2 * g.pad_h, x.w + 2 * g.pad_w, w.h, w.w));
  }
  return Shape{x.n, w.n, eh / g.stride_h + 1, ew / g.stride_w + 1};
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 const Conv2dGeometry& g) {
  Tensor<T> y(conv2d_output_shape(x.shape(), w.shape(), g));
  if (bias && bias->numel() != w.shape().n) {
    throw DimensionError(fmt::format(
        "conv2d: bias has {} entries but weight axis c_out is {}",
        bias->numel(), w.shape().n));
  }
  conv_forward(x, w, bias ? bias->data() : nullptr, g, y);
  return y;
}

template <typename T>
Moments<T> moments(const Tensor<T>& x, AxisSet reduce) {
  GroupStats st = group_stats(x, reduce);
  Moments<T> m{Tensor<T>(st.shape), Tensor<T>(st.shape)};
  for (size_t i = 0; i < st.mean.size(); ++i) {
    m.mean[static_cast<int64_t>(i)] = static_cast<T>(st.mean[i]);
    m.var[static_cast<int64_t>(i)] = static_cast<T>(st.var[i]);
  }
  return m;
}

template <typename T>
std::vector<Tensor<T>> channel_split(const Tensor<T>& x,
                                     std::span<const int64_t> sizes) {
  check_channel_sizes<T>(x.shape(), sizes);
  std::vector<Tensor<T>> out;
  int64_t begin = 0;
  for (int64_t sz : sizes) {
    out.push_back(slice_channels(x, begin, sz));
    begin += sz;
  }
  return out;
}

template <typename T>
Tensor<T> channel_concat(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ConcatError("channel_concat: no inputs");
  const Shape& s0 = parts.front().shape();
  int64_t total_c = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.c == 0) continue;
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw ConcatError(fmt::format(
          "channel_concat: part {} disagrees with {} on axes (n, h, w)",
          s.str(), s0.str()));
    }
    total_c += s.c;
  }
  Tensor<T> out(Shape{s0.n, total_c, s0.h, s0.w});
  const int64_t plane = s0.h * s0.w;
  int64_t c0 = 0;
  for (const auto& p : parts) {
    const int64_t pc = p.shape().c;
    if (pc == 0) continue;
    for (int64_t n = 0; n < s0.n; ++n) {
      const T* src = p.data() + n * pc * plane;
      std::copy(src, src + pc * plane,
                out.data() + (n * total_c + c0) * plane);
    }
    c0 += pc;
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.h < 1 || s.w < 1) {
    throw DimensionError("global_avg_pool: empty spatial axes in " + s.str());
  }
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  const int64_t plane = s.h * s.w;
  for (int64_t i = 0; i < s.n * s.c; ++i) {
    double acc = 0;
    const T* p = x.data() + i * plane;
    for (int64_t k = 0; k < plane; ++k) acc += p[k];
    out[i] = static_cast<T>(acc / static_cast<double>(plane));
  }
  return out;
}

namespace {

template <typename T, typename F>
Tensor<T> broadcast_binary(const char* name, const Tensor<T>& a,
                           const Tensor<T>& b, F f) {
  Broadcast kind = broadcast_kind(name, a.shape(), b.shape());
  Tensor<T> out(a.shape());
  if (kind == Broadcast::kSame) {
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  const Shape& s = a.shape();
  const int64_t plane = s.h * s.w;
  int64_t i = 0;
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c) {
      const T bv = b[c];
      for (int64_t k = 0; k < plane; ++k, ++i) out[i] = f(a[i], bv);
    }
  return out;
}

// Sums a full-shape gradient down to a (1, C, 1, 1) channel vector.
template <typename T>
void reduce_to_channels(const Tensor<T>& g, Tensor<T>& dst) {
  const Shape& s = g.shape();
  const int64_t plane = s.h * s.w;
  for (int64_t c = 0; c < s.c; ++c) {
    T acc = 0;
    for (int64_t n = 0; n < s.n; ++n) {
      const T* p = g.data() + (n * s.c + c) * plane;
      for (int64_t k = 0; k < plane; ++k) acc += p[k];
    }
    dst[c] += acc;
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return broadcast_binary("add", a, b, [](T x, T y) { return x + y; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return broadcast_binary("sub", a, b, [](T x, T y) { return x - y; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return broadcast_binary("mul", a, b, [](T x, T y) { return x * y; });
}

namespace ops {

template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, std::optional<Var> bias,
           const Conv2dGeometry& g) {
  const Tensor<T>* bt = bias ? &t.value(*bias) : nullptr;
  Tensor<T> y = mvformer::conv2d(t.value(x), t.value(w), bt, g);
  std::vector<Var> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return t.record(std::move(y), inputs, [x, w, bias, g](Tape<T>& t, Var out) {
    const Tensor<T>& dy = t.grad(out);
    T* dx = t.requires_grad(x) ? t.grad_buffer(x).data() : nullptr;
    T* dw = t.requires_grad(w) ? t.grad_buffer(w).data() : nullptr;
    T* db = bias && t.requires_grad(*bias) ? t.grad_buffer(*bias).data()
                                           : nullptr;
    conv_backward(t.value(x), t.value(w), g, dy, dx, dw, db);
  });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  Broadcast kind = broadcast_kind("add", t.value(a).shape(), t.value(b).shape());
  Tensor<T> y = mvformer::add(t.value(a), t.value(b));
  const Var inputs[] = {a, b};
  return t.record(std::move(y), inputs, [a, b, kind](Tape<T>& t, Var out) {
    const Tensor<T>& dy = t.grad(out);
    if (t.requires_grad(a)) {
      auto& da = t.grad_buffer(a);
      for (int64_t i = 0; i < dy.numel(); ++i) da[i] += dy[i];
    }
    if (t.requires_grad(b)) {
      auto& db = t.grad_buffer(b);
      if (kind == Broadcast::kSame) {
        for (int64_t i = 0; i < dy.numel(); ++i) db[i] += dy[i];
      } else {
        reduce_to_channels(dy, db);
      }
    }
  });
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
  Broadcast kind = broadcast_kind("mul", t.value(a).shape(), t.value(b).shape());
  Tensor<T> y = mvformer::mul(t.value(a), t.value(b));
  const Var inputs[] = {a, b};
  return t.record(std::move(y), inputs, [a, b, kind](Tape<T>& t, Var out) {
    const Tensor<T>& dy = t.grad(out);
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor<T> g = mvformer::mul(dy, bv);
      auto& da = t.grad_buffer(a);
      for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
    }
    if (t.requires_grad(b)) {
      auto& db = t.grad_buffer(b);
      if (kind == Broadcast::kSame) {
        for (int64_t i = 0; i < dy.numel(); ++i) db[i] += dy[i] * av[i];
      } else {
        reduce_to_channels(mvformer::mul(dy, av), db);
      }
    }
  });
}

template <typename T>
Var scale(Tape<T>& t, Var x, T factor) {
  Tensor<T> y = t.value(x);
  for (T& v : y.vec()) v *= factor;
  const Var inputs[] = {x};
  return t.record(std::move(y), inputs, [x, factor](Tape<T>& t, Var out) {
    const Tensor<T>& dy = t.grad(out);
    auto& dx = t.grad_buffer(x);
    for (int64_t i = 0; i < dy.numel(); ++i) dx[i] += dy[i] * factor;
  });
}

template <typename T>
Var sum(Tape<T>& t, Var x) {
  double acc = 0;
  for (T v : t.value(x).vec()) acc += v;
  const Var inputs[] = {x};
  return t.record(Tensor<T>::scalar(static_cast<T>(acc)), inputs,
                  [x](Tape<T>& t, Var out) {
                    const T g = t.grad(out)[0];
                    for (T& v : t.grad_buffer(x).vec()) v += g;
                  });
}

template <typename T>
Var normalize(Tape<T>& t, Var x, AxisSet reduce, T eps, Moments<T>* stats) {
  const Tensor<T>& xv = t.value(x);
  GroupStats st = group_stats(xv, reduce);
  std::vector<double> inv(st.var.size());
  for (size_t g = 0; g < inv.size(); ++g) {
    inv[g] = 1.0 / std::sqrt(st.var[g] + static_cast<double>(eps));
  }
  if (stats) {
    stats->mean = Tensor<T>(st.shape);
    stats->var = Tensor<T>(st.shape);
    for (size_t g = 0; g < inv.size(); ++g) {
      stats->mean[static_cast<int64_t>(g)] = static_cast<T>(st.mean[g]);
      stats->var[static_cast<int64_t>(g)] = static_cast<T>(st.var[g]);
    }
  }
  Tensor<T> y(xv.shape());
  GroupIndexer gi(st.shape, reduce);
  for_each_grouped<T>(xv.shape(), gi, [&](int64_t i, int64_t g) {
    y[i] = static_cast<T>((static_cast<double>(xv[i]) - st.mean[g]) * inv[g]);
  });
  const Var inputs[] = {x};
  return t.record(
      std::move(y), inputs,
      [x, reduce, gshape = st.shape, count = st.count,
       inv = std::move(inv)](Tape<T>& t, Var out) {
        const Tensor<T>& dy = t.grad(out);
        const Tensor<T>& xhat = t.value(out);
        GroupIndexer gi(gshape, reduce);
        std::vector<double> sum_dy(inv.size(), 0.0), sum_dy_xhat(inv.size(), 0.0);
        for_each_grouped<T>(dy.shape(), gi, [&](int64_t i, int64_t g) {
          sum_dy[g] += dy[i];
          sum_dy_xhat[g] += static_cast<double>(dy[i]) * xhat[i];
        });
        const double m = static_cast<double>(count);
        auto& dx = t.grad_buffer(x);
        for_each_grouped<T>(dy.shape(), gi, [&](int64_t i, int64_t g) {
          dx[i] += static_cast<T>(inv[g] * (dy[i] - sum_dy[g] / m -
                                            xhat[i] * sum_dy_xhat[g] / m));
        });
      });
}

template <typename T>
Var normalize_frozen(Tape<T>& t, Var x, const Tensor<T>& mean,
                     const Tensor<T>& var, T eps) {
  const Tensor<T>& xv = t.value(x);
  const Shape& s = xv.shape();
  if (mean.numel() != s.c || var.numel() != s.c) {
    throw DimensionError(fmt::format(
        "normalize_frozen: statistics length {} / {} but axis c is {}",
        mean.numel(), var.numel(), s.c));
  }
  std::vector<double> inv(static_cast<size_t>(s.c));
  for (int64_t c = 0; c < s.c; ++c) {
    inv[c] = 1.0 / std::sqrt(static_cast<double>(var[c]) +
                             static_cast<double>(eps));
  }
  Tensor<T> y(s);
  const int64_t plane = s.h * s.w;
  int64_t i = 0;
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c) {
      const double mu = mean[c];
      for (int64_t k = 0; k < plane; ++k, ++i) {
        y[i] = static_cast<T>((static_cast<double>(xv[i]) - mu) * inv[c]);
      }
    }
  const Var inputs[] = {x};
  return t.record(std::move(y), inputs,
                  [x, inv = std::move(inv)](Tape<T>& t, Var out) {
                    const Tensor<T>& dy = t.grad(out);
                    const Shape& s = dy.shape();
                    auto& dx = t.grad_buffer(x);
                    const int64_t plane = s.h * s.w;
                    int64_t i = 0;
                    for (int64_t n = 0; n < s.n; ++n)
                      for (int64_t c = 0; c < s.c; ++c)
                        for (int64_t k = 0; k < plane; ++k, ++i)
                          dx[i] += static_cast<T>(dy[i] * inv[c]);
                  });
}

template <typename T>
Var star_relu(Tape<T>& t, Var x, Var s, Var b) {
  const Tensor<T>& xv = t.value(x);
  const T sv = t.value(s).item();
  const T bv = t.value(b).item();
  Tensor<T> y(xv.shape());
  for (int64_t i = 0; i < xv.numel(); ++i) {
    const T r = xv[i] > T(0) ? xv[i] : T(0);
    y[i] = sv * r * r + bv;
  }
  const Var inputs[] = {x, s, b};
  return t.record(std::move(y), inputs, [x, s, b](Tape<T>& t, Var out) {
    const Tensor<T>& dy = t.grad(out);
    const Tensor<T>& xv = t.value(x);
    const T sv = t.value(s).item();
    double ds = 0, db = 0;
    const bool need_x = t.requires_grad(x);
    T* dx = need_x ? t.grad_buffer(x).data() : nullptr;
    for (int64_t i = 0; i < xv.numel(); ++i) {
      const T r = xv[i] > T(0) ? xv[i] : T(0);
      ds += static_cast<double>(dy[i]) * r * r;
      db += dy[i];
      if (need_x) dx[i] += dy[i] * T(2) * sv * r;
    }
    if (t.requires_grad(s)) t.grad_buffer(s)[0] += static_cast<T>(ds);
    if (t.requires_grad(b)) t.grad_buffer(b)[0] += static_cast<T>(db);
  });
}

template <typename T>
std::vector<std::optional<Var>> channel_split(Tape<T>& t, Var x,
                                              std::span<const int64_t> sizes) {
  check_channel_sizes<T>(t.value(x).shape(), sizes);
  std::vector<std::optional<Var>> out;
  int64_t begin = 0;
  for (int64_t sz : sizes) {
    if (sz == 0) {
      out.emplace_back(std::nullopt);
      continue;
    }
    const Var inputs[] = {x};
    out.emplace_back(t.record(
        slice_channels(t.value(x), begin, sz), inputs,
        [x, begin](Tape<T>& t, Var o) {
          const Tensor<T>& dy = t.grad(o);
          auto& dx = t.grad_buffer(x);
          const Shape& ds = dy.shape();
          const Shape& xs = dx.shape();
          const int64_t plane = ds.h * ds.w;
          for (int64_t n = 0; n < ds.n; ++n) {
            const T* src = dy.data() + n * ds.c * plane;
            T* dst = dx.data() + (n * xs.c + begin) * plane;
            for (int64_t k = 0; k < ds.c * plane; ++k) dst[k] += src[k];
          }
        }));
    begin += sz;
  }
  return out;
}

template <typename T>
Var channel_concat(Tape<T>& t, std::span<const Var> parts) {
  std::vector<Tensor<T>> values;
  values.reserve(parts.size());
  for (Var p : parts) values.push_back(t.value(p));
  Tensor<T> y = mvformer::channel_concat<T>(values);
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(y), inputs, [inputs](Tape<T>& t, Var out) {
    const Tensor<T>& dy = t.grad(out);
    const Shape& ys = dy.shape();
    const int64_t plane = ys.h * ys.w;
    int64_t c0 = 0;
    for (Var p : inputs) {
      const int64_t pc = t.value(p).shape().c;
      if (pc == 0) continue;
      if (t.requires_grad(p)) {
        auto& dp = t.grad_buffer(p);
        for (int64_t n = 0; n < ys.n; ++n) {
          const T* src = dy.data() + (n * ys.c + c0) * plane;
          T* dst = dp.data() + n * pc * plane;
          for (int64_t k = 0; k < pc * plane; ++k) dst[k] += src[k];
        }
      }
      c0 += pc;
    }
  });
}

template <typename T>
Var global_avg_pool(Tape<T>& t, Var x) {
  Tensor<T> y = mvformer::global_avg_pool(t.value(x));
  const Var inputs[] = {x};
  return t.record(std::move(y), inputs, [x](Tape<T>& t, Var out) {
    const Tensor<T>& dy = t.grad(out);
    auto& dx = t.grad_buffer(x);
    const Shape& s = dx.shape();
    const int64_t plane = s.h * s.w;
    const T scale = T(1) / static_cast<T>(plane);
    for (int64_t i = 0; i < s.n * s.c; ++i) {
      const T g = dy[i] * scale;
      T* p = dx.data() + i * plane;
      for (int64_t k = 0; k < plane; ++k) p[k] += g;
    }
  });
}

template <typename T>
Var scale_samples(Tape<T>& t, Var x, std::span<const T> sample_scale) {
  const Tensor<T>& xv = t.value(x);
  const Shape& s = xv.shape();
  if (static_cast<int64_t>(sample_scale.size()) != s.n) {
    throw DimensionError(fmt::format(
        "scale_samples: {} factors for batch axis n = {}", sample_scale.size(),
        s.n));
  }
  const int64_t per = s.c * s.h * s.w;
  Tensor<T> y(s);
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t k = 0; k < per; ++k)
      y[n * per + k] = xv[n * per + k] * sample_scale[n];
  std::vector<T> factors(sample_scale.begin(), sample_scale.end());
  const Var inputs[] = {x};
  return t.record(std::move(y), inputs,
                  [x, per, factors = std::move(factors)](Tape<T>& t, Var out) {
                    const Tensor<T>& dy = t.grad(out);
                    auto& dx = t.grad_buffer(x);
                    for (size_t n = 0; n < factors.size(); ++n)
                      for (int64_t k = 0; k < per; ++k) {
                        const int64_t i = static_cast<int64_t>(n) * per + k;
                        dx[i] += dy[i] * factors[n];
                      }
                  });
}

template <typename T>
Var cross_entropy(Tape<T>& t, Var logits, std::span<const int> targets,
                  T label_smoothing) {
  const Tensor<T>& z = t.value(logits);
  const Shape& s = z.shape();
  if (s.h != 1 || s.w != 1) {
    throw DimensionError("cross_entropy: logits must be (n, K, 1, 1), got " +
                         s.str());
  }
  if (s.c < 2) {
    throw DimensionError("cross_entropy: need at least 2 classes (axis c)");
  }
  if (static_cast<int64_t>(targets.size()) != s.n) {
    throw DimensionError(fmt::format(
        "cross_entropy: {} targets for batch axis n = {}", targets.size(), s.n));
  }
  const int64_t k = s.c;
  const double eps = label_smoothing;
  // Softmax probabilities are kept for the backward pass.
  std::vector<double> prob(static_cast<size_t>(s.n * k));
  double loss = 0;
  for (int64_t n = 0; n < s.n; ++n) {
    const int target = targets[n];
    if (target < 0 || target >= k) {
      throw IndexError(fmt::format(
          "cross_entropy: target {} out of range [0, {})", target, k));
    }
    const T* row = z.data() + n * k;
    double mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max<double>(mx, row[j]);
    double se = 0;
    for (int64_t j = 0; j < k; ++j) se += std::exp(row[j] - mx);
    const double lse = mx + std::log(se);
    for (int64_t j = 0; j < k; ++j) {
      const double logp = row[j] - lse;
      prob[n * k + j] = std::exp(logp);
      const double q = (j == target ? 1.0 - eps : 0.0) + eps / k;
      loss -= q * logp;
    }
  }
  loss /= static_cast<double>(s.n);
  std::vector<int> tg(targets.begin(), targets.end());
  const Var inputs[] = {logits};
  return t.record(
      Tensor<T>::scalar(static_cast<T>(loss)), inputs,
      [logits, k, eps, prob = std::move(prob), tg = std::move(tg)](Tape<T>& t,
                                                                   Var out) {
        const double g = t.grad(out)[0];
        auto& dz = t.grad_buffer(logits);
        const double batch = static_cast<double>(tg.size());
        for (size_t n = 0; n < tg.size(); ++n)
          for (int64_t j = 0; j < k; ++j) {
            const double q = (j == tg[n] ? 1.0 - eps : 0.0) + eps / k;
            const size_t i = n * static_cast<size_t>(k) + j;
            dz[static_cast<int64_t>(i)] +=
                static_cast<T>(g * (prob[i] - q) / batch);
          }
      });
}

}  // namespace ops

#define MVFORMER_INSTANTIATE_OPS(T)                                           \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&,              \
                            const Tensor<T>*, const Conv2dGeometry&);        \
  template Moments<T> moments(const Tensor<T>&, AxisSet);                    \
  template std::vector<Tensor<T>> channel_split(const Tensor<T>&,            \
                                                std::span<const int64_t>);   \
  template Tensor<T> channel_concat(std::span<const Tensor<T>>);             \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                \
  namespace ops {                                                            \
  template Var conv2d(Tape<T>&, Var, Var, std::optional<Var>,                \
                      const Conv2dGeometry&);                                \
  template Var add(Tape<T>&, Var, Var);                                      \
  template Var mul(Tape<T>&, Var, Var);                                      \
  template Var scale(Tape<T>&, Var, T);                                      \
  template Var sum(Tape<T>&, Var);                                           \
  template Var normalize(Tape<T>&, Var, AxisSet, T, Moments<T>*);            \
  template Var normalize_frozen(Tape<T>&, Var, const Tensor<T>&,             \
                                const Tensor<T>&, T);                        \
  template Var star_relu(Tape<T>&, Var, Var, Var);                           \
  template std::vector<std::optional<Var>> channel_split(                    \
      Tape<T>&, Var, std::span<const int64_t>);                              \
  template Var channel_concat(Tape<T>&, std::span<const Var>);               \
  template Var global_avg_pool(Tape<T>&, Var);                               \
  template Var scale_samples(Tape<T>&, Var, std::span<const T>);             \
  template Var cross_entropy(Tape<T>&, Var, std::span<const int>, T);        \
  }

MVFORMER_INSTANTIATE_OPS(float)
MVFORMER_INSTANTIATE_OPS(double)

#undef MVFORMER_INSTANTIATE_OPS

}  // namespace mvformer

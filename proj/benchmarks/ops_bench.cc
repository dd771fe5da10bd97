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

#include <benchmark/benchmark.h>

#include "mvformer/normalization.h"
#include "mvformer/ops.h"
#include "mvformer/random.h"
#include "mvformer/tape.h"
#include "mvformer/token_mixer.h"

namespace mvformer {
namespace {

Tensor<float> noise(Shape s, Rng& rng) {
  Tensor<float> t(s);
  for (float& v : t.span()) v = static_cast<float>(standard_normal(rng));
  return t;
}

// Depthwise 7x7 over a (8, C, 28, 28) map, C from the argument.
void BM_DepthwiseConv7(benchmark::State& state) {
  const int64_t c = state.range(0);
  Rng rng(1);
  const auto x = noise({8, c, 28, 28}, rng);
  const auto w = noise({c, 1, 7, 7}, rng);
  const auto g = Conv2dGeometry::square(1, 3, static_cast<int>(c));
  for (auto _ : state) {
    auto y = conv2d<float>(x, w, nullptr, g);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 8 * c * 28 * 28 * 49);
}
BENCHMARK(BM_DepthwiseConv7)->Arg(32)->Arg(64)->Arg(128);

void BM_PointwiseConv(benchmark::State& state) {
  const int64_t c = state.range(0);
  Rng rng(2);
  const auto x = noise({8, c, 14, 14}, rng);
  const auto w = noise({2 * c, c, 1, 1}, rng);
  for (auto _ : state) {
    auto y = conv2d<float>(x, w, nullptr, Conv2dGeometry{});
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 8 * 2 * c * c * 14 * 14);
}
BENCHMARK(BM_PointwiseConv)->Arg(64)->Arg(128);

void BM_MvnForwardBackward(benchmark::State& state) {
  const int64_t c = state.range(0);
  Rng rng(3);
  auto st = MvnState<float>::make(c, "mvn");
  Param<float> input("input", noise({16, c, 14, 14}, rng), false);
  for (auto _ : state) {
    Tape<float> t;
    Var y = mvn(t, t.param(input), st, Mode::kTrain);
    t.backward(ops::sum(t, y));
    benchmark::DoNotOptimize(input.grad.data());
  }
}
BENCHMARK(BM_MvnForwardBackward)->Arg(32)->Arg(128);

void BM_MvtmForward(benchmark::State& state) {
  const int stage = static_cast<int>(state.range(0));
  const int64_t c = 64;
  const int64_t hw = 56 >> (stage - 1);
  Rng rng(4);
  const StageSpec spec = make_stage_spec(stage, c);
  auto p = MvtmParams<float>::make(spec, "mixer", rng);
  const auto x = noise({4, c, hw, hw}, rng);
  for (auto _ : state) {
    Tape<float> t;
    t.set_grad_enabled(false);
    Var y = mvtm_forward(t, t.constant(x), p, spec);
    benchmark::DoNotOptimize(t.value(y).data());
  }
}
BENCHMARK(BM_MvtmForward)->DenseRange(1, 4);

}  // namespace
}  // namespace mvformer

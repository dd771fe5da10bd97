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

#include <vector>

#include "mvformer/analysis.h"
#include "mvformer/dataset.h"
#include "mvformer/model.h"
#include "mvformer/ops.h"
#include "mvformer/tape.h"

namespace mvformer {
namespace {

Batch micro_batch(int64_t n) {
  SyntheticDataset ds;
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  return generate_batch(ds, idx);
}

void BM_MicroPredict(benchmark::State& state) {
  auto m = build_model<float>(preset("micro"), 0);
  const Batch b = micro_batch(state.range(0));
  for (auto _ : state) {
    auto logits = predict(m, b.images);
    benchmark::DoNotOptimize(logits.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MicroPredict)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

// Forward, loss and backward for one batch; no optimizer update.
void BM_MicroTrainStep(benchmark::State& state) {
  auto m = build_model<float>(preset("micro"), 0);
  const Batch b = micro_batch(state.range(0));
  Rng rng(0);
  const ForwardContext ctx{Mode::kTrain, &rng};
  for (auto _ : state) {
    m.zero_grad();
    Tape<float> t;
    Var logits = model_forward(t, t.constant(b.images), m, ctx);
    t.backward(ops::cross_entropy(t, logits, b.labels, 0.1f));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MicroTrainStep)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_CountMacs(benchmark::State& state) {
  const ModelConfig cfg = preset("B");
  for (auto _ : state) {
    auto r = count_macs(cfg, 224);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_CountMacs);

}  // namespace
}  // namespace mvformer

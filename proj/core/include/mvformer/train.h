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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mvformer/config.h"
#include "mvformer/model.h"
#include "mvformer/optimizer.h"

namespace mvformer {

struct EpochMetrics {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;
  double val_acc = 0;
};

inline constexpr char kMetricsHeader[] = "epoch,lr,train_loss,train_acc,val_acc";
std::string metrics_row(const EpochMetrics& m);

struct TrainResult {
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  double best_val_acc = 0;
  OptimState<float> optimizer;
};

// Called after every epoch; used by the CLI for progress output.
using EpochCallback = std::function<void(const EpochMetrics&)>;

// Trains in place. Writes metrics.csv, last.ckpt (initial state first, then
// after every epoch) and best.ckpt (highest val_acc, earliest on ties) into
// cfg.out_dir. A non-finite loss or gradient throws NumericError; the
// checkpoints written so far are left untouched.
TrainResult train_loop(Model<float>& model, const TrainConfig& cfg,
                       const EpochCallback& on_epoch = {});

// Top-1 accuracy over dataset indices [begin, end) in inference mode.
double evaluate(Model<float>& model, const SyntheticDataset& ds, int64_t begin,
                int64_t end, int batch_size = 64);

// Mean label-smoothed loss of one batch in training mode, no update.
double batch_loss(Model<float>& model, const SyntheticDataset& ds,
                  std::span<const int64_t> indices, double smoothing);

}  // namespace mvformer

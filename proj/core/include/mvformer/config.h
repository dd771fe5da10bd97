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
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvformer/dataset.h"
#include "mvformer/model.h"

namespace mvformer {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double base_lr = 1e-3;
  int warmup_epochs = 2;
  double weight_decay = 0.05;
  double label_smoothing = 0.1;
  // Overrides the model's stochastic-depth rate when set.
  std::optional<double> drop_path_rate;
  uint64_t seed = 0;
  SyntheticDataset data;
  // Output directory for metrics.csv, best.ckpt and last.ckpt.
  std::filesystem::path out_dir = "run";

  void validate() const;
};

// Resolved contents of a config file: [model], [train] and [data] sections.
struct RunConfig {
  ModelConfig model = preset("micro");
  TrainConfig train;
};

using Fields = std::vector<std::pair<std::string, std::string>>;

// Flat key/value views used by config files and checkpoint metadata.
Fields model_fields(const ModelConfig& cfg);
void set_model_field(ModelConfig& cfg, std::string_view key,
                     std::string_view value);
Fields train_fields(const TrainConfig& cfg);
void set_train_field(TrainConfig& cfg, std::string_view key,
                     std::string_view value);

// `preset` in [model] is applied before the other model keys regardless of
// order. Unknown sections or keys throw ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace mvformer

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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvformer/model.h"
#include "mvformer/optimizer.h"

namespace mvformer {

inline constexpr char kCheckpointMagic[4] = {'M', 'V', 'F', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

// Layout (all integers little-endian):
//   "MVFK" u32 version
//   u32 meta_bytes, meta text ("key=value\n" lines, sorted by key)
//   u32 entry_count, entries of
//     u16 name_bytes, name, u8 dtype (0 = f32), u8 rank (4), 4 x u64 dims,
//     u64 payload offset, u64 payload bytes
//   payload (f32 values)
//   u64 FNV-1a hash of every preceding byte
struct CheckpointData {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const;
};

std::vector<uint8_t> encode_checkpoint(const CheckpointData& ckpt);
// FormatError on bad magic or version, IntegrityError on truncation,
// overlapping payloads or hash mismatch.
CheckpointData decode_checkpoint(std::span<const uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path,
                      const CheckpointData& ckpt);
CheckpointData read_checkpoint(const std::filesystem::path& path);

// Model parameters go under "param/", running statistics under "buffer/",
// optimizer moments under "optim.m/" and "optim.v/". Model and optimizer
// settings are stored in meta with "model." and "optim." prefixes; `extra`
// is merged in as given.
CheckpointData make_checkpoint(const Model<float>& model,
                               const OptimState<float>* opt,
                               const std::map<std::string, std::string>& extra = {});

ModelConfig checkpoint_model_config(const CheckpointData& ckpt);

// Copies stored tensors into an existing model. A missing entry or a shape
// disagreement throws DimensionError naming the tensor.
void restore_model(Model<float>& model, const CheckpointData& ckpt);
std::optional<OptimState<float>> restore_optimizer(const Model<float>& model,
                                                   const CheckpointData& ckpt);

struct LoadedCheckpoint {
  Model<float> model;
  std::optional<OptimState<float>> optimizer;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::filesystem::path& path,
                     const Model<float>& model, const OptimState<float>* opt,
                     const std::map<std::string, std::string>& extra = {});
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mvformer

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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvformer/tensor.h"

namespace mvformer {

// Procedural K-class image set. Class k draws from generator k % 4
// (stripes, checker, blobs, rings); classes beyond the fourth reuse a
// generator at a higher spatial frequency band.
struct SyntheticDataset {
  uint64_t seed = 0;
  int classes = 4;
  int size = 32;
  int64_t train = 512;
  int64_t val = 256;

  // Train indices are [0, train), validation [train, train + val).
  int64_t total() const { return train + val; }
  int label(int64_t index) const { return static_cast<int>(index % classes); }
  void validate() const;

  // "synthetic:seed=7,classes=4,size=32,train=512,val=256"; omitted keys
  // keep their defaults.
  static SyntheticDataset parse(std::string_view spec);
  std::string str() const;
};

struct Batch {
  Tensor<float> images;  // (n, 3, size, size) in [0, 1]
  std::vector<int> labels;
};

// Pure function of (dataset seed, index).
void render_sample(const SyntheticDataset& ds, int64_t index,
                   std::span<float> out);

Batch generate_batch(const SyntheticDataset& ds,
                     std::span<const int64_t> indices);

}  // namespace mvformer

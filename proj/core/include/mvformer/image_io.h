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
#include <span>
#include <string>
#include <vector>

#include "mvformer/tensor.h"

namespace mvformer {

// 8-bit interleaved image: 1 channel (PGM) or 3 channels (PPM).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;

  bool operator==(const Image&) const = default;
};

// Binary P5/P6 reader. 16-bit samples (maxval > 255) are reduced to 8 bits;
// other maxvals are rescaled to 0..255.
Image decode_pnm(std::span<const uint8_t> bytes);
Image read_pnm(const std::filesystem::path& path);

// P6 for 3 channels, P5 for 1, always maxval 255.
std::vector<uint8_t> encode_pnm(const Image& img);
void write_pnm(const std::filesystem::path& path, const Image& img);

// Stacks equally sized images into (n, channels, h, w) with values / 255.
Tensor<float> images_to_tensor(std::span<const Image> images);

// Sample `n` of x (values expected in [0, 1]) to 8 bits, rounding to nearest.
template <typename T>
Image tensor_to_image(const Tensor<T>& x, int64_t n);

}  // namespace mvformer

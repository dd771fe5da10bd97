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
#include "mvformer/dataset.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "mvformer/random.h"

namespace mvformer {
namespace {

constexpr double kTau = 2.0 * std::numbers::pi;
constexpr double kNoiseStd = 0.05;

int64_t parse_int(std::string_view key, std::string_view text) {
  int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(fmt::format("dataset: bad value '{}' for {}", text, key));
  }
  return v;
}

// Pattern value in [0, 1] at pixel (x, y) in unit coordinates.
struct Pattern {
  int kind = 0;
  double freq = 0;
  double cos_t = 1, sin_t = 0;
  double phase = 0;
  double cx = 0.5, cy = 0.5;
  std::vector<std::array<double, 3>> blobs;  // x, y, sigma

  double at(double x, double y) const {
    const double u = (x - 0.5) * cos_t + (y - 0.5) * sin_t;
    const double v = -(x - 0.5) * sin_t + (y - 0.5) * cos_t;
    switch (kind) {
      case 0:
        return 0.5 + 0.5 * std::sin(kTau * freq * u + phase);
      case 1: {
        const double s = std::sin(kTau * freq * u + phase) *
                         std::sin(kTau * freq * v + phase);
        return s > 0 ? 1.0 : 0.0;
      }
      case 2: {
        double acc = 0;
        for (const auto& b : blobs) {
          const double dx = x - b[0], dy = y - b[1];
          acc += std::exp(-(dx * dx + dy * dy) / (2 * b[2] * b[2]));
        }
        return std::min(acc, 1.0);
      }
      default: {
        const double r = std::hypot(x - cx, y - cy);
        return 0.5 + 0.5 * std::cos(kTau * freq * r + phase);
      }
    }
  }
};

Pattern draw_pattern(int cls, Rng& rng) {
  Pattern p;
  p.kind = cls % 4;
  const double band = 1.0 + 0.5 * (cls / 4);
  const double theta = uniform(rng, 0.0, std::numbers::pi);
  p.cos_t = std::cos(theta);
  p.sin_t = std::sin(theta);
  p.phase = uniform(rng, 0.0, kTau);
  switch (p.kind) {
    case 0:
      p.freq = band * uniform(rng, 2.5, 4.5);
      break;
    case 1:
      p.freq = band * uniform(rng, 1.0, 2.0);
      break;
    case 2: {
      const int count = 2 + static_cast<int>(uniform01(rng) * 3);
      for (int i = 0; i < count; ++i) {
        p.blobs.push_back({uniform(rng, 0.15, 0.85), uniform(rng, 0.15, 0.85),
                           uniform(rng, 0.06, 0.12) / band});
      }
      break;
    }
    default:
      p.freq = band * uniform(rng, 2.5, 4.0);
      p.cx = uniform(rng, 0.3, 0.7);
      p.cy = uniform(rng, 0.3, 0.7);
      break;
  }
  return p;
}

}  // namespace

void SyntheticDataset::validate() const {
  if (classes < 2) throw ConfigError("dataset: need at least 2 classes");
  if (size < 8) throw ConfigError("dataset: image size must be >= 8");
  if (train < 1 || val < 0) throw ConfigError("dataset: bad split sizes");
}

SyntheticDataset SyntheticDataset::parse(std::string_view spec) {
  constexpr std::string_view kPrefix = "synthetic";
  if (!spec.starts_with(kPrefix)) {
    throw ConfigError(fmt::format("dataset: unknown source '{}'", spec));
  }
  spec.remove_prefix(kPrefix.size());
  SyntheticDataset ds;
  if (!spec.empty()) {
    if (spec.front() != ':') throw ConfigError("dataset: expected ':' after source");
    spec.remove_prefix(1);
  }
  while (!spec.empty()) {
    const size_t comma = spec.find(',');
    const std::string_view item = spec.substr(0, comma);
    spec = comma == std::string_view::npos ? std::string_view{} : spec.substr(comma + 1);
    const size_t eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("dataset: expected key=value, got '{}'", item));
    }
    const std::string_view key = item.substr(0, eq);
    const int64_t v = parse_int(key, item.substr(eq + 1));
    if (key == "seed") {
      ds.seed = static_cast<uint64_t>(v);
    } else if (key == "classes") {
      ds.classes = static_cast<int>(v);
    } else if (key == "size") {
      ds.size = static_cast<int>(v);
    } else if (key == "train") {
      ds.train = v;
    } else if (key == "val") {
      ds.val = v;
    } else {
      throw ConfigError(fmt::format("dataset: unknown key '{}'", key));
    }
  }
  ds.validate();
  return ds;
}

std::string SyntheticDataset::str() const {
  return fmt::format("synthetic:seed={},classes={},size={},train={},val={}",
                     seed, classes, size, train, val);
}

void render_sample(const SyntheticDataset& ds, int64_t index,
                   std::span<float> out) {
  if (index < 0 || index >= ds.total()) {
    throw IndexError(fmt::format("dataset: index {} outside [0, {})", index,
                                 ds.total()));
  }
  const int64_t hw = static_cast<int64_t>(ds.size) * ds.size;
  if (static_cast<int64_t>(out.size()) != 3 * hw) {
    throw DimensionError("dataset: output buffer size mismatch");
  }
  Rng rng(derive_seed(ds.seed, static_cast<uint64_t>(index)));
  const Pattern p = draw_pattern(ds.label(index), rng);
  const double lo = uniform(rng, 0.0, 0.25);
  const double hi = uniform(rng, 0.75, 1.0);
  std::array<double, 3> tint;
  for (double& t : tint) t = uniform(rng, 0.5, 1.0);
  for (int y = 0; y < ds.size; ++y) {
    for (int x = 0; x < ds.size; ++x) {
      const double v = lo + (hi - lo) * p.at((x + 0.5) / ds.size,
                                             (y + 0.5) / ds.size);
      for (int c = 0; c < 3; ++c) {
        const double px = tint[c] * v + kNoiseStd * standard_normal(rng);
        out[c * hw + y * ds.size + x] = static_cast<float>(std::clamp(px, 0.0, 1.0));
      }
    }
  }
}

Batch generate_batch(const SyntheticDataset& ds,
                     std::span<const int64_t> indices) {
  Batch b;
  b.images = Tensor<float>(Shape{static_cast<int64_t>(indices.size()), 3,
                                 ds.size, ds.size});
  const int64_t per = 3 * static_cast<int64_t>(ds.size) * ds.size;
  for (size_t i = 0; i < indices.size(); ++i) {
    render_sample(ds, indices[i],
                  b.images.span().subspan(i * per, static_cast<size_t>(per)));
    b.labels.push_back(ds.label(indices[i]));
  }
  return b;
}

}  // namespace mvformer

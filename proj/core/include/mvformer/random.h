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

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>

namespace mvformer {

// 64-bit Mersenne Twister. Its output sequence is fixed by the standard; the
// helpers below avoid <random> distributions, whose algorithms are
// implementation-defined, so seeded runs reproduce across toolchains.
using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Seed derived from a base seed and a stream key (sample index, epoch, ...).
inline uint64_t derive_seed(uint64_t seed, uint64_t key) {
  return splitmix64(seed ^ splitmix64(key + 0x632BE59BD9B4E019ull));
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Standard normal via Box-Muller.
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Normal(0, stddev) resampled until within +-2 stddev.
template <typename T>
void fill_trunc_normal(std::span<T> out, double stddev, Rng& rng) {
  for (T& v : out) {
    double z = standard_normal(rng);
    while (std::abs(z) > 2.0) z = standard_normal(rng);
    v = static_cast<T>(z * stddev);
  }
}

}  // namespace mvformer

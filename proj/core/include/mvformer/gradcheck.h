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
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mvformer/tape.h"

namespace mvformer {

struct GradcheckOptions {
  double step = 1e-3;
  double tolerance = 1e-3;
  // Elements probed per tensor; tensors at or below this size are probed
  // exhaustively.
  int max_samples = 24;
  uint64_t seed = 0;
  // Test hook applied to each analytic gradient before comparison.
  std::function<void(Param<double>&)> corrupt_analytic;
};

struct GradcheckEntry {
  std::string suite;
  std::string param;
  int64_t samples = 0;
  double max_abs_grad = 0;
  // max |analytic - numeric| / max(max |analytic|, max |numeric|, 1e-8)
  // over the probed elements of the tensor.
  double rel_error = 0;
};

struct GradcheckReport {
  double tolerance = 1e-3;
  std::vector<GradcheckEntry> entries;

  bool passed() const;
  const GradcheckEntry* worst() const;
  // One row per tensor: suite, param, samples, rel_error, verdict.
  std::string table() const;
  void append(const GradcheckReport& other);
};

using LossFn = std::function<Var(Tape<double>&)>;

// Compares reverse-mode gradients of `loss` with central differences for
// every tensor in `params`. `loss` must read parameters via Tape::param.
GradcheckReport check_gradients(const std::string& suite,
                                const std::vector<Param<double>*>& params,
                                const LossFn& loss,
                                const GradcheckOptions& opt);

// Built-in suites: "mvn", "mvtm" (all four stage specs at C=8), "block",
// "model" (micro, two images) or "all".
GradcheckReport run_gradcheck(std::string_view module,
                              const GradcheckOptions& opt);

std::vector<std::string> gradcheck_modules();

}  // namespace mvformer

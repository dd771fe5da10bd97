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

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "mvformer/tape.h"

namespace mvformer::cli {

enum ExitCode : int {
  kOk = 0,
  kVerificationFailed = 1,
  kUsageError = 2,
  kNumericAbort = 3,
};

struct Env {
  std::ostream& out;
  std::ostream& err;
  // Applied to every analytic gradient in `gradcheck`; lets tests exercise
  // the failure path without a broken build.
  std::function<void(Param<double>&)> gradcheck_corruption;
};

// Runs one command line (args exclude the program name) and returns the
// process exit code. Never throws.
int run(const std::vector<std::string>& args, Env& env);

}  // namespace mvformer::cli

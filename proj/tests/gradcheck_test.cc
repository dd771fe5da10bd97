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
#include <gtest/gtest.h>

#include "mvformer/gradcheck.h"

namespace mvformer {
namespace {

TEST(GradcheckTest, EverySuitePasses) {
  for (const auto& m : gradcheck_modules()) {
    const auto rep = run_gradcheck(m, GradcheckOptions{});
    EXPECT_FALSE(rep.entries.empty()) << m;
    EXPECT_TRUE(rep.passed()) << rep.table();
  }
}

TEST(GradcheckTest, SameSeedSameTable) {
  GradcheckOptions o;
  o.seed = 5;
  EXPECT_EQ(run_gradcheck("mvtm", o).table(), run_gradcheck("mvtm", o).table());
  GradcheckOptions other = o;
  other.seed = 6;
  EXPECT_NE(run_gradcheck("mvtm", o).table(), run_gradcheck("mvtm", other).table());
}

TEST(GradcheckTest, CorruptedBackwardIsReportedByName) {
  GradcheckOptions o;
  o.corrupt_analytic = [](Param<double>& p) {
    if (p.name == "stage3.block0.mixer.global.weight_h") {
      for (double& g : p.grad.span()) g *= 1.05;
    }
  };
  const auto rep = run_gradcheck("block", o);
  ASSERT_FALSE(rep.passed());
  EXPECT_EQ(rep.worst()->param, "stage3.block0.mixer.global.weight_h");
  for (const auto& e : rep.entries) {
    if (e.param != rep.worst()->param) {
      EXPECT_LT(e.rel_error, o.tolerance) << e.param;
    }
  }
}

TEST(GradcheckTest, UnknownModule) {
  EXPECT_THROW(run_gradcheck("attention", GradcheckOptions{}), ConfigError);
}

}  // namespace
}  // namespace mvformer

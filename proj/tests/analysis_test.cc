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

#include <chrono>
#include <fstream>
#include <sstream>

#include "mvformer/analysis.h"
#include "support/reference.h"

#ifndef MVFORMER_GOLDEN_DIR
#error "MVFORMER_GOLDEN_DIR must point at tests/golden"
#endif

namespace mvformer {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(CountTest, PresetsAgreeWithClosedForm) {
  for (const auto& name : preset_names()) {
    const ModelConfig cfg = preset(name);
    const auto want = ref::closed_form(cfg, 224);
    EXPECT_EQ(count_params(cfg).total_params(), want.params) << name;
    EXPECT_EQ(count_macs(cfg, 224).total_macs(), want.macs) << name;
    EXPECT_EQ(count_macs(cfg, 224).total_params(), want.params) << name;
  }
}

TEST(CountTest, ReferenceSizes) {
  struct Row {
    const char* name;
    double params_m, macs_g;
  } const table[] = {{"xT", 17, 2.2}, {"T", 27, 3.9}, {"S", 40, 7.6}, {"B", 57, 12.7}};
  for (const Row& r : table) {
    const auto rep = count_macs(preset(r.name), 224);
    EXPECT_NEAR(rep.total_params() / 1e6, r.params_m, 0.02 * r.params_m) << r.name;
    EXPECT_NEAR(rep.total_macs() / 1e9, r.macs_g, 0.05 * r.macs_g) << r.name;
  }
}

TEST(CountTest, SymbolicRowsMatchInstantiatedRegistry) {
  const ModelConfig cfg = preset("micro");
  const auto symbolic = count_params(cfg);
  const auto live = count_params(build_model<float>(cfg, 0));
  ASSERT_EQ(symbolic.rows.size(), live.rows.size());
  for (size_t i = 0; i < live.rows.size(); ++i) {
    EXPECT_EQ(symbolic.rows[i].name, live.rows[i].name);
    EXPECT_EQ(symbolic.rows[i].params, live.rows[i].params) << live.rows[i].name;
  }
}

TEST(CountTest, BlockMacsScaleWithArea) {
  const ModelConfig cfg = preset("S");
  const auto a = count_macs(cfg, 224);
  const auto b = count_macs(cfg, 448);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    if (a.rows[i].name.find(".block") == std::string::npos) continue;
    EXPECT_EQ(b.rows[i].macs, 4 * a.rows[i].macs) << a.rows[i].name;
  }
  EXPECT_EQ(a.total_params(), b.total_params());
}

TEST(CountTest, MvnOverheadOverLayerNorm) {
  ModelConfig ln = preset("xT");
  ln.block_norm = BlockNorm::kLayer;
  const int64_t delta = count_params(preset("xT")).total_params() - count_params(ln).total_params();
  EXPECT_NEAR(delta / 1e6, 0.02, 0.005);
  EXPECT_EQ(delta, ref::closed_form(preset("xT"), 224).params -
                       ref::closed_form(preset("xT"), 224, false).params);
}

TEST(CountTest, AblationOrdering) {
  ModelConfig cfg = preset("xT");
  const int64_t full = count_params(cfg).total_params();
  cfg.ablation = MixerAblation::kNoStageBoth;
  EXPECT_LT(count_params(cfg).total_params(), full);

  auto sevens = [](const CostReport& r) {
    int64_t p = 0;
    for (const auto& row : r.rows) {
      if (row.name.ends_with("mixer.intermediate")) p += row.params;
    }
    return p;
  };
  ModelConfig di = preset("xT");
  di.ablation = MixerAblation::kDropIntermediate;
  EXPECT_EQ(sevens(count_params(di)), 0);
  EXPECT_GT(sevens(count_params(preset("xT"))), 0);
  ModelConfig dg = preset("xT");
  dg.ablation = MixerAblation::kDropGlobal;
  EXPECT_GT(count_params(dg).total_params(), 0);
}

TEST(CountTest, SymbolicCountIsFast) {
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& name : preset_names()) count_macs(preset(name), 224);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1.0);
}

TEST(CountTest, GoldenCsv) {
  for (const auto& name : preset_names()) {
    const std::string path = std::string(MVFORMER_GOLDEN_DIR) + "/count_" + name + ".csv";
    const std::string golden = read_file(path);
    ASSERT_FALSE(golden.empty()) << path;
    EXPECT_EQ(count_macs(preset(name), 224).to_csv(), golden) << name;
  }
}

TEST(CountTest, CsvLayout) {
  const auto csv = count_macs(preset("micro"), 32).to_csv();
  EXPECT_TRUE(csv.starts_with("name,params,macs\n"));
  EXPECT_NE(csv.find("\ntotal,"), std::string::npos);
}

TEST(AlphaTest, FreshModelIsAllOnesInNetworkOrder) {
  auto m = build_model<float>(preset("micro"), 0);
  const auto prof = dump_alpha_profile(m);
  ASSERT_EQ(prof.rows.size(), 2u * preset("micro").total_blocks());
  EXPECT_EQ(prof.rows[0].stage, 1);
  EXPECT_EQ(prof.rows[0].site, "mixer");
  EXPECT_EQ(prof.rows[1].site, "mlp");
  EXPECT_EQ(prof.rows.back().stage, 4);
  for (const auto& r : prof.rows) {
    EXPECT_EQ(r.alpha_bn, 1.0);
    EXPECT_EQ(r.alpha_ln, 1.0);
    EXPECT_EQ(r.alpha_in, 1.0);
  }
  EXPECT_EQ(prof.to_csv(), dump_alpha_profile(m).to_csv());
  EXPECT_TRUE(prof.to_csv().starts_with("stage,block,site,alpha_bn,alpha_ln,alpha_in\n"));

  ModelConfig ln = preset("micro");
  ln.block_norm = BlockNorm::kLayer;
  EXPECT_THROW(dump_alpha_profile(build_model<float>(ln, 0)), ConfigError);
}

TEST(NormImageTest, CompositeIsTheWeightedSum) {
  Rng rng(41);
  const auto x = ref::random_tensor({3, 3, 8, 6}, rng, 0.2, 0.5);
  const std::array<double, 3> w = {0.36, 0.62, 0.02};
  const auto out = normalize_image_grid(x, w);
  const auto b = ref::normalize(x, ref::View::kBatch, 1e-5);
  const auto l = ref::normalize(x, ref::View::kLayer, 1e-5);
  const auto in = ref::normalize(x, ref::View::kInstance, 1e-5);
  for (int64_t i = 0; i < x.numel(); ++i) {
    ASSERT_NEAR(out.bn[i], b[i], 1e-12);
    ASSERT_NEAR(out.ln[i], l[i], 1e-12);
    ASSERT_NEAR(out.in[i], in[i], 1e-12);
    ASSERT_NEAR(out.composite[i], w[0] * b[i] + w[1] * l[i] + w[2] * in[i], 1e-6);
  }
}

TEST(NormImageTest, OneHotWeightsReproduceSingleView) {
  Rng rng(42);
  const auto x = ref::random_tensor({2, 3, 5, 5}, rng, 0.2, 0.5).cast<float>();
  for (int k = 0; k < 3; ++k) {
    std::array<double, 3> w = {0, 0, 0};
    w[k] = 1;
    const auto out = normalize_image_grid(x, w);
    const Tensor<float>& single = k == 0 ? out.bn : k == 1 ? out.ln : out.in;
    EXPECT_EQ(rescale_per_image(out.composite).vec(), rescale_per_image(single).vec());
  }
  EXPECT_THROW(normalize_image_grid(Tensor<float>({1, 3, 4, 4}), {1.0, 0.0, 0.0}), DegenerateError);
}

TEST(NormImageTest, RescaleSpansUnitInterval) {
  Rng rng(43);
  auto x = ref::random_tensor({2, 3, 4, 4}, rng, 3.0);
  for (int64_t i = 48; i < 96; ++i) x[i] = 2.5;  // second image constant
  const auto r = rescale_per_image(x);
  double lo = 1, hi = 0;
  for (int64_t i = 0; i < 48; ++i) {
    lo = std::min(lo, r[i]);
    hi = std::max(hi, r[i]);
  }
  EXPECT_EQ(lo, 0.0);
  EXPECT_EQ(hi, 1.0);
  for (int64_t i = 48; i < 96; ++i) EXPECT_EQ(r[i], 0.0);
}

}  // namespace
}  // namespace mvformer

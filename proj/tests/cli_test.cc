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

#include <sstream>

#include "cli/commands.h"
#include "mvformer/analysis.h"
#include "mvformer/checkpoint.h"
#include "mvformer/image_io.h"
#include "support/scratch.h"

namespace mvformer {
namespace {

using testing::read_text;
using testing::ScratchDir;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args,
           std::function<void(Param<double>&)> corrupt = {}) {
  std::ostringstream out, err;
  cli::Env env{out, err, std::move(corrupt)};
  const int code = cli::run(args, env);
  return {code, out.str(), err.str()};
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

TEST(CliCountTest, PresetReport) {
  const auto r = run({"count", "--preset", "xT", "--input-size", "224"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("params 17.001M"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("macs 2.184G"), std::string::npos) << r.out;
  for (const char* stage : {"stage1", "stage2", "stage3", "stage4", "head"}) {
    EXPECT_NE(r.out.find(stage), std::string::npos);
  }
}

TEST(CliCountTest, CsvOutputMatchesLibrary) {
  ScratchDir dir;
  const auto r = run({"count", "--preset", "micro", "--input-size", "32", "--csv",
                      (dir / "micro.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_text(dir / "micro.csv"), count_macs(preset("micro"), 32).to_csv());
}

TEST(CliCountTest, UsageErrors) {
  const auto unknown = run({"count", "--preset", "huge"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("presets: xT, T, S, B, micro"), std::string::npos);
  EXPECT_EQ(run({"count"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"count", "--preset", "xT", "--input-size", "-3"}).code, 2);
  EXPECT_EQ(run({"ablate-count", "--preset", "xT", "--ablation", "drop-all"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
}

TEST(CliCountTest, AblationChangesCounts) {
  const auto full = run({"ablate-count", "--preset", "xT", "--ablation", "none"});
  const auto both = run({"ablate-count", "--preset", "xT", "--ablation", "no-stage-both"});
  ASSERT_EQ(full.code, 0);
  ASSERT_EQ(both.code, 0);
  EXPECT_NE(both.out.find("ablation no-stage-both"), std::string::npos);
  EXPECT_NE(full.out, both.out);
}

TEST(CliGradcheckTest, PassFailAndDeterminism) {
  const auto a = run({"gradcheck", "--module", "mvn", "--seed", "4"});
  ASSERT_EQ(a.code, 0) << a.out << a.err;
  EXPECT_EQ(first_line(a.out), "seed 4");
  EXPECT_EQ(run({"gradcheck", "--module", "mvn", "--seed", "4"}).out, a.out);

  const auto bad = run({"gradcheck", "--module", "mvn"}, [](Param<double>& p) {
    if (p.name == "mvn.alpha_ln") p.grad[2] += 0.5;
  });
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("mvn.alpha_ln"), std::string::npos) << bad.err;
  EXPECT_EQ(run({"gradcheck", "--module", "conv"}).code, 2);
}

TEST(CliTrainEvalTest, TrainThenEvalAndDumpAlphas) {
  ScratchDir dir;
  const std::string out = (dir / "run").string();
  const auto t = run({"train", "--config", MVFORMER_CONFIG_DIR "/micro.cfg", "--out", out,
                      "--epochs", "3", "--seed", "7", "--data",
                      "synthetic:seed=3,classes=4,size=32,train=32,val=16"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(first_line(t.out), "seed 7");
  const std::string csv = read_text(dir / "run/metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  // Eval on the last checkpoint reproduces the last logged val_acc.
  const std::string last_row = csv.substr(csv.rfind('\n', csv.size() - 2) + 1);
  const std::string val_acc = last_row.substr(last_row.rfind(',') + 1, std::string::npos);
  const auto e = run({"eval", "--checkpoint", (dir / "run/last.ckpt").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("accuracy " + val_acc.substr(0, val_acc.size() - 1)), std::string::npos)
      << e.out << " vs " << val_acc;

  const auto wrong = run({"eval", "--checkpoint", (dir / "run/last.ckpt").string(), "--preset", "xT"});
  EXPECT_EQ(wrong.code, 2);
  EXPECT_NE(wrong.err.find("micro"), std::string::npos);
  EXPECT_EQ(run({"eval", "--checkpoint", (dir / "run/last.ckpt").string(), "--data",
                 "synthetic:classes=3"}).code, 2);

  const auto d1 = run({"dump-alphas", "--checkpoint", (dir / "run/last.ckpt").string(), "--csv",
                       (dir / "a1.csv").string()});
  const auto d2 = run({"dump-alphas", "--checkpoint", (dir / "run/last.ckpt").string(), "--csv",
                       (dir / "a2.csv").string()});
  ASSERT_EQ(d1.code, 0) << d1.err;
  ASSERT_EQ(d2.code, 0);
  EXPECT_EQ(read_text(dir / "a1.csv"), read_text(dir / "a2.csv"));
  EXPECT_NE(read_text(dir / "a1.csv").find("\n1,0,mixer,"), std::string::npos);
}

TEST(CliTrainEvalTest, InputErrorsAndNumericAbort) {
  ScratchDir dir;
  EXPECT_EQ(run({"train", "--config", (dir / "nope.cfg").string()}).code, 2);
  EXPECT_EQ(run({"eval", "--checkpoint", (dir / "nope.ckpt").string()}).code, 2);
  EXPECT_EQ(run({"dump-alphas", "--checkpoint", (dir / "nope.ckpt").string()}).code, 2);

  // A learning rate this large overflows the weights on the first steps.
  const auto nan = run({"train", "--out", (dir / "nan").string(), "--epochs", "3", "--lr", "1e30",
                        "--data", "synthetic:classes=4,size=32,train=32,val=8"});
  EXPECT_EQ(nan.code, 3) << nan.out << nan.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "nan/last.ckpt"));
}

TEST(CliDumpAlphasTest, FreshAndNonMvnCheckpoints) {
  ScratchDir dir;
  save_checkpoint(dir / "fresh.ckpt", build_model<float>(preset("micro"), 0), nullptr);
  const auto r = run({"dump-alphas", "--checkpoint", (dir / "fresh.ckpt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1,0,mixer,1,1,1\n"), std::string::npos) << r.out;

  ModelConfig ln = preset("micro");
  ln.block_norm = BlockNorm::kLayer;
  save_checkpoint(dir / "ln.ckpt", build_model<float>(ln, 0), nullptr);
  EXPECT_EQ(run({"dump-alphas", "--checkpoint", (dir / "ln.ckpt").string()}).code, 2);
}

TEST(CliNormImageTest, WritesFourImagesPerInput) {
  ScratchDir dir;
  for (int k = 0; k < 2; ++k) {
    Image img{6, 4, 3, {}};
    for (int i = 0; i < 72; ++i) img.pixels.push_back(static_cast<uint8_t>((i * (7 + 5 * k)) % 256));
    write_pnm(dir / ("img" + std::to_string(k) + ".ppm"), img);
  }
  const std::string a = (dir / "img0.ppm").string(), b = (dir / "img1.ppm").string();
  const auto r = run({"norm-image", "--in", a, b, "--weights", "1,0,0", "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* sub : {"0_img0", "1_img1"}) {
    for (const char* name : {"bn", "ln", "in", "mvn"}) {
      const auto p = dir / "out" / sub / (std::string(name) + ".ppm");
      const Image img = read_pnm(p);
      EXPECT_EQ(img.channels, 3);
      EXPECT_EQ(read_text(p).substr(0, 2), "P6");
    }
    EXPECT_EQ(read_text(dir / "out" / sub / "bn.ppm"), read_text(dir / "out" / sub / "mvn.ppm"));
  }
  const auto single = run({"norm-image", "--in", a, "--out", (dir / "o2").string()});
  EXPECT_EQ(single.code, 2);
  EXPECT_NE(single.err.find("two images"), std::string::npos);
  EXPECT_EQ(run({"norm-image", "--in", a, b, "--weights", "1,0", "--out", (dir / "o3").string()}).code, 2);
}

}  // namespace
}  // namespace mvformer

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
// Acceptance suite. Each criterion prints exactly one PASS/FAIL line; the
// process exits non-zero if any criterion fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cli/commands.h"
#include "mvformer/analysis.h"
#include "mvformer/checkpoint.h"
#include "mvformer/config.h"
#include "mvformer/gradcheck.h"
#include "mvformer/image_io.h"
#include "mvformer/normalization.h"
#include "mvformer/train.h"

namespace fs = std::filesystem;
using namespace mvformer;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "FAILED ") + what;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
bool same_bits(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), sizeof(T) * a.numel()) == 0;
}

struct TargetSize {
  const char* name;
  double params_m, macs_g;
};
constexpr TargetSize kTargets[] = {{"xT", 17, 2.2}, {"T", 27, 3.9}, {"S", 40, 7.6}, {"B", 57, 12.7}};

Verdict parameter_counts() {
  Verdict v;
  for (const auto& row : kTargets) {
    const auto t0 = std::chrono::steady_clock::now();
    const double m = count_params(preset(row.name)).total_params() / 1e6;
    const double dt = seconds_since(t0);
    v.require(std::abs(m - row.params_m) <= 0.02 * row.params_m && dt < 1.0,
              fmt::format("{} {:.3f}M vs {}M ({:.4f}s)", row.name, m, row.params_m, dt));
  }
  return v;
}

Verdict mac_counts() {
  Verdict v;
  for (const auto& row : kTargets) {
    const auto t0 = std::chrono::steady_clock::now();
    const double g = count_macs(preset(row.name), 224).total_macs() / 1e9;
    const double dt = seconds_since(t0);
    v.require(std::abs(g - row.macs_g) <= 0.05 * row.macs_g && dt < 1.0,
              fmt::format("{} {:.3f}G vs {}G ({:.4f}s)", row.name, g, row.macs_g, dt));
  }
  return v;
}

Verdict mvn_overhead() {
  Verdict v;
  ModelConfig ln = preset("xT");
  ln.block_norm = BlockNorm::kLayer;
  const int64_t with_ln = count_params(ln).total_params();
  const int64_t with_mvn = count_params(preset("xT")).total_params();
  const double delta = (with_mvn - with_ln) / 1e6;
  v.require(std::abs(delta - 0.02) <= 0.005,
            fmt::format("LN {:.4f}M -> MVN {:.4f}M, delta {:.4f}M", with_ln / 1e6, with_mvn / 1e6, delta));
  return v;
}

Verdict norm_statistics() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  Tensor<float> x({8, 16, 16, 16});
  for (float& e : x.span()) e = static_cast<float>(3.0 + 2.5 * standard_normal(rng));
  Tape<float> t;
  t.set_grad_enabled(false);
  Var xv = t.constant(x);
  Buffer<float> rm{"m", Tensor<float>({1, 16, 1, 1})};
  Buffer<float> rv{"v", Tensor<float>({1, 16, 1, 1}, 1.0f)};
  const std::array<std::pair<const char*, Tensor<float>>, 3> outs = {{
      {"bn", t.value(batch_norm(t, xv, rm, rv, 1e-5f, 0.1f, Mode::kTrain))},
      {"ln", t.value(layer_norm(t, xv, 1e-5f))},
      {"in", t.value(instance_norm(t, xv, 1e-5f))},
  }};
  const std::array<AxisSet, 3> axes = {AxisSet{Axis::kN, Axis::kH, Axis::kW}, AxisSet{Axis::kC},
                                       AxisSet{Axis::kH, Axis::kW}};
  for (size_t k = 0; k < 3; ++k) {
    const auto m = moments(outs[k].second, axes[k]);
    double worst_mean = 0, worst_var = 0;
    for (int64_t i = 0; i < m.mean.numel(); ++i) {
      worst_mean = std::max(worst_mean, std::abs(static_cast<double>(m.mean[i])));
      worst_var = std::max(worst_var, std::abs(m.var[i] - 1.0));
    }
    v.require(worst_mean < 1e-5 && worst_var < 1e-3,
              fmt::format("{} |mean| {:.2e} |var-1| {:.2e}", outs[k].first, worst_mean, worst_var));
  }
  const double dt = seconds_since(t0);
  v.require(dt < 1.0, fmt::format("{:.3f}s", dt));
  return v;
}

Verdict one_hot_mvn() {
  Verdict v;
  Rng rng(7);
  Tensor<float> x({4, 8, 6, 6});
  for (float& e : x.span()) e = static_cast<float>(standard_normal(rng) * 2 - 0.5);
  const char* names[] = {"bn", "ln", "in"};
  for (int k = 0; k < 3; ++k) {
    auto st = MvnState<float>::make(8, "mvn");
    st.alpha_bn.value.fill(k == 0 ? 1.0f : 0.0f);
    st.alpha_ln.value.fill(k == 1 ? 1.0f : 0.0f);
    st.alpha_in.value.fill(k == 2 ? 1.0f : 0.0f);
    Tape<float> t;
    Var xv = t.constant(x);
    const Tensor<float> y = t.value(mvn(t, xv, st, Mode::kTrain));
    Buffer<float> rm{"m", Tensor<float>({1, 8, 1, 1})};
    Buffer<float> rv{"v", Tensor<float>({1, 8, 1, 1}, 1.0f)};
    const Tensor<float> ref = k == 0   ? t.value(batch_norm(t, xv, rm, rv, 1e-5f, 0.1f, Mode::kTrain))
                              : k == 1 ? t.value(layer_norm(t, xv, 1e-5f))
                                       : t.value(instance_norm(t, xv, 1e-5f));
    v.require(same_bits(y, ref), fmt::format("{} bitwise", names[k]));
  }
  return v;
}

Verdict gradient_suite() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& m : gradcheck_modules()) {
    const auto rep = run_gradcheck(m, GradcheckOptions{});
    const GradcheckEntry* w = rep.worst();
    v.require(rep.passed(), fmt::format("{} worst {:.2e} ({})", m, w->rel_error, w->param));
  }
  const double dt = seconds_since(t0);
  v.require(dt < 60.0, fmt::format("{:.1f}s", dt));
  return v;
}

Verdict stage_specs() {
  Verdict v;
  const int ratios[4][3] = {{50, 50, 0}, {25, 50, 25}, {25, 50, 25}, {0, 50, 50}};
  const int kernels[4] = {55, 27, 13, 7};
  for (int64_t c : {64, 128, 320, 512}) {
    for (int s = 1; s <= 4; ++s) {
      const StageSpec spec = make_stage_spec(s, c);
      const int64_t e = spec.expanded();
      const bool ok = spec.dim_local * 100 == ratios[s - 1][0] * e &&
                      spec.dim_intermediate * 100 == ratios[s - 1][1] * e &&
                      spec.dim_global * 100 == ratios[s - 1][2] * e &&
                      spec.global_kernel == kernels[s - 1] && spec.global_decomposed == (s < 4);
      if (!ok) v.require(false, fmt::format("stage {} at C={}", s, c));
    }
  }
  if (v.pass) v.detail = "50:50:0 25:50:25 25:50:25 0:50:50, kernels 55/27/13 decomposed, 7x7 square";
  return v;
}

struct TrainedRun {
  fs::path dir;
  TrainResult result;
  Model<float> model;
  TrainConfig cfg;
};

TrainedRun train_micro(const fs::path& dir) {
  RunConfig rc = load_run_config(MVFORMER_CONFIG_DIR "/micro.cfg");
  rc.train.out_dir = dir;
  TrainedRun run{dir, {}, build_model<float>(rc.model, rc.train.seed), rc.train};
  run.result = train_loop(run.model, rc.train);
  return run;
}

Verdict toy_training(const TrainedRun& run, double dt) {
  Verdict v;
  const auto& h = run.result.history;
  const double train_acc = h.empty() ? 0 : h.back().train_acc;
  const double val_acc = h.empty() ? 0 : h.back().val_acc;
  v.require(static_cast<int>(h.size()) == 30 && run.cfg.epochs == 30, fmt::format("{} epochs", h.size()));
  v.require(train_acc >= 0.90, fmt::format("train_acc {:.4f}", train_acc));
  v.require(val_acc >= 0.80, fmt::format("val_acc {:.4f}", val_acc));
  v.require(dt < 600.0, fmt::format("{:.1f}s", dt));
  return v;
}

Verdict visualization(const fs::path& dir) {
  Verdict v;
  const SyntheticDataset ds = SyntheticDataset::parse("synthetic:seed=5,classes=4,size=32,train=4,val=0");
  const std::vector<int64_t> idx = {0, 1, 2};
  const Batch b = generate_batch(ds, idx);
  std::vector<std::string> args = {"norm-image", "--in"};
  for (int64_t i : idx) {
    const fs::path p = dir / fmt::format("src{}.ppm", i);
    write_pnm(p, tensor_to_image(b.images, i));
    args.push_back(p.string());
  }
  auto run_cli = [&](const std::string& weights, const fs::path& out) {
    std::vector<std::string> a = args;
    a.insert(a.end(), {"--weights", weights, "--out", out.string()});
    std::ostringstream so, se;
    cli::Env env{so, se, {}};
    return cli::run(a, env);
  };
  v.require(run_cli("0.36,0.62,0.02", dir / "mix") == 0, "norm-image exit 0");
  int valid = 0;
  for (const char* name : {"bn", "ln", "in", "mvn"}) {
    const fs::path p = dir / "mix" / "0_src0" / (std::string(name) + ".ppm");
    try {
      const auto bytes = file_bytes(p);
      const Image img = decode_pnm(bytes);
      valid += bytes.size() > 2 && bytes[0] == 'P' && bytes[1] == '6' && img.channels == 3;
    } catch (const std::exception&) {
    }
  }
  v.require(valid == 4, fmt::format("{}/4 valid P6 files", valid));

  const std::vector<Image> imgs = {read_pnm(args[2]), read_pnm(args[3]), read_pnm(args[4])};
  const Tensor<double> x = images_to_tensor(imgs).cast<double>();
  const std::array<double, 3> w = {0.36, 0.62, 0.02};
  const auto n = normalize_image_grid(x, w);
  double worst = 0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    worst = std::max(worst, std::abs(n.composite[i] - (w[0] * n.bn[i] + w[1] * n.ln[i] + w[2] * n.in[i])));
  }
  v.require(worst <= 1e-6, fmt::format("composite residual {:.1e}", worst));

  v.require(run_cli("1,0,0", dir / "onehot") == 0, "one-hot exit 0");
  const auto bn = file_bytes(dir / "onehot" / "0_src0" / "bn.ppm");
  v.require(!bn.empty() && bn == file_bytes(dir / "onehot" / "0_src0" / "mvn.ppm"), "one-hot mvn.ppm == bn.ppm");
  return v;
}

Verdict persistence(const TrainedRun& run) {
  Verdict v;
  const fs::path path = run.dir / "roundtrip.ckpt";
  save_checkpoint(path, run.model, &run.result.optimizer);
  LoadedCheckpoint back = load_checkpoint(path);
  int bad = 0;
  const auto p0 = run.model.parameters();
  const auto p1 = back.model.parameters();
  for (size_t i = 0; i < p0.size(); ++i) bad += !same_bits(p0[i]->value, p1[i]->value);
  v.require(bad == 0 && p0.size() == p1.size(), fmt::format("{} parameter tensors", p0.size()));
  bad = 0;
  const auto b0 = run.model.buffers();
  const auto b1 = back.model.buffers();
  for (size_t i = 0; i < b0.size(); ++i) bad += !same_bits(b0[i]->value, b1[i]->value);
  v.require(bad == 0 && b0.size() == b1.size(), fmt::format("{} running-stat tensors", b0.size()));
  bad = 0;
  const auto& o0 = run.result.optimizer;
  const bool has_opt = back.optimizer.has_value();
  if (has_opt) {
    for (size_t i = 0; i < o0.m.size(); ++i) {
      bad += !same_bits(o0.m[i], back.optimizer->m[i]) || !same_bits(o0.v[i], back.optimizer->v[i]);
    }
  }
  v.require(has_opt && bad == 0 && back.optimizer->step == o0.step,
            fmt::format("{} moment pairs, step {}", o0.m.size(), o0.step));
  Model<float> live = run.model;
  const double before = evaluate(live, run.cfg.data, run.cfg.data.train, run.cfg.data.total(), run.cfg.batch_size);
  const double after = evaluate(back.model, run.cfg.data, run.cfg.data.train, run.cfg.data.total(), run.cfg.batch_size);
  v.require(before == after, fmt::format("eval {:.4f} / {:.4f}", before, after));
  return v;
}

Verdict determinism(const TrainedRun& a, const TrainedRun& b) {
  Verdict v;
  for (const char* f : {"metrics.csv", "last.ckpt", "best.ckpt"}) {
    const auto x = file_bytes(a.dir / f), y = file_bytes(b.dir / f);
    v.require(!x.empty() && x == y, fmt::format("{} identical ({} bytes)", f, x.size()));
  }
  return v;
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / "mvformer_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  int failures = 0;
  auto report = [&](int id, const char* title, const std::function<Verdict()>& fn) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    failures += !v.pass;
    std::cout << fmt::format("[{:2}] {} {}: {}", id, v.pass ? "PASS" : "FAIL", title, v.detail)
              << std::endl;
  };

  report(1, "parameter reproduction", parameter_counts);
  report(2, "MAC reproduction", mac_counts);
  report(3, "MVN overhead", mvn_overhead);
  report(4, "normalization statistics", norm_statistics);
  report(5, "one-hot MVN equivalence", one_hot_mvn);
  report(6, "gradient suite", gradient_suite);
  report(7, "stage-spec table", stage_specs);

  std::optional<TrainedRun> first, second;
  double first_seconds = 0;
  report(8, "toy training", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    first = train_micro(root / "run_a");
    first_seconds = seconds_since(t0);
    return toy_training(*first, first_seconds);
  });
  report(9, "visualization pipeline", [&] {
    fs::create_directories(root / "vis");
    return visualization(root / "vis");
  });
  report(10, "persistence", [&] {
    if (!first) throw Error("training run unavailable");
    return persistence(*first);
  });
  report(11, "determinism", [&] {
    if (!first) throw Error("training run unavailable");
    second = train_micro(root / "run_b");
    return determinism(*first, *second);
  });

  std::cout << fmt::format("{} of 11 criteria passed", 11 - failures) << std::endl;
  fs::remove_all(root);
  return failures == 0 ? 0 : 1;
}

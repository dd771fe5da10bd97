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
#include "cli/commands.h"

#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <fmt/ranges.h>

#include "mvformer/analysis.h"
#include "mvformer/checkpoint.h"
#include "mvformer/config.h"
#include "mvformer/gradcheck.h"
#include "mvformer/image_io.h"
#include "mvformer/train.h"

namespace mvformer::cli {
namespace fs = std::filesystem;
namespace {

std::string millions(int64_t v) { return fmt::format("{:.3f}M", v / 1e6); }
std::string billions(int64_t v) { return fmt::format("{:.3f}G", v / 1e9); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("short write to " + path.string());
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw IoError(fmt::format("{} not found: {}", what, p.string()));
}

struct CountArgs {
  std::string preset;
  std::string ablation = "none";
  int64_t input_size = 224;
  std::string csv;
};

int cmd_count(const CountArgs& a, Env& env) {
  ModelConfig cfg = preset(a.preset);
  cfg.ablation = parse_ablation(a.ablation);
  cfg.validate();
  const CostReport params = count_params(cfg);
  const CostReport rep = count_macs(cfg, a.input_size);
  fmt::print(env.out, "model {} input {}x{} ablation {}\n", cfg.name, a.input_size,
             a.input_size, to_string(cfg.ablation));
  fmt::print(env.out, "{:<8} {:>14} {:>16}\n", "module", "params", "macs");
  for (const CostRow& r : rep.by_stage()) {
    fmt::print(env.out, "{:<8} {:>14} {:>16}\n", r.name, r.params, r.macs);
  }
  fmt::print(env.out, "{:<8} {:>14} {:>16}\n", "total", rep.total_params(), rep.total_macs());
  fmt::print(env.out, "params {} ({}) macs {} ({})\n", millions(params.total_params()),
             params.total_params(), billions(rep.total_macs()), rep.total_macs());
  if (!a.csv.empty()) write_text(a.csv, rep.to_csv());
  return kOk;
}

struct TrainArgs {
  std::string config;
  std::string out;
  std::optional<uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> lr;
  std::optional<std::string> data;
};

int cmd_train(const TrainArgs& a, Env& env) {
  RunConfig run;
  if (!a.config.empty()) {
    require_file(a.config, "config");
    run = load_run_config(a.config);
  }
  TrainConfig& tc = run.train;
  if (a.seed) tc.seed = *a.seed;
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.lr) tc.base_lr = *a.lr;
  if (a.data) tc.data = SyntheticDataset::parse(*a.data);
  if (!a.out.empty()) tc.out_dir = a.out;
  tc.validate();
  run.model.validate();

  fmt::print(env.out, "seed {}\n", tc.seed);
  fmt::print(env.out, "model {} data {} out {}\n", run.model.name, tc.data.str(),
             tc.out_dir.string());
  env.out << kMetricsHeader << '\n';
  Model<float> model = build_model<float>(run.model, tc.seed);
  const TrainResult res = train_loop(model, tc, [&](const EpochMetrics& m) {
    env.out << metrics_row(m) << std::endl;
  });
  if (tc.epochs > 0) {
    fmt::print(env.out, "best epoch {} val_acc {}\n", res.best_epoch, res.best_val_acc);
  }
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string preset;
  std::string split = "val";
};

int cmd_eval(const EvalArgs& a, Env& env) {
  require_file(a.checkpoint, "checkpoint");
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  const ModelConfig& cfg = ck.model.config;
  if (!a.preset.empty() && a.preset != cfg.name) {
    throw ConfigError(fmt::format("eval: checkpoint holds model '{}', not preset '{}'",
                                  cfg.name, a.preset));
  }
  std::string spec = a.data;
  if (spec.empty()) {
    auto it = ck.meta.find("train.data");
    if (it == ck.meta.end()) throw ConfigError("eval: --data required, checkpoint has no dataset");
    spec = it->second;
  }
  const SyntheticDataset ds = SyntheticDataset::parse(spec);
  if (ds.classes != cfg.num_classes) {
    throw ConfigError(fmt::format("eval: dataset has {} classes, model '{}' predicts {}",
                                  ds.classes, cfg.name, cfg.num_classes));
  }
  int64_t begin = ds.train, end = ds.total();
  if (a.split == "train") {
    begin = 0;
    end = ds.train;
  } else if (a.split == "all") {
    begin = 0;
  }
  int batch = 64;
  if (auto it = ck.meta.find("train.batch_size"); it != ck.meta.end()) batch = std::stoi(it->second);
  const double acc = evaluate(ck.model, ds, begin, end, batch);
  fmt::print(env.out, "model {} data {} split {} samples {}\n", cfg.name, ds.str(), a.split,
             end - begin);
  fmt::print(env.out, "accuracy {}\n", acc);
  return kOk;
}

struct GradArgs {
  std::string module = "all";
  uint64_t seed = 0;
};

int cmd_gradcheck(const GradArgs& a, Env& env) {
  GradcheckOptions opt;
  opt.seed = a.seed;
  opt.corrupt_analytic = env.gradcheck_corruption;
  fmt::print(env.out, "seed {}\n", a.seed);
  const GradcheckReport rep = run_gradcheck(a.module, opt);
  env.out << rep.table();
  const GradcheckEntry* w = rep.worst();
  if (w != nullptr) {
    fmt::print(env.out, "worst {} {} {:.4e}\n", w->suite, w->param, w->rel_error);
  }
  if (!rep.passed()) {
    fmt::print(env.err, "gradcheck failed: {} in {} has relative error {:.4e} >= {}\n",
               w->param, w->suite, w->rel_error, rep.tolerance);
    return kVerificationFailed;
  }
  env.out << "all gradients within tolerance\n";
  return kOk;
}

struct NormImageArgs {
  std::vector<std::string> inputs;
  std::vector<double> weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::string out;
};

int cmd_norm_image(const NormImageArgs& a, Env& env) {
  if (a.inputs.size() < 2) {
    throw DegenerateError(
        "norm-image: batch normalization needs at least two images; with one image "
        "its per-channel statistics collapse to that image's own mean and variance");
  }
  if (a.weights.size() != 3) throw ConfigError("norm-image: --weights takes wb,wl,wi");
  std::vector<Image> images;
  for (const auto& p : a.inputs) {
    require_file(p, "image");
    images.push_back(read_pnm(p));
  }
  const Tensor<float> x = images_to_tensor(images);
  const auto norm = normalize_image_grid<float>(x, {a.weights[0], a.weights[1], a.weights[2]});
  const std::pair<const char*, const Tensor<float>*> outputs[] = {
      {"bn", &norm.bn}, {"ln", &norm.ln}, {"in", &norm.in}, {"mvn", &norm.composite}};
  for (size_t i = 0; i < a.inputs.size(); ++i) {
    const fs::path dir = fs::path(a.out) / fmt::format("{}_{}", i, fs::path(a.inputs[i]).stem().string());
    fs::create_directories(dir);
    for (const auto& [name, t] : outputs) {
      const Tensor<float> shown = rescale_per_image(*t);
      const fs::path file = dir / (std::string(name) + (x.shape().c == 3 ? ".ppm" : ".pgm"));
      write_pnm(file, tensor_to_image(shown, static_cast<int64_t>(i)));
      fmt::print(env.out, "wrote {}\n", file.string());
    }
  }
  return kOk;
}

struct AlphaArgs {
  std::string checkpoint;
  std::string csv;
};

int cmd_dump_alphas(const AlphaArgs& a, Env& env) {
  require_file(a.checkpoint, "checkpoint");
  const LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  const AlphaProfile prof = dump_alpha_profile(ck.model);
  const std::string csv = prof.to_csv();
  if (a.csv.empty()) {
    env.out << csv;
  } else {
    write_text(a.csv, csv);
    fmt::print(env.out, "wrote {} rows to {}\n", prof.rows.size(), a.csv);
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, Env& env) {
  CLI::App app{"MVFormer kit: counting, training, evaluation and analysis", "mvformer"};
  app.require_subcommand(1);

  CountArgs count;
  auto* c = app.add_subcommand("count", "Parameter and MAC counts for a preset");
  c->add_option("--preset", count.preset, "xT, T, S, B or micro")->required();
  c->add_option("--input-size", count.input_size, "Square input side")->check(CLI::PositiveNumber);
  c->add_option("--csv", count.csv, "Write per-module rows to this CSV");

  CountArgs ablate;
  auto* ab = app.add_subcommand("ablate-count", "Counts for a token-mixer ablation");
  ab->add_option("--preset", ablate.preset, "xT, T, S, B or micro")->required();
  ab->add_option("--ablation", ablate.ablation,
                 "none, no-stage-split, no-stage-global, no-stage-both, drop-local, "
                 "drop-intermediate, drop-global")->required();
  ab->add_option("--input-size", ablate.input_size, "Square input side")->check(CLI::PositiveNumber);
  ab->add_option("--csv", ablate.csv, "Write per-module rows to this CSV");

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "Train on the synthetic dataset");
  tr->add_option("--config", train.config, "Config file ([model], [train], [data])");
  tr->add_option("--out", train.out, "Output directory");
  tr->add_option("--seed", train.seed, "Overrides train.seed");
  tr->add_option("--epochs", train.epochs, "Overrides train.epochs");
  tr->add_option("--batch-size", train.batch_size, "Overrides train.batch_size");
  tr->add_option("--lr", train.lr, "Overrides train.base_lr");
  tr->add_option("--data", train.data, "Overrides the dataset, e.g. synthetic:seed=1,classes=4");

  EvalArgs eval;
  auto* ev = app.add_subcommand("eval", "Accuracy of a checkpoint");
  ev->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", eval.data, "Dataset spec; defaults to the one stored in the checkpoint");
  ev->add_option("--preset", eval.preset, "Expected model preset");
  ev->add_option("--split", eval.split, "val, train or all")->check(CLI::IsMember({"val", "train", "all"}));

  GradArgs grad;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--module", grad.module, "all, mvn, mvtm, block or model")
      ->check(CLI::IsMember({"all", "mvn", "mvtm", "block", "model"}));
  gc->add_option("--seed", grad.seed, "Seed for inputs and probes");

  NormImageArgs ni;
  auto* nm = app.add_subcommand("norm-image", "BN/LN/IN/composite views of images");
  nm->add_option("--in", ni.inputs, "Two or more PPM/PGM files of equal size")->required();
  nm->add_option("--weights", ni.weights, "Composite weights wb,wl,wi")->delimiter(',')->expected(3);
  nm->add_option("--out", ni.out, "Output directory")->required();

  AlphaArgs al;
  auto* da = app.add_subcommand("dump-alphas", "Per-site MVN view weights as CSV");
  da->add_option("--checkpoint", al.checkpoint, "Checkpoint file")->required();
  da->add_option("--csv", al.csv, "Output CSV (stdout if omitted)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, env.out, env.err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, env.out, env.err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, env.out, env.err);
    return kUsageError;
  }

  try {
    if (c->parsed()) return cmd_count(count, env);
    if (ab->parsed()) return cmd_count(ablate, env);
    if (tr->parsed()) return cmd_train(train, env);
    if (ev->parsed()) return cmd_eval(eval, env);
    if (gc->parsed()) return cmd_gradcheck(grad, env);
    if (nm->parsed()) return cmd_norm_image(ni, env);
    if (da->parsed()) return cmd_dump_alphas(al, env);
  } catch (const NumericError& e) {
    fmt::print(env.err, "numeric abort: {}\n", e.what());
    return kNumericAbort;
  } catch (const std::exception& e) {
    fmt::print(env.err, "error: {}\n", e.what());
    if (c->parsed() || ab->parsed()) {
      fmt::print(env.err, "presets: {}\n", fmt::join(preset_names(), ", "));
    }
    return kUsageError;
  }
  return kUsageError;
}

}  // namespace mvformer::cli

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
#include "mvformer/train.h"

#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "mvformer/checkpoint.h"
#include "mvformer/dataset.h"

namespace mvformer {
namespace {

int argmax_row(const Tensor<float>& logits, int64_t n) {
  const int64_t k = logits.shape().c;
  const float* row = logits.data() + n * k;
  return static_cast<int>(std::max_element(row, row + k) - row);
}

std::vector<int64_t> shuffled_range(int64_t count, uint64_t seed) {
  std::vector<int64_t> idx(static_cast<size_t>(count));
  std::iota(idx.begin(), idx.end(), int64_t{0});
  Rng rng(seed);
  for (size_t i = idx.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::map<std::string, std::string> run_meta(const TrainConfig& cfg, int epoch) {
  std::map<std::string, std::string> meta;
  for (const auto& [k, v] : train_fields(cfg)) meta["train." + k] = v;
  meta["train.data"] = cfg.data.str();
  meta["train.epoch"] = fmt::format("{}", epoch);
  return meta;
}

}  // namespace

std::string metrics_row(const EpochMetrics& m) {
  return fmt::format("{},{},{},{},{}", m.epoch, m.lr, m.train_loss, m.train_acc,
                     m.val_acc);
}

double evaluate(Model<float>& model, const SyntheticDataset& ds, int64_t begin,
                int64_t end, int batch_size) {
  if (begin >= end) return 0.0;
  int64_t correct = 0;
  std::vector<int64_t> idx;
  for (int64_t s = begin; s < end; s += batch_size) {
    idx.clear();
    for (int64_t i = s; i < std::min(end, s + batch_size); ++i) idx.push_back(i);
    const Batch b = generate_batch(ds, idx);
    const Tensor<float> logits = predict(model, b.images, Mode::kEval);
    for (size_t n = 0; n < idx.size(); ++n) {
      correct += argmax_row(logits, static_cast<int64_t>(n)) == b.labels[n];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(end - begin);
}

double batch_loss(Model<float>& model, const SyntheticDataset& ds,
                  std::span<const int64_t> indices, double smoothing) {
  const Batch b = generate_batch(ds, indices);
  Tape<float> t;
  t.set_grad_enabled(false);
  Rng rng(0);
  ForwardContext ctx{Mode::kTrain, &rng};
  Var logits = model_forward(t, t.constant(b.images), model, ctx);
  Var loss = ops::cross_entropy(t, logits, std::span<const int>(b.labels),
                                static_cast<float>(smoothing));
  return t.value(loss).item();
}

TrainResult train_loop(Model<float>& model, const TrainConfig& cfg,
                       const EpochCallback& on_epoch) {
  cfg.validate();
  if (cfg.data.classes != model.config.num_classes) {
    throw ConfigError(fmt::format("train: dataset has {} classes but model {} has {}",
                                  cfg.data.classes, model.config.name,
                                  model.config.num_classes));
  }
  std::filesystem::create_directories(cfg.out_dir);
  const auto metrics_path = cfg.out_dir / "metrics.csv";
  const auto last_path = cfg.out_dir / "last.ckpt";
  const auto best_path = cfg.out_dir / "best.ckpt";

  const std::vector<Param<float>*> params = model.parameters();
  TrainResult res;
  res.optimizer = OptimState<float>::init(params, AdamWConfig{cfg.base_lr, 0.9, 0.999, 1e-8,
                                                             cfg.weight_decay});
  OptimState<float>& opt = res.optimizer;

  std::ofstream csv(metrics_path, std::ios::trunc);
  if (!csv) throw IoError("cannot write " + metrics_path.string());
  csv << kMetricsHeader << '\n' << std::flush;

  save_checkpoint(last_path, model, &opt, run_meta(cfg, 0));
  if (cfg.epochs == 0) {
    save_checkpoint(best_path, model, &opt, run_meta(cfg, 0));
    return res;
  }

  const int64_t steps_per_epoch = (cfg.data.train + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;
  const int64_t warmup_steps = steps_per_epoch * cfg.warmup_epochs;
  const float smoothing = static_cast<float>(cfg.label_smoothing);
  int64_t step = 0;
  res.best_val_acc = -1.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled_range(cfg.data.train, derive_seed(cfg.seed, epoch));
    double loss_sum = 0.0;
    int64_t correct = 0;
    EpochMetrics m;
    m.epoch = epoch;
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      const size_t lo = static_cast<size_t>(s * cfg.batch_size);
      const size_t hi = std::min(order.size(), lo + static_cast<size_t>(cfg.batch_size));
      const std::span<const int64_t> idx(order.data() + lo, hi - lo);
      const Batch b = generate_batch(cfg.data, idx);

      Rng drop_rng(derive_seed(cfg.seed ^ 0x64726f70ull, static_cast<uint64_t>(step)));
      ForwardContext ctx{Mode::kTrain, &drop_rng};
      Tape<float> t;
      Var logits = model_forward(t, t.constant(b.images), model, ctx);
      Var loss = ops::cross_entropy(t, logits, std::span<const int>(b.labels), smoothing);
      const double loss_value = t.value(loss).item();
      if (!std::isfinite(loss_value)) {
        throw NumericError(fmt::format("train: non-finite loss at epoch {} step {}",
                                       epoch, step));
      }
      const Tensor<float>& lv = t.value(logits);
      for (size_t n = 0; n < idx.size(); ++n) {
        correct += argmax_row(lv, static_cast<int64_t>(n)) == b.labels[n];
      }
      loss_sum += loss_value * static_cast<double>(idx.size());

      model.zero_grad();
      t.backward(loss);
      ++step;
      m.lr = cosine_lr(step, total_steps, warmup_steps, cfg.base_lr);
      adamw_step(std::span<Param<float>* const>(params), opt, m.lr);
    }
    const auto n_train = static_cast<double>(cfg.data.train);
    m.train_loss = loss_sum / n_train;
    m.train_acc = static_cast<double>(correct) / n_train;
    m.val_acc = cfg.data.val > 0
                    ? evaluate(model, cfg.data, cfg.data.train, cfg.data.total(), cfg.batch_size)
                    : m.train_acc;
    res.history.push_back(m);
    csv << metrics_row(m) << '\n' << std::flush;

    const auto meta = run_meta(cfg, epoch);
    save_checkpoint(last_path, model, &opt, meta);
    if (m.val_acc > res.best_val_acc) {
      res.best_val_acc = m.val_acc;
      res.best_epoch = epoch;
      save_checkpoint(best_path, model, &opt, meta);
    }
    if (on_epoch) on_epoch(m);
  }
  return res;
}

}  // namespace mvformer

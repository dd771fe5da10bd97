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
#include "mvformer/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "mvformer/model.h"
#include "mvformer/normalization.h"
#include "mvformer/ops.h"
#include "mvformer/random.h"
#include "mvformer/token_mixer.h"

namespace mvformer {
namespace {

constexpr double kRelFloor = 1e-8;

Tensor<double> random_tensor(Shape s, double stddev, Rng& rng) {
  Tensor<double> t(s);
  for (double& v : t.span()) v = stddev * standard_normal(rng);
  return t;
}

// Weighted sum with fixed random weights, so every output element carries a
// distinct upstream gradient.
Var probe_loss(Tape<double>& t, Var y, const Tensor<double>& weights) {
  return ops::sum(t, ops::mul(t, y, t.constant(weights)));
}

double eval_loss(const LossFn& loss) {
  Tape<double> t;
  t.set_grad_enabled(false);
  Var l = loss(t);
  return t.value(l).item();
}

std::vector<int64_t> probe_indices(int64_t numel, int max_samples, Rng& rng) {
  std::vector<int64_t> idx(static_cast<size_t>(numel));
  std::iota(idx.begin(), idx.end(), int64_t{0});
  if (numel <= max_samples) return idx;
  for (int i = 0; i < max_samples; ++i) {
    const auto j = static_cast<size_t>(i) +
                   static_cast<size_t>(rng() % static_cast<uint64_t>(numel - i));
    std::swap(idx[static_cast<size_t>(i)], idx[j]);
  }
  idx.resize(static_cast<size_t>(max_samples));
  std::sort(idx.begin(), idx.end());
  return idx;
}

GradcheckReport mvn_suite(const GradcheckOptions& opt) {
  Rng rng(derive_seed(opt.seed, 1));
  auto st = MvnState<double>::make(8, "mvn");
  // Move away from the identity init so each view contributes differently.
  for (Param<double>* p : {&st.alpha_bn, &st.alpha_ln, &st.alpha_in, &st.gamma, &st.beta}) {
    for (double& v : p->value.span()) v += 0.3 * standard_normal(rng);
  }
  Param<double> input("input", random_tensor({4, 8, 5, 5}, 1.0, rng), false);
  const Tensor<double> w = random_tensor({4, 8, 5, 5}, 1.0, rng);
  std::vector<Param<double>*> params = {&input};
  st.for_each_param([&](Param<double>& p) { params.push_back(&p); });
  return check_gradients("mvn", params, [&](Tape<double>& t) {
    return probe_loss(t, mvn(t, t.param(input), st, Mode::kTrain), w);
  }, opt);
}

GradcheckReport mvtm_suite(const GradcheckOptions& opt) {
  GradcheckReport rep;
  rep.tolerance = opt.tolerance;
  for (int stage = 1; stage <= 4; ++stage) {
    Rng rng(derive_seed(opt.seed, 10 + stage));
    const StageSpec spec = make_stage_spec(stage, 8);
    auto p = MvtmParams<double>::make(spec, "mixer", rng);
    // Nonzero biases keep the StarReLU inputs off the symmetric init.
    p.for_each_param([&](Param<double>& q) {
      if (q.value.numel() > 1) {
        for (double& v : q.value.span()) v += 0.1 * standard_normal(rng);
      }
    });
    Param<double> input("input", random_tensor({2, 8, 5, 5}, 1.0, rng), false);
    const Tensor<double> w = random_tensor({2, 8, 5, 5}, 1.0, rng);
    std::vector<Param<double>*> params = {&input};
    p.for_each_param([&](Param<double>& q) { params.push_back(&q); });
    rep.append(check_gradients(fmt::format("mvtm.stage{}", stage), params,
                               [&](Tape<double>& t) {
                                 return probe_loss(t, mvtm_forward(t, t.param(input), p, spec), w);
                               }, opt));
  }
  return rep;
}

GradcheckReport block_suite(const GradcheckOptions& opt) {
  ModelConfig cfg = preset("micro");
  cfg.embed_dims = {8, 8, 8, 8};
  cfg.depths = {1, 1, 1, 1};
  auto model = build_model<double>(cfg, derive_seed(opt.seed, 20));
  Block<double>& blk = model.stages[2].blocks.front();
  Rng rng(derive_seed(opt.seed, 21));
  blk.for_each_param([&](Param<double>& q) {
    if (q.value.numel() > 1) {
      for (double& v : q.value.span()) v += 0.1 * standard_normal(rng);
    }
  });
  Param<double> input("input", random_tensor({2, 8, 5, 5}, 1.0, rng), false);
  const Tensor<double> w = random_tensor({2, 8, 5, 5}, 1.0, rng);
  std::vector<Param<double>*> params = {&input};
  blk.for_each_param([&](Param<double>& q) { params.push_back(&q); });
  const ForwardContext ctx{Mode::kTrain, nullptr};
  return check_gradients("block", params, [&](Tape<double>& t) {
    return probe_loss(t, block_forward(t, t.param(input), blk, ctx), w);
  }, opt);
}

GradcheckReport model_suite(const GradcheckOptions& opt) {
  auto model = build_model<double>(preset("micro"), derive_seed(opt.seed, 30));
  Rng rng(derive_seed(opt.seed, 31));
  // At the 0.02-std init a step of 1e-3 is a 5% weight change and the
  // central difference is dominated by curvature, so probe a generic point.
  model.for_each_param([&](Param<double>& q) {
    if (q.value.numel() > 1) {
      for (double& v : q.value.span()) v += 0.1 * standard_normal(rng);
    }
  });
  Param<double> input("input", Tensor<double>(Shape{4, 3, 32, 32}), false);
  for (double& v : input.value.span()) v = uniform01(rng);
  const std::vector<int> targets = {1, 3, 0, 2};
  std::vector<Param<double>*> params = {&input};
  model.for_each_param([&](Param<double>& q) { params.push_back(&q); });
  GradcheckOptions o = opt;
  o.max_samples = std::min(opt.max_samples, 6);
  const ForwardContext ctx{Mode::kTrain, nullptr};
  return check_gradients("model", params, [&](Tape<double>& t) {
    Var logits = model_forward(t, t.param(input), model, ctx);
    return ops::cross_entropy(t, logits, std::span<const int>(targets), 0.1);
  }, o);
}

}  // namespace

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(),
                     [&](const GradcheckEntry& e) { return e.rel_error < tolerance; });
}

const GradcheckEntry* GradcheckReport::worst() const {
  auto it = std::max_element(entries.begin(), entries.end(),
                             [](const GradcheckEntry& a, const GradcheckEntry& b) {
                               return a.rel_error < b.rel_error;
                             });
  return it == entries.end() ? nullptr : &*it;
}

std::string GradcheckReport::table() const {
  std::string s = fmt::format("{:<14} {:<44} {:>7} {:>12}  {}\n", "suite", "param",
                              "samples", "rel_error", "result");
  for (const auto& e : entries) {
    s += fmt::format("{:<14} {:<44} {:>7} {:>12.4e}  {}\n", e.suite, e.param, e.samples,
                     e.rel_error, e.rel_error < tolerance ? "ok" : "FAIL");
  }
  return s;
}

void GradcheckReport::append(const GradcheckReport& other) {
  entries.insert(entries.end(), other.entries.begin(), other.entries.end());
}

GradcheckReport check_gradients(const std::string& suite,
                                const std::vector<Param<double>*>& params,
                                const LossFn& loss, const GradcheckOptions& opt) {
  for (Param<double>* p : params) p->zero_grad();
  {
    Tape<double> t;
    t.backward(loss(t));
  }
  if (opt.corrupt_analytic) {
    for (Param<double>* p : params) opt.corrupt_analytic(*p);
  }

  GradcheckReport rep;
  rep.tolerance = opt.tolerance;
  uint64_t key = 0;
  for (char c : suite) key = splitmix64(key ^ static_cast<uint8_t>(c));
  Rng rng(derive_seed(opt.seed, key));
  for (Param<double>* p : params) {
    GradcheckEntry e{suite, p->name, 0, 0, 0};
    double max_diff = 0, max_a = 0, max_n = 0;
    for (int64_t i : probe_indices(p->value.numel(), opt.max_samples, rng)) {
      double& w = p->value.data()[i];
      const double saved = w;
      w = saved + opt.step;
      const double up = eval_loss(loss);
      w = saved - opt.step;
      const double down = eval_loss(loss);
      w = saved;
      const double numeric = (up - down) / (2 * opt.step);
      const double analytic = p->grad.data()[i];
      max_diff = std::max(max_diff, std::abs(analytic - numeric));
      max_a = std::max(max_a, std::abs(analytic));
      max_n = std::max(max_n, std::abs(numeric));
      ++e.samples;
    }
    e.max_abs_grad = max_a;
    e.rel_error = max_diff / std::max({max_a, max_n, kRelFloor});
    rep.entries.push_back(e);
  }
  return rep;
}

std::vector<std::string> gradcheck_modules() {
  return {"mvn", "mvtm", "block", "model"};
}

GradcheckReport run_gradcheck(std::string_view module, const GradcheckOptions& opt) {
  if (module == "mvn") return mvn_suite(opt);
  if (module == "mvtm") return mvtm_suite(opt);
  if (module == "block") return block_suite(opt);
  if (module == "model") return model_suite(opt);
  if (module == "all") {
    GradcheckReport rep;
    rep.tolerance = opt.tolerance;
    for (const auto& m : gradcheck_modules()) rep.append(run_gradcheck(m, opt));
    return rep;
  }
  throw ConfigError(fmt::format("gradcheck: unknown module '{}'", module));
}

}  // namespace mvformer

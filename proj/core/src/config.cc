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
#include "mvformer/config.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

namespace mvformer {
namespace {

template <typename N>
N parse_number(std::string_view key, std::string_view text) {
  N v{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(fmt::format("config: bad value '{}' for {}", text, key));
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw ConfigError(fmt::format("config: bad boolean '{}' for {}", text, key));
}

template <typename N, size_t K>
std::array<N, K> parse_list(std::string_view key, std::string_view text) {
  std::array<N, K> out{};
  size_t i = 0;
  while (true) {
    const size_t comma = text.find(',');
    if (i == K) {
      throw ConfigError(fmt::format("config: {} takes {} values", key, K));
    }
    out[i++] = parse_number<N>(key, text.substr(0, comma));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (i != K) throw ConfigError(fmt::format("config: {} takes {} values", key, K));
  return out;
}

std::string bools(const std::array<bool, 4>& b) {
  return fmt::format("{},{},{},{}", int(b[0]), int(b[1]), int(b[2]), int(b[3]));
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(base_lr > 0)) throw ConfigError("train: base_lr must be positive");
  if (warmup_epochs < 0 || (epochs > 0 && warmup_epochs >= epochs)) {
    throw ConfigError(fmt::format(
        "train: warmup_epochs {} must be below epochs {}", warmup_epochs, epochs));
  }
  if (weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
  if (label_smoothing < 0 || label_smoothing >= 1) {
    throw ConfigError("train: label_smoothing must be in [0, 1)");
  }
  if (drop_path_rate && (*drop_path_rate < 0 || *drop_path_rate >= 1)) {
    throw ConfigError("train: drop_path_rate must be in [0, 1)");
  }
  data.validate();
}

Fields model_fields(const ModelConfig& c) {
  return {
      {"name", c.name},
      {"embed_dims", fmt::format("{}", fmt::join(c.embed_dims, ","))},
      {"depths", fmt::format("{}", fmt::join(c.depths, ","))},
      {"mlp_ratio", fmt::format("{}", c.mlp_ratio)},
      {"head_ratio", fmt::format("{}", c.head_ratio)},
      {"num_classes", fmt::format("{}", c.num_classes)},
      {"in_channels", fmt::format("{}", c.in_channels)},
      {"drop_path_rate", fmt::format("{}", c.drop_path_rate)},
      {"res_scale", bools(c.res_scale)},
      {"block_norm", std::string(to_string(c.block_norm))},
      {"ablation", std::string(to_string(c.ablation))},
      {"stem", fmt::format("{},{},{}", c.stem_kernel, c.stem_stride, c.stem_pad)},
      {"down", fmt::format("{},{},{}", c.down_kernel, c.down_stride, c.down_pad)},
  };
}

void set_model_field(ModelConfig& c, std::string_view key,
                     std::string_view value) {
  if (key == "preset") {
    c = preset(value);
  } else if (key == "name") {
    c.name = value;
  } else if (key == "embed_dims") {
    c.embed_dims = parse_list<int64_t, 4>(key, value);
  } else if (key == "depths") {
    c.depths = parse_list<int, 4>(key, value);
  } else if (key == "mlp_ratio") {
    c.mlp_ratio = parse_number<int>(key, value);
  } else if (key == "head_ratio") {
    c.head_ratio = parse_number<int>(key, value);
  } else if (key == "num_classes") {
    c.num_classes = parse_number<int>(key, value);
  } else if (key == "in_channels") {
    c.in_channels = parse_number<int>(key, value);
  } else if (key == "drop_path_rate") {
    c.drop_path_rate = parse_number<double>(key, value);
  } else if (key == "res_scale") {
    const auto v = parse_list<int, 4>(key, value);
    for (size_t i = 0; i < 4; ++i) c.res_scale[i] = parse_bool(key, std::to_string(v[i]));
  } else if (key == "block_norm") {
    c.block_norm = parse_block_norm(value);
  } else if (key == "ablation") {
    c.ablation = parse_ablation(value);
  } else if (key == "stem") {
    const auto v = parse_list<int, 3>(key, value);
    c.stem_kernel = v[0];
    c.stem_stride = v[1];
    c.stem_pad = v[2];
  } else if (key == "down") {
    const auto v = parse_list<int, 3>(key, value);
    c.down_kernel = v[0];
    c.down_stride = v[1];
    c.down_pad = v[2];
  } else {
    throw ConfigError(fmt::format("config: unknown model key '{}'", key));
  }
}

Fields train_fields(const TrainConfig& c) {
  Fields f = {
      {"epochs", fmt::format("{}", c.epochs)},
      {"batch_size", fmt::format("{}", c.batch_size)},
      {"base_lr", fmt::format("{}", c.base_lr)},
      {"warmup_epochs", fmt::format("{}", c.warmup_epochs)},
      {"weight_decay", fmt::format("{}", c.weight_decay)},
      {"label_smoothing", fmt::format("{}", c.label_smoothing)},
      {"seed", fmt::format("{}", c.seed)},
  };
  if (c.drop_path_rate) f.emplace_back("drop_path_rate", fmt::format("{}", *c.drop_path_rate));
  return f;
}

void set_train_field(TrainConfig& c, std::string_view key,
                     std::string_view value) {
  if (key == "epochs") {
    c.epochs = parse_number<int>(key, value);
  } else if (key == "batch_size") {
    c.batch_size = parse_number<int>(key, value);
  } else if (key == "base_lr") {
    c.base_lr = parse_number<double>(key, value);
  } else if (key == "warmup_epochs") {
    c.warmup_epochs = parse_number<int>(key, value);
  } else if (key == "weight_decay") {
    c.weight_decay = parse_number<double>(key, value);
  } else if (key == "label_smoothing") {
    c.label_smoothing = parse_number<double>(key, value);
  } else if (key == "drop_path_rate") {
    c.drop_path_rate = parse_number<double>(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<uint64_t>(key, value);
  } else if (key == "out_dir") {
    c.out_dir = std::string(value);
  } else {
    throw ConfigError(fmt::format("config: unknown train key '{}'", key));
  }
}

RunConfig parse_run_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config: line {}: {}", e.line(), e.message()));
  }
  RunConfig run;
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) {
      throw ConfigError(fmt::format("config: key '{}' outside a section", section));
    }
    if (section == "model") {
      if (auto p = body.get_optional<std::string>("preset")) {
        set_model_field(run.model, "preset", *p);
      }
      for (const auto& [key, v] : body) {
        if (key != "preset") set_model_field(run.model, key, v.data());
      }
    } else if (section == "train") {
      for (const auto& [key, v] : body) set_train_field(run.train, key, v.data());
    } else if (section == "data") {
      std::string spec = "synthetic:";
      for (const auto& [key, v] : body) {
        if (spec.back() != ':') spec += ',';
        spec += key + "=" + v.data();
      }
      run.train.data = SyntheticDataset::parse(spec);
    } else {
      throw ConfigError(fmt::format("config: unknown section '{}'", section));
    }
  }
  if (run.train.drop_path_rate) run.model.drop_path_rate = *run.train.drop_path_rate;
  run.model.validate();
  run.train.validate();
  return run;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace mvformer

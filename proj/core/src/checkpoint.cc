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
#include "mvformer/checkpoint.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "mvformer/config.h"

namespace mvformer {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr uint8_t kDtypeF32 = 0;
constexpr uint64_t kFnvOffset = 14695981039346656037ull;
constexpr uint64_t kFnvPrime = 1099511628211ull;

uint64_t fnv1a(std::span<const uint8_t> bytes) {
  uint64_t h = kFnvOffset;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= kFnvPrime;
  }
  return h;
}

class Writer {
 public:
  template <typename U>
  void put(U v) {
    uint8_t raw[sizeof(U)];
    std::memcpy(raw, &v, sizeof(U));
    out.insert(out.end(), raw, raw + sizeof(U));
  }
  void put_bytes(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> b) : bytes_(b) {}

  template <typename U>
  U get() {
    U v;
    std::memcpy(&v, take(sizeof(U)).data(), sizeof(U));
    return v;
  }
  std::span<const uint8_t> take(size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw IntegrityError(fmt::format(
          "checkpoint: truncated at byte {} (need {} more)", pos_, n));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

std::string meta_text(const std::map<std::string, std::string>& meta) {
  std::string s;
  for (const auto& [k, v] : meta) {
    if (k.find_first_of("=\n") != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw FormatError("checkpoint: meta entry '" + k + "' is not encodable");
    }
    s += k + "=" + v + "\n";
  }
  return s;
}

std::string require_meta(const CheckpointData& c, const std::string& key) {
  auto it = c.meta.find(key);
  if (it == c.meta.end()) throw FormatError("checkpoint: missing meta " + key);
  return it->second;
}

double meta_double(const CheckpointData& c, const std::string& key) {
  const std::string v = require_meta(c, key);
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw FormatError(fmt::format("checkpoint: bad number '{}' for {}", v, key));
}

void copy_checked(Tensor<float>& dst, const CheckpointData& c,
                  const std::string& key) {
  const Tensor<float>* src = c.find(key);
  if (src == nullptr) throw DimensionError("checkpoint: missing tensor " + key);
  if (src->shape() != dst.shape()) {
    throw DimensionError(fmt::format("checkpoint: {} has shape {} but model expects {}",
                                     key, src->shape().str(), dst.shape().str()));
  }
  dst = *src;
}

}  // namespace

const Tensor<float>* CheckpointData::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::vector<uint8_t> encode_checkpoint(const CheckpointData& ckpt) {
  Writer w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put<uint32_t>(kCheckpointVersion);
  const std::string meta = meta_text(ckpt.meta);
  w.put<uint32_t>(static_cast<uint32_t>(meta.size()));
  w.put_bytes(meta.data(), meta.size());
  w.put<uint32_t>(static_cast<uint32_t>(ckpt.tensors.size()));
  uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.size() > 0xffff) throw FormatError("checkpoint: tensor name too long");
    w.put<uint16_t>(static_cast<uint16_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<uint8_t>(kDtypeF32);
    w.put<uint8_t>(4);
    for (int i = 0; i < 4; ++i) w.put<uint64_t>(static_cast<uint64_t>(t.shape()[i]));
    const uint64_t bytes = static_cast<uint64_t>(t.numel()) * sizeof(float);
    w.put<uint64_t>(offset);
    w.put<uint64_t>(bytes);
    offset += bytes;
  }
  for (const auto& [name, t] : ckpt.tensors) {
    w.put_bytes(t.data(), static_cast<size_t>(t.numel()) * sizeof(float));
  }
  w.put<uint64_t>(fnv1a(w.out));
  return std::move(w.out);
}

CheckpointData decode_checkpoint(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic, not an MVFK file");
  }
  r.take(4);
  const auto version = r.get<uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(fmt::format("checkpoint: unsupported version {}", version));
  }
  if (bytes.size() < sizeof(uint64_t) + 8) {
    throw IntegrityError("checkpoint: truncated header");
  }
  CheckpointData c;
  const auto meta_len = r.get<uint32_t>();
  const auto meta = r.take(meta_len);
  std::string_view text(reinterpret_cast<const char*>(meta.data()), meta.size());
  while (!text.empty()) {
    const size_t nl = text.find('\n');
    if (nl == std::string_view::npos) throw IntegrityError("checkpoint: unterminated meta line");
    const std::string_view line = text.substr(0, nl);
    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw IntegrityError("checkpoint: malformed meta line");
    c.meta.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
    text.remove_prefix(nl + 1);
  }

  struct Entry {
    std::string name;
    Shape shape;
    uint64_t offset, size;
  };
  std::vector<Entry> entries(r.get<uint32_t>());
  for (Entry& e : entries) {
    const auto name = r.take(r.get<uint16_t>());
    e.name.assign(name.begin(), name.end());
    const auto dtype = r.get<uint8_t>();
    const auto rank = r.get<uint8_t>();
    if (dtype != kDtypeF32 || rank != 4) {
      throw FormatError(fmt::format("checkpoint: {} has unsupported dtype/rank", e.name));
    }
    int64_t dims[4];
    for (int64_t& d : dims) {
      const auto v = r.get<uint64_t>();
      if (v > (uint64_t{1} << 40)) throw IntegrityError("checkpoint: absurd dimension in " + e.name);
      d = static_cast<int64_t>(v);
    }
    e.shape = Shape{dims[0], dims[1], dims[2], dims[3]};
    e.offset = r.get<uint64_t>();
    e.size = r.get<uint64_t>();
    if (e.size != static_cast<uint64_t>(e.shape.numel()) * sizeof(float)) {
      throw IntegrityError("checkpoint: payload size disagrees with shape for " + e.name);
    }
  }
  const size_t payload_start = r.pos();
  if (bytes.size() < payload_start + sizeof(uint64_t)) {
    throw IntegrityError("checkpoint: truncated before payload");
  }
  const size_t payload_len = bytes.size() - payload_start - sizeof(uint64_t);
  uint64_t expected = 0;
  for (const Entry& e : entries) {
    if (e.offset != expected) throw IntegrityError("checkpoint: non-contiguous payload at " + e.name);
    expected += e.size;
  }
  if (expected != payload_len) {
    throw IntegrityError(fmt::format("checkpoint: payload is {} bytes, manifest describes {}",
                                     payload_len, expected));
  }
  uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - sizeof(uint64_t), sizeof(stored));
  if (stored != fnv1a(bytes.first(bytes.size() - sizeof(uint64_t)))) {
    throw IntegrityError("checkpoint: content hash mismatch");
  }
  for (const Entry& e : entries) {
    Tensor<float> t(e.shape);
    std::memcpy(t.data(), bytes.data() + payload_start + e.offset, e.size);
    c.tensors.emplace_back(e.name, std::move(t));
  }
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  // Write to a sibling and rename so a crash never leaves a torn file.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

CheckpointData make_checkpoint(const Model<float>& model,
                               const OptimState<float>* opt,
                               const std::map<std::string, std::string>& extra) {
  CheckpointData c;
  for (const auto& [k, v] : model_fields(model.config)) c.meta["model." + k] = v;
  for (const Param<float>* p : model.parameters()) {
    c.tensors.emplace_back("param/" + p->name, p->value);
  }
  for (const Buffer<float>* b : model.buffers()) {
    c.tensors.emplace_back("buffer/" + b->name, b->value);
  }
  if (opt != nullptr) {
    const AdamWConfig& oc = opt->config;
    c.meta["optim.step"] = fmt::format("{}", opt->step);
    c.meta["optim.lr"] = fmt::format("{}", oc.lr);
    c.meta["optim.beta1"] = fmt::format("{}", oc.beta1);
    c.meta["optim.beta2"] = fmt::format("{}", oc.beta2);
    c.meta["optim.eps"] = fmt::format("{}", oc.eps);
    c.meta["optim.weight_decay"] = fmt::format("{}", oc.weight_decay);
    for (size_t i = 0; i < opt->names.size(); ++i) {
      c.tensors.emplace_back("optim.m/" + opt->names[i], opt->m[i]);
    }
    for (size_t i = 0; i < opt->names.size(); ++i) {
      c.tensors.emplace_back("optim.v/" + opt->names[i], opt->v[i]);
    }
  }
  for (const auto& [k, v] : extra) c.meta[k] = v;
  return c;
}

ModelConfig checkpoint_model_config(const CheckpointData& ckpt) {
  ModelConfig cfg;
  bool any = false;
  for (const auto& [k, v] : ckpt.meta) {
    if (!k.starts_with("model.")) continue;
    set_model_field(cfg, std::string_view(k).substr(6), v);
    any = true;
  }
  if (!any) throw FormatError("checkpoint: no model configuration stored");
  cfg.validate();
  return cfg;
}

void restore_model(Model<float>& model, const CheckpointData& ckpt) {
  for (Param<float>* p : model.parameters()) copy_checked(p->value, ckpt, "param/" + p->name);
  for (Buffer<float>* b : model.buffers()) copy_checked(b->value, ckpt, "buffer/" + b->name);
}

std::optional<OptimState<float>> restore_optimizer(const Model<float>& model,
                                                   const CheckpointData& ckpt) {
  if (!ckpt.meta.contains("optim.step")) return std::nullopt;
  AdamWConfig oc;
  oc.lr = meta_double(ckpt, "optim.lr");
  oc.beta1 = meta_double(ckpt, "optim.beta1");
  oc.beta2 = meta_double(ckpt, "optim.beta2");
  oc.eps = meta_double(ckpt, "optim.eps");
  oc.weight_decay = meta_double(ckpt, "optim.weight_decay");
  OptimState<float> st;
  st.config = oc;
  st.step = static_cast<int64_t>(meta_double(ckpt, "optim.step"));
  for (const Param<float>* p : model.parameters()) {
    st.names.push_back(p->name);
    st.m.emplace_back(p->value.shape());
    st.v.emplace_back(p->value.shape());
    copy_checked(st.m.back(), ckpt, "optim.m/" + p->name);
    copy_checked(st.v.back(), ckpt, "optim.v/" + p->name);
  }
  return st;
}

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     const OptimState<float>* opt,
                     const std::map<std::string, std::string>& extra) {
  write_checkpoint(path, make_checkpoint(model, opt, extra));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const CheckpointData c = read_checkpoint(path);
  LoadedCheckpoint out{build_model<float>(checkpoint_model_config(c), 0), std::nullopt, c.meta};
  restore_model(out.model, c);
  out.optimizer = restore_optimizer(out.model, c);
  return out;
}

}  // namespace mvformer

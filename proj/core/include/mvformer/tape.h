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

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mvformer/tensor.h"

namespace mvformer {

// A named learnable tensor. `decay` marks whether AdamW applies decoupled
// weight decay to it.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool decay = false;

  Param() = default;
  Param(std::string name, Tensor<T> value, bool decay);

  void zero_grad() { grad.fill(T(0)); }
};

// Non-learnable persistent state (BN running statistics).
template <typename T>
struct Buffer {
  std::string name;
  Tensor<T> value;
};

// Handle to a node recorded on a Tape. Carries the id of the owning tape so
// that handles from a different graph are rejected instead of aliasing.
struct Var {
  uint32_t tape_id = 0;
  uint32_t index = std::numeric_limits<uint32_t>::max();

  bool valid() const { return index != std::numeric_limits<uint32_t>::max(); }
};

// Reverse-mode autodiff tape. Nodes are appended in execution order, which
// is a topological order by construction; backward walks them in reverse.
// Single writer; recorded values are never mutated afterwards.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var out)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // When disabled, every recorded node is a constant and no closures are
  // kept. Used for inference passes.
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor<T> value);
  Var leaf(Tensor<T> value);
  // Leaf whose gradient is accumulated into `p.grad` by backward(). The
  // parameter must outlive the tape.
  Var param(Param<T>& p);

  // Appends an op result. `fn` runs during backward only if the node ended up
  // requiring grad (some input did).
  Var record(Tensor<T> value, std::span<const Var> inputs, BackwardFn fn);

  const Tensor<T>& value(Var v) const;
  bool requires_grad(Var v) const;
  bool has_grad(Var v) const;
  const Tensor<T>& grad(Var v) const;
  // Zero-initialized on first access.
  Tensor<T>& grad_buffer(Var v);

  // Populates gradients of every leaf w.r.t. the scalar `loss`. Intermediate
  // gradients are released as soon as they are consumed unless
  // `retain_intermediate` is set. May run once per tape.
  void backward(Var loss, bool retain_intermediate = false);

  size_t size() const { return nodes_.size(); }
  uint32_t id() const { return id_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool is_leaf = false;
    Param<T>* param = nullptr;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  uint32_t id_;
  bool grad_enabled_ = true;
  bool backward_done_ = false;
  // deque: references returned by value() survive later records
  std::deque<Node> nodes_;
};

extern template struct Param<float>;
extern template struct Param<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace mvformer

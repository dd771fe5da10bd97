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
#include "mvformer/tape.h"

#include <atomic>

#include <fmt/format.h>

namespace mvformer {
namespace {

std::atomic<uint32_t> next_tape_id{1};

}  // namespace

template <typename T>
Param<T>::Param(std::string name, Tensor<T> value, bool decay)
    : name(std::move(name)),
      value(std::move(value)),
      grad(this->value.shape()),
      decay(decay) {}

template <typename T>
Tape<T>::Tape() : id_(next_tape_id.fetch_add(1)) {}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.tape_id != id_ || !v.valid() || v.index >= nodes_.size()) {
    throw MissingNodeError(
        fmt::format("variable (tape {}, node {}) is not recorded on tape {}",
                    v.tape_id, v.index, id_));
  }
  return nodes_[v.index];
}

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
  return const_cast<Node&>(std::as_const(*this).node(v));
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var{id_, static_cast<uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::leaf(Tensor<T> value) {
  Var v = constant(std::move(value));
  nodes_.back().requires_grad = grad_enabled_;
  return v;
}

template <typename T>
Var Tape<T>::param(Param<T>& p) {
  Var v = leaf(p.value);
  if (grad_enabled_) nodes_.back().param = &p;
  return v;
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::span<const Var> inputs,
                    BackwardFn fn) {
  bool needs_grad = false;
  for (Var in : inputs) needs_grad |= node(in).requires_grad;
  needs_grad &= grad_enabled_;
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs_grad;
  if (needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{id_, static_cast<uint32_t>(nodes_.size() - 1)};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  return node(v).value;
}

template <typename T>
bool Tape<T>::requires_grad(Var v) const {
  return node(v).requires_grad;
}

template <typename T>
bool Tape<T>::has_grad(Var v) const {
  const Node& n = node(v);
  return n.requires_grad && n.grad.shape() == n.value.shape();
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
  const Node& n = node(v);
  if (!n.requires_grad) {
    throw BackwardError(
        fmt::format("node {} does not require grad", v.index));
  }
  if (n.grad.shape() != n.value.shape()) {
    throw BackwardError(fmt::format(
        "gradient of node {} was not retained or never computed", v.index));
  }
  return n.grad;
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(Var v) {
  Node& n = node(v);
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var loss, bool retain_intermediate) {
  const Node& root = node(loss);
  if (backward_done_) {
    throw BackwardError("backward() already ran on this tape");
  }
  if (root.value.numel() != 1) {
    throw BackwardError("loss must be a scalar, got shape " +
                        root.value.shape().str());
  }
  if (!root.requires_grad) {
    throw BackwardError("loss does not depend on any gradient-tracked leaf");
  }
  backward_done_ = true;
  grad_buffer(loss)[0] = T(1);

  for (int64_t i = loss.index; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad || n.grad.shape() != n.value.shape()) continue;
    if (n.backward) {
      n.backward(*this, Var{id_, static_cast<uint32_t>(i)});
      n.backward = nullptr;
    }
    if (n.is_leaf) {
      if (n.param != nullptr) {
        auto& dst = n.param->grad.vec();
        const auto& src = n.grad.vec();
        for (size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    } else if (!retain_intermediate) {
      n.grad = Tensor<T>();
    }
  }
}

template struct Param<float>;
template struct Param<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace mvformer

// Copyright 2026 The conmamba Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "conmamba/autodiff.hpp"

#include <unordered_set>

#include "conmamba/errors.hpp"

namespace conmamba {
namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

void Tape::record(TapeNode node) {
  // Inputs are either leaves or outputs of earlier nodes; recording in call
  // order keeps the list topologically sorted.
  nodes_.push_back(std::move(node));
}

bool Tape::contains_output(const Tensor& t) const {
  for (const auto& n : nodes_) {
    if (n.output.same(t)) return true;
  }
  return false;
}

Tape* Tape::active() noexcept { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) {
  g_active_tape = nullptr;
}

NoGradScope::~NoGradScope() { g_active_tape = previous_; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

bool should_record(std::span<const Tensor> inputs) {
  if (!g_active_tape) return false;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

void record_op(std::string op, std::vector<Tensor> inputs, Tensor& output,
               BackwardFn backward) {
  if (!should_record(std::span<const Tensor>(inputs))) return;
  output.set_requires_grad(true);
  g_active_tape->record(
      TapeNode{std::move(op), std::move(inputs), output, std::move(backward)});
}

void backward(const Tensor& loss, Tape& tape) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape())
                                        : std::string("<undefined>")));
  }
  const auto& nodes = tape.nodes();
  std::size_t last = nodes.size();
  for (std::size_t i = nodes.size(); i-- > 0;) {
    if (nodes[i].output.same(loss)) {
      last = i;
      break;
    }
  }
  if (last == nodes.size()) {
    throw ContractError("backward: loss was not produced on this tape");
  }

  Tensor seed = loss;
  const double one = 1.0;
  seed.accumulate_grad(std::span<const double>(&one, 1));

  for (std::size_t i = last + 1; i-- > 0;) {
    const TapeNode& node = nodes[i];
    if (!node.output.has_grad()) continue;  // not on a path to the loss
    node.backward(node.output.grad());
  }
}

}  // namespace conmamba

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

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "conmamba/tensor.hpp"

namespace conmamba {

/// Backward rule of one recorded operation: receives the gradient of the
/// node's output and accumulates into the gradients of its inputs.
using BackwardFn = std::function<void(std::span<const double> output_grad)>;

struct TapeNode {
  std::string op;
  std::vector<Tensor> inputs;
  Tensor output;
  BackwardFn backward;
};

/// Ordered record of differentiable operations.
///
/// Operations record onto the tape that is active on the calling thread (see
/// TapeScope). With no active tape, operations are evaluated without
/// recording, which is how inference and finite-difference probes run.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(TapeNode node);
  const std::vector<TapeNode>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool contains_output(const Tensor& t) const;
  void clear() { nodes_.clear(); }

  /// Tape currently active on this thread, or nullptr.
  static Tape* active() noexcept;

 private:
  friend class TapeScope;
  std::vector<TapeNode> nodes_;
};

/// RAII guard that makes `tape` the active tape for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording for the current thread.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// True when an op with these inputs should be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);
bool should_record(std::span<const Tensor> inputs);

/// Records `backward` for `output` if any input requires a gradient and a
/// tape is active; marks `output` as requiring a gradient in that case.
void record_op(std::string op, std::vector<Tensor> inputs, Tensor& output,
               BackwardFn backward);

/// Reverse pass from a scalar `loss` that was produced on `tape`.
/// Gradients accumulate into every reachable tensor that requires one.
void backward(const Tensor& loss, Tape& tape);

}  // namespace conmamba

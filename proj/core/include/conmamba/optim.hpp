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

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "conmamba/tensor.hpp"

namespace conmamba {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moments per parameter, in parameter order. Empty for SGD.
struct OptimizerState {
  std::size_t steps = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// Updates a fixed list of parameters in place from their accumulated
/// gradients.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<Tensor> params);

  /// sgd: p ← p − η·g. adam: bias-corrected moments.
  /// Throws ContractError if a parameter has no gradient.
  void step();
  void zero_grad();

  const OptimizerConfig& config() const noexcept { return config_; }
  const OptimizerState& state() const noexcept { return state_; }
  void set_state(OptimizerState state);

 private:
  OptimizerConfig config_;
  std::vector<Tensor> params_;
  OptimizerState state_;
};

/// Scales gradients so their global L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace conmamba

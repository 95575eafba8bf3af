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

#include "conmamba/optim.hpp"

#include <cmath>

#include "conmamba/errors.hpp"

namespace conmamba {

Optimizer::Optimizer(OptimizerConfig config, std::vector<Tensor> params)
    : config_(config), params_(std::move(params)) {
  if (config_.kind == OptimizerKind::kAdam) {
    for (const Tensor& p : params_) {
      state_.first_moment.emplace_back(p.numel(), 0.0);
      state_.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
}

void Optimizer::set_state(OptimizerState state) {
  if (config_.kind == OptimizerKind::kAdam) {
    if (state.first_moment.size() != params_.size() ||
        state.second_moment.size() != params_.size()) {
      throw ContractError("optimizer state holds moments for " +
                          std::to_string(state.first_moment.size()) + " tensors, expected " +
                          std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (state.first_moment[i].size() != params_[i].numel() ||
          state.second_moment[i].size() != params_[i].numel()) {
        throw ContractError("optimizer moment size mismatch for tensor " + std::to_string(i));
      }
    }
  }
  state_ = std::move(state);
}

void Optimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw ContractError("optimizer: parameter " + std::to_string(i) + " of shape " +
                          shape_string(params_[i].shape()) + " has no gradient");
    }
  }
  ++state_.steps;
  const double lr = config_.lr;
  if (config_.kind == OptimizerKind::kSgd) {
    for (Tensor& p : params_) {
      auto data = p.mutable_data();
      auto grad = p.grad();
      for (std::size_t k = 0; k < data.size(); ++k) data[k] -= lr * grad[k];
    }
    return;
  }
  const double t = static_cast<double>(state_.steps);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto data = params_[i].mutable_data();
    auto grad = params_[i].grad();
    auto& m = state_.first_moment[i];
    auto& v = state_.second_moment[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * grad[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * grad[k] * grad[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      data[k] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void Optimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double ss = 0.0;
  for (const Tensor& p : params) {
    for (double g : p.grad()) ss += g * g;
  }
  const double norm = std::sqrt(ss);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (Tensor& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

}  // namespace conmamba

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

#include "conmamba/probe.hpp"

#include <cmath>
#include <set>

#include "conmamba/autodiff.hpp"
#include "conmamba/errors.hpp"
#include "conmamba/ops.hpp"
#include "conmamba/optim.hpp"

namespace conmamba {

void ProbeConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("must be > 0", "probe.lr");
}

ProbeHead ProbeHead::zeros(std::size_t n_classes, std::size_t dim) {
  return {Tensor::zeros({n_classes, dim}), Tensor::zeros({n_classes})};
}

Tensor ProbeHead::logits(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != dim()) {
    throw DimensionError("probe expects features [N x " + std::to_string(dim()) + "], got " +
                         shape_string(features.shape()));
  }
  return ops::add_tiled(ops::matmul(features, ops::transpose(weight)), bias);
}

std::vector<int> ProbeHead::predict(const Tensor& features) const {
  NoGradScope no_grad;
  Tensor z = logits(features);
  const std::size_t n = z.dim(0), c = z.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k) {
      if (z.at(i, k) > z.at(i, best)) best = k;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

ProbeHead train_probe(const Tensor& features, std::span<const int> labels,
                      std::size_t n_classes, const ProbeConfig& cfg) {
  cfg.validate();
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw DimensionError("probe features " + shape_string(features.shape()) + " do not match " +
                         std::to_string(labels.size()) + " labels");
  }
  std::set<int> seen;
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
      throw ContractError("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(n_classes) + ")");
    }
    seen.insert(y);
  }
  if (seen.size() < 2) {
    throw ContractError("degenerate task: probe training data holds " +
                        std::to_string(seen.size()) + " class(es), need at least 2");
  }

  ProbeHead head = ProbeHead::zeros(n_classes, features.dim(1));
  head.weight.set_requires_grad(true);
  head.bias.set_requires_grad(true);
  Tensor frozen = features.clone();
  frozen.set_requires_grad(false);
  OptimizerConfig opt;
  opt.kind = OptimizerKind::kAdam;
  opt.lr = cfg.lr;
  Optimizer optimizer(opt, {head.weight, head.bias});
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = ops::cross_entropy(head.logits(frozen), labels);
    }
    optimizer.zero_grad();
    backward(loss, tape);
    optimizer.step();
  }
  head.weight.set_requires_grad(false);
  head.bias.set_requires_grad(false);
  head.weight.clear_grad();
  head.bias.clear_grad();
  return head;
}

ProbeHead train_probe(const EncoderConfig& encoder, const EncoderWeights& weights,
                      const LabeledImages& data, std::size_t n_classes,
                      const ProbeConfig& cfg) {
  if (data.empty()) throw ContractError("probe training set is empty");
  Tensor features = compute_features(encoder, weights, data.images);
  return train_probe(features, data.labels, n_classes, cfg);
}

}  // namespace conmamba

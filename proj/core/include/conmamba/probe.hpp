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
#include <vector>

#include "conmamba/dataset.hpp"
#include "conmamba/encoder.hpp"
#include "conmamba/tensor.hpp"

namespace conmamba {

struct ProbeConfig {
  std::size_t steps = 200;  // full-batch Adam steps
  double lr = 0.05;

  void validate() const;
};

/// Linear classifier over frozen pre-projection embeddings.
struct ProbeHead {
  Tensor weight;  // [n_classes × d_model]
  Tensor bias;    // [n_classes]

  static ProbeHead zeros(std::size_t n_classes, std::size_t dim);
  std::size_t num_classes() const { return bias.numel(); }
  std::size_t dim() const { return weight.dim(1); }

  /// features [N × d] → logits [N × n_classes].
  Tensor logits(const Tensor& features) const;
  /// Arg-max class per row; ties go to the lowest class id.
  std::vector<int> predict(const Tensor& features) const;
};

/// Softmax cross-entropy on the head only. Throws ContractError for a
/// dataset with fewer than two distinct classes or a label outside
/// [0, n_classes).
ProbeHead train_probe(const Tensor& features, std::span<const int> labels,
                      std::size_t n_classes, const ProbeConfig& cfg = {});

/// Same, starting from the encoder. The encoder runs without recording, so
/// no gradient reaches its weights.
ProbeHead train_probe(const EncoderConfig& encoder, const EncoderWeights& weights,
                      const LabeledImages& data, std::size_t n_classes,
                      const ProbeConfig& cfg = {});

}  // namespace conmamba

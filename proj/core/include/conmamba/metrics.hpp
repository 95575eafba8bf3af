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
#include <vector>

#include "conmamba/dataset.hpp"
#include "conmamba/encoder.hpp"
#include "conmamba/probe.hpp"
#include "conmamba/tensor.hpp"

namespace conmamba {

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [truth][predicted]

struct MetricsReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;  // per class
  std::vector<double> recall;
  std::vector<double> f1;
  ConfusionMatrix confusion;

  std::string to_json() const;
  /// Aligned plain-text table. `class_names` may be empty.
  std::string to_table(const std::vector<std::string>& class_names = {}) const;
};

/// Macro-averaged metrics. A class with no predicted (or no true) samples
/// gets precision (or recall) 0, and F1 is 0 whenever P + R = 0.
MetricsReport metrics_from_confusion(const ConfusionMatrix& confusion);

MetricsReport metrics_from_predictions(std::span<const int> truth, std::span<const int> predicted,
                                       std::size_t n_classes);

/// Throws ContractError on an empty set or a label the head cannot emit.
MetricsReport evaluate(const ProbeHead& head, const Tensor& features, std::span<const int> labels);

MetricsReport evaluate(const ProbeHead& head, const EncoderConfig& encoder,
                       const EncoderWeights& weights, const LabeledImages& data);

/// Mean silhouette coefficient with Euclidean distance. Points in a
/// singleton cluster score 0. Needs at least two clusters.
double silhouette_score(const Tensor& points, std::span<const int> labels);

}  // namespace conmamba

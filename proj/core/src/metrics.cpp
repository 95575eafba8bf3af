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

#include "conmamba/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "conmamba/errors.hpp"

namespace conmamba {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

MetricsReport metrics_from_confusion(const ConfusionMatrix& confusion) {
  const std::size_t c = confusion.size();
  if (c == 0) throw ContractError("empty confusion matrix");
  for (const auto& row : confusion) {
    if (row.size() != c) throw DimensionError("confusion matrix must be square");
  }
  MetricsReport r;
  r.confusion = confusion;
  r.precision.assign(c, 0.0);
  r.recall.assign(c, 0.0);
  r.f1.assign(c, 0.0);
  std::size_t total = 0, trace = 0;
  for (std::size_t i = 0; i < c; ++i) {
    trace += confusion[i][i];
    for (std::size_t j = 0; j < c; ++j) total += confusion[i][j];
  }
  if (total == 0) throw ContractError("confusion matrix holds no samples");
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t i = 0; i < c; ++i) {
      predicted += confusion[i][k];
      actual += confusion[k][i];
    }
    const double tp = static_cast<double>(confusion[k][k]);
    r.precision[k] = ratio(tp, static_cast<double>(predicted));
    r.recall[k] = ratio(tp, static_cast<double>(actual));
    r.f1[k] = ratio(2.0 * r.precision[k] * r.recall[k], r.precision[k] + r.recall[k]);
    r.macro_precision += r.precision[k];
    r.macro_recall += r.recall[k];
    r.macro_f1 += r.f1[k];
  }
  r.macro_precision /= static_cast<double>(c);
  r.macro_recall /= static_cast<double>(c);
  r.macro_f1 /= static_cast<double>(c);
  return r;
}

MetricsReport metrics_from_predictions(std::span<const int> truth, std::span<const int> predicted,
                                       std::size_t n_classes) {
  if (truth.size() != predicted.size()) {
    throw DimensionError("metrics: " + std::to_string(truth.size()) + " labels vs " +
                         std::to_string(predicted.size()) + " predictions");
  }
  if (truth.empty()) throw ContractError("cannot evaluate an empty dataset");
  ConfusionMatrix m(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= n_classes ||
        static_cast<std::size_t>(p) >= n_classes) {
      throw ContractError("class id outside [0, " + std::to_string(n_classes) + ")");
    }
    ++m[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return metrics_from_confusion(m);
}

MetricsReport evaluate(const ProbeHead& head, const Tensor& features,
                       std::span<const int> labels) {
  if (labels.empty()) throw ContractError("cannot evaluate an empty dataset");
  return metrics_from_predictions(labels, head.predict(features), head.num_classes());
}

MetricsReport evaluate(const ProbeHead& head, const EncoderConfig& encoder,
                       const EncoderWeights& weights, const LabeledImages& data) {
  if (data.empty()) throw ContractError("cannot evaluate an empty dataset");
  return evaluate(head, compute_features(encoder, weights, data.images), data.labels);
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy;
  j["macro_precision"] = macro_precision;
  j["macro_recall"] = macro_recall;
  j["macro_f1"] = macro_f1;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["confusion"] = confusion;
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_table(const std::vector<std::string>& class_names) const {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < precision.size(); ++k) {
    names.push_back(k < class_names.size() ? class_names[k] : "class_" + std::to_string(k));
  }
  std::size_t w = std::string("macro").size();
  for (const auto& n : names) w = std::max(w, n.size());
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-*s %9s %9s %9s\n", static_cast<int>(w), "class", "precision",
                "recall", "f1");
  out << buf;
  for (std::size_t k = 0; k < names.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%-*s %9.4f %9.4f %9.4f\n", static_cast<int>(w),
                  names[k].c_str(), precision[k], recall[k], f1[k]);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%-*s %9.4f %9.4f %9.4f\n", static_cast<int>(w), "macro",
                macro_precision, macro_recall, macro_f1);
  out << buf;
  std::snprintf(buf, sizeof buf, "accuracy %.4f\n", accuracy);
  out << buf;
  return out.str();
}

double silhouette_score(const Tensor& points, std::span<const int> labels) {
  if (points.rank() != 2 || points.dim(0) != labels.size()) {
    throw DimensionError("silhouette: points " + shape_string(points.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::map<int, std::size_t> sizes;
  for (int y : labels) ++sizes[y];
  if (sizes.size() < 2) throw ContractError("silhouette needs at least two clusters");
  const std::size_t n = labels.size(), d = points.dim(1);
  const auto x = points.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[labels[i]] == 1) continue;
    std::map<int, double> sum;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double ss = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x[i * d + k] - x[j * d + k];
        ss += diff * diff;
      }
      sum[labels[j]] += std::sqrt(ss);
    }
    const double a = sum[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
    double b = INFINITY;
    for (const auto& [label, s] : sum) {
      if (label != labels[i]) b = std::min(b, s / static_cast<double>(sizes[label]));
    }
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

}  // namespace conmamba

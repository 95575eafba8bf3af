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

#include "conmamba/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "conmamba/autodiff.hpp"
#include "conmamba/errors.hpp"
#include "conmamba/ops.hpp"

namespace conmamba::losses {
namespace {

void check_batch(const ContrastiveBatch& batch) {
  if (batch.z1.rank() != 2 || batch.z1.shape() != batch.z2.shape()) {
    throw DimensionError("contrastive batch: view shapes " +
                         shape_string(batch.z1.shape()) + " and " +
                         shape_string(batch.z2.shape()) + " differ");
  }
  if (batch.z1.dim(0) < 2) {
    throw ContractError("contrastive batch: need at least 2 pairs for negatives, got " +
                        std::to_string(batch.z1.dim(0)));
  }
}

void check_square(const Tensor& m, std::size_t n, const char* op) {
  if (m.rank() != 2 || m.dim(0) != n || m.dim(1) != n) {
    throw DimensionError(std::string(op) + ": expected [" + std::to_string(n) +
                         "x" + std::to_string(n) + "], got " + shape_string(m.shape()));
  }
}

// Pooled similarity matrix of [z1; z2].
Tensor pooled_similarity(const ContrastiveBatch& batch) {
  Tensor pooled = ops::concat_rows(batch.z1, batch.z2);
  return ops::matmul(pooled, ops::transpose(pooled));
}

}  // namespace

UncertaintyParams UncertaintyParams::initialize(double log_sigma_intra,
                                                double log_sigma_inter) {
  UncertaintyParams u{Tensor::scalar(log_sigma_intra), Tensor::scalar(log_sigma_inter)};
  return u;
}

double UncertaintyParams::sigma_intra() const { return std::exp(log_sigma_intra.item()); }
double UncertaintyParams::sigma_inter() const { return std::exp(log_sigma_inter.item()); }

Tensor nt_xent_from_logits(const Tensor& logits, std::span<const std::size_t> positive) {
  const std::size_t n = positive.size();
  check_square(logits, n, "nt_xent");
  auto ld = logits.data();
  std::vector<double> softmax(n * n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = positive[i];
    if (p == i || p >= n) throw ContractError("nt_xent: invalid positive index");
    const double* row = ld.data() + i * n;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) peak = std::max(peak, row[k]);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) z += std::exp(row[k] - peak);
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) softmax[i * n + k] = std::exp(row[k] - peak) / z;
    }
    // -log softmax_p, nonnegative because the positive is in the sum
    total += peak + std::log(z) - row[p];
  }
  Tensor result = Tensor::scalar(total / static_cast<double>(n));
  std::vector<std::size_t> pos(positive.begin(), positive.end());
  record_op("nt_xent", {logits}, result,
            [logits, softmax, pos, n](std::span<const double> g) mutable {
              std::vector<double> gl(softmax);
              for (std::size_t i = 0; i < n; ++i) gl[i * n + pos[i]] -= 1.0;
              const double s = g[0] / static_cast<double>(n);
              for (double& v : gl) v *= s;
              logits.accumulate_grad(gl);
            });
  return result;
}

Tensor margin_hinge_from_similarity(const Tensor& similarity,
                                    std::span<const int> labels, double margin) {
  const std::size_t n = labels.size();
  check_square(similarity, n, "margin_hinge");
  auto sd = similarity.data();
  struct Active {
    std::size_t anchor, pos, neg;
  };
  std::vector<Active> active;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t hard_pos = n, hard_neg = n;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      const double s = sd[i * n + k];
      if (labels[k] == labels[i]) {
        if (hard_pos == n || s < sd[i * n + hard_pos]) hard_pos = k;
      } else {
        if (hard_neg == n || s > sd[i * n + hard_neg]) hard_neg = k;
      }
    }
    if (hard_pos == n) {
      throw ContractError("margin_hinge: anchor " + std::to_string(i) +
                          " has no same-class partner");
    }
    if (hard_neg == n) {
      throw ContractError("margin_hinge: anchor " + std::to_string(i) +
                          " has no different-class candidate");
    }
    const double term = margin - sd[i * n + hard_pos] + sd[i * n + hard_neg];
    if (term > 0.0) {
      total += term;
      active.push_back({i, hard_pos, hard_neg});
    }
  }
  Tensor result = Tensor::scalar(total / static_cast<double>(n));
  record_op("margin_hinge", {similarity}, result,
            [similarity, active, n](std::span<const double> g) mutable {
              std::vector<double> gs(n * n, 0.0);
              const double s = g[0] / static_cast<double>(n);
              for (const Active& a : active) {
                gs[a.anchor * n + a.pos] -= s;
                gs[a.anchor * n + a.neg] += s;
              }
              similarity.accumulate_grad(gs);
            });
  return result;
}

Tensor intra_loss(const ContrastiveBatch& batch) {
  check_batch(batch);
  if (!(batch.temperature > 0.0)) {
    throw ContractError("intra_loss: temperature must be positive, got " +
                        std::to_string(batch.temperature));
  }
  const std::size_t b = batch.z1.dim(0);
  std::vector<std::size_t> positive(2 * b);
  for (std::size_t i = 0; i < b; ++i) {
    positive[i] = i + b;
    positive[i + b] = i;
  }
  Tensor logits = ops::scale(pooled_similarity(batch), 1.0 / batch.temperature);
  return nt_xent_from_logits(logits, positive);
}

InterLossResult inter_loss(const ContrastiveBatch& batch) {
  check_batch(batch);
  if (!(batch.margin > 0.0)) {
    throw ContractError("inter_loss: margin must be positive, got " +
                        std::to_string(batch.margin));
  }
  const std::size_t b = batch.z1.dim(0);
  if (batch.labels.size() != b) {
    throw DimensionError("inter_loss: " + std::to_string(batch.labels.size()) +
                         " labels for " + std::to_string(b) + " pairs");
  }
  const bool single_class =
      std::all_of(batch.labels.begin(), batch.labels.end(),
                  [&](int l) { return l == batch.labels.front(); });
  if (single_class) return {Tensor::scalar(0.0), true};

  std::vector<int> pooled_labels(batch.labels);
  pooled_labels.insert(pooled_labels.end(), batch.labels.begin(), batch.labels.end());
  return {margin_hinge_from_similarity(pooled_similarity(batch), pooled_labels,
                                       batch.margin),
          false};
}

Tensor total_loss(const Tensor& l_intra, const Tensor& l_inter,
                  const UncertaintyParams& u) {
  // 1 / (2σ²) = 0.5 · exp(-2 log σ)
  Tensor w_intra = ops::scale(ops::exp(ops::scale(u.log_sigma_intra, -2.0)), 0.5);
  Tensor w_inter = ops::scale(ops::exp(ops::scale(u.log_sigma_inter, -2.0)), 0.5);
  Tensor weighted = ops::add(ops::mul(w_intra, l_intra), ops::mul(w_inter, l_inter));
  return ops::add(weighted, ops::add(u.log_sigma_intra, u.log_sigma_inter));
}

}  // namespace conmamba::losses

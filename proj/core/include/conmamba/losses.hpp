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

#include "conmamba/tensor.hpp"

namespace conmamba::losses {

/// Paired view embeddings of one batch. Row i of z1 and z2 come from the
/// same source image.
struct ContrastiveBatch {
  Tensor z1;  // [B × D], unit rows
  Tensor z2;  // [B × D], unit rows
  std::vector<int> labels;  // length B
  double temperature = 0.5;
  double margin = 0.5;
};

/// Learnable log σ pair; σ = exp(log σ) stays positive.
struct UncertaintyParams {
  Tensor log_sigma_intra;
  Tensor log_sigma_inter;

  static UncertaintyParams initialize(double log_sigma_intra = 0.0,
                                      double log_sigma_inter = 0.0);
  double sigma_intra() const;
  double sigma_inter() const;
};

/// Symmetric NT-Xent over the 2B pooled embeddings. Each anchor's positive
/// is its paired view; the softmax runs over all 2B-1 non-self candidates,
/// positive included, so the loss is never negative. Mean over 2B anchors.
///
/// Throws ContractError when B < 2 or temperature <= 0.
Tensor intra_loss(const ContrastiveBatch& batch);

struct InterLossResult {
  Tensor loss;
  /// True when the batch holds a single class; `loss` is then a constant 0.
  bool degenerate = false;
};

/// Margin hinge on cosine similarity, mean over the 2B pooled anchors of
/// max(0, m - sim(anchor, hardest positive) + sim(anchor, hardest negative)).
/// Hardest positive: lowest-similarity same-class embedding other than the
/// anchor. Hardest negative: highest-similarity different-class embedding.
/// Ties go to the lowest pooled index.
InterLossResult inter_loss(const ContrastiveBatch& batch);

/// L_intra / (2σ²_intra) + L_inter / (2σ²_inter) + log(σ_intra · σ_inter).
Tensor total_loss(const Tensor& l_intra, const Tensor& l_inter,
                  const UncertaintyParams& u);

/// Similarity-level kernels, exposed so tests can drive them with
/// hand-built similarity matrices.
///
/// logits[N×N] (already divided by τ) with positive[i] the column of row i's
/// positive; diagonal entries are excluded from the softmax.
Tensor nt_xent_from_logits(const Tensor& logits, std::span<const std::size_t> positive);

/// similarity[N×N] with a class label per row.
Tensor margin_hinge_from_similarity(const Tensor& similarity,
                                    std::span<const int> labels, double margin);

}  // namespace conmamba::losses

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

#include <optional>
#include <span>
#include <vector>

#include "conmamba/tensor.hpp"

// Differentiable operations. Every function records a backward rule on the
// active tape when one of its inputs requires a gradient.
//
// Binary elementwise ops accept identical shapes, or a one-element tensor on
// either side (scalar broadcast). Row-wise broadcasts have dedicated ops.
namespace conmamba::ops {

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, double factor);
Tensor add_scalar(const Tensor& t, double value);

Tensor neg(const Tensor& t);
Tensor exp(const Tensor& t);
/// Throws DomainError on any non-positive element.
Tensor log(const Tensor& t);
Tensor softplus(const Tensor& t);
Tensor sigmoid(const Tensor& t);
Tensor tanh(const Tensor& t);
Tensor silu(const Tensor& t);
Tensor square(const Tensor& t);

Tensor sum(const Tensor& t);
Tensor sum(const Tensor& t, std::size_t axis);
Tensor mean(const Tensor& t);
Tensor mean(const Tensor& t, std::size_t axis);
/// Ties resolve to the lowest flat index; the gradient flows to that
/// element only.
Tensor max(const Tensor& t);
Tensor max(const Tensor& t, std::size_t axis);

/// Rows of a matrix scaled to unit L2 norm. Throws DomainError when a row
/// norm is at or below 1e-12.
Tensor l2_normalize(const Tensor& t);

Tensor reshape(const Tensor& t, Shape shape);
Tensor transpose(const Tensor& t);
Tensor concat_rows(const Tensor& top, const Tensor& bottom);
Tensor concat_cols(const Tensor& left, const Tensor& right);
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);
/// Reverses row order inside each consecutive block of `block` rows.
Tensor reverse_blocks(const Tensor& t, std::size_t block);

/// x[R×n] + v tiled down the rows. `v` is [n] or [k×n] with R a multiple of k.
Tensor add_tiled(const Tensor& x, const Tensor& v);
/// x · w + b for x[m×k], w[k×n], b[n].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// Root-mean-square normalization of each row followed by a per-column gain.
Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps = 1e-6);

/// Mean softmax cross-entropy of logits[N×C] against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace conmamba::ops

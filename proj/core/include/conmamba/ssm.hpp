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

#include "conmamba/random.hpp"
#include "conmamba/tensor.hpp"

// Selective state-space layer with a diagonal state matrix.
//
// Continuous system   h'(t) = A h(t) + B x(t),  y(t) = C h(t) + D x(t)
// Zero-order hold     Ā = exp(ΔA),  B̄ = (exp(ΔA) - 1) / A · B
// Recurrence          h_t = Ā_t h_{t-1} + B̄_t x_t,  y_t = C_t h_t + D x_t
//
// Δ, B and C are per-token projections of the input; A and D are not.
namespace conmamba::ssm {

/// Below this |ΔA| the B̄ coefficient switches to its Taylor expansion.
inline constexpr double kTaylorThreshold = 1e-6;

struct ZohStep {
  double a_bar = 0.0;
  double b_bar = 0.0;
};

/// Scalar zero-order hold for one diagonal entry. Requires delta > 0.
ZohStep discretize_zoh(double a, double b, double delta);

/// (exp(ΔA) - 1) / A and its partials with respect to Δ and A.
struct ZohCoefficient {
  double value = 0.0;
  double d_delta = 0.0;
  double d_a = 0.0;
};
ZohCoefficient zoh_input_coefficient(double a, double delta);

/// One discretized time step over a [d_inner × n_state] grid.
struct DiscreteStep {
  Tensor a_bar;
  Tensor b_bar;
};

/// Tensor form for a single step: a [d×n] (all negative), b_t [n],
/// delta_t [d] (all positive).
DiscreteStep discretize_zoh(const Tensor& a, const Tensor& b_t,
                            const Tensor& delta_t);

/// Learnable parameters of one scan direction.
struct SelectiveSSMParams {
  Tensor a_log;       // [d_inner × n_state]; A = -exp(a_log)
  Tensor d_skip;      // [d_inner]
  Tensor w_delta;     // [d_inner × d_inner]
  Tensor delta_bias;  // [d_inner]
  Tensor w_b;         // [d_inner × n_state]
  Tensor w_c;         // [d_inner × n_state]

  std::size_t d_inner() const { return a_log.dim(0); }
  std::size_t n_state() const { return a_log.dim(1); }

  /// A spans -1 .. -n_state per channel, initial Δ ≈ 0.05, projections
  /// uniform in ±1/sqrt(d_inner), D = 1.
  static SelectiveSSMParams initialize(std::size_t d_inner,
                                       std::size_t n_state, Rng& rng);

  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  /// A = -exp(a_log), evaluated without recording.
  Tensor state_matrix() const;
};

struct SelectiveProjections {
  Tensor delta;  // [L × d_inner], strictly positive
  Tensor b;      // [L × n_state]
  Tensor c;      // [L × n_state]
};

/// Per-token Δ = softplus(x·w_delta + delta_bias), B = x·w_b, C = x·w_c.
SelectiveProjections selective_params(const Tensor& x,
                                      const SelectiveSSMParams& params);

/// A discretized sequence with the input already folded into B̄.
/// Layout of both arrays is [L × d_inner × n_state].
struct DiscreteSteps {
  std::size_t length = 0;
  std::size_t d_inner = 0;
  std::size_t n_state = 0;
  std::vector<double> a_bar;
  std::vector<double> b_bar_x;
};

/// Discretizes a whole sequence. `a` is [d×n], `delta` and `x` are [L×d],
/// `b` is [L×n].
DiscreteSteps discretize_sequence(const Tensor& a, const Tensor& delta,
                                  const Tensor& b, const Tensor& x);

/// h_t = a_t ⊙ h_{t-1} + b_t with h_0 = 0, for `length` steps of `width`
/// independent lanes. Writes every state into `h` ([length × width]).
void recurrence_sequential(std::span<const double> a, std::span<const double> b,
                           std::span<double> h, std::size_t length,
                           std::size_t width);

/// Same contract, evaluated as an up-sweep/down-sweep tree over the
/// associative composition (a2, b2) ∘ (a1, b1) = (a2·a1, a2·b1 + b2).
/// O(length) work, O(log length) depth; levels are split across threads.
void recurrence_parallel(std::span<const double> a, std::span<const double> b,
                         std::span<double> h, std::size_t length,
                         std::size_t width);

/// Left-to-right scan: y_t = C_t·h_t + D ⊙ x_t. Empty input gives an empty
/// [0 × d_inner] output.
Tensor scan_sequential(const DiscreteSteps& steps, const Tensor& c,
                       const Tensor& x, const Tensor& d_skip);
/// Same output from the continuous inputs (`a` [d×n], `delta` and `x`
/// [L×d], `b` and `c` [L×n]), discretizing each step as it goes so memory
/// stays O(d·n) regardless of L.
Tensor scan_sequential(const Tensor& a, const Tensor& delta, const Tensor& b,
                       const Tensor& c, const Tensor& x, const Tensor& d_skip);
/// Tree-scan evaluation of scan_sequential.
Tensor scan_parallel(const DiscreteSteps& steps, const Tensor& c,
                     const Tensor& x, const Tensor& d_skip);

enum class ScanMode { kSequential, kParallel };

/// Differentiable fused discretize + scan + readout.
///
/// `x` and `delta` are [(S·L) × d] holding S consecutive sequences of
/// `seq_len` tokens, `b` and `c` are [(S·L) × n]. Each sequence starts from
/// h = 0.
Tensor selective_scan(const Tensor& x, const Tensor& delta,
                      const Tensor& a_log, const Tensor& b, const Tensor& c,
                      const Tensor& d_skip, std::size_t seq_len,
                      ScanMode mode = ScanMode::kSequential);

/// Forward-direction selective SSM over consecutive sequences in `x`.
Tensor selective_ssm(const Tensor& x, const SelectiveSSMParams& params,
                     std::size_t seq_len,
                     ScanMode mode = ScanMode::kSequential);

/// Backward direction: reverse(selective_ssm(reverse(x))) with this
/// direction's own parameters.
Tensor selective_ssm_reverse(const Tensor& x, const SelectiveSSMParams& params,
                             std::size_t seq_len,
                             ScanMode mode = ScanMode::kSequential);

}  // namespace conmamba::ssm

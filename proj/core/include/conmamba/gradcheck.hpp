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

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "conmamba/tensor.hpp"

namespace conmamba {

struct GradCheckResult {
  double max_rel_error = 0.0;
  /// Where the worst component lives: parameter index and flat offset.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares tape gradients of the scalar `f` against five-point central
/// differences, perturbing every component of every tensor in `params` in
/// place.
///
/// The error of one tensor is max_i |analytic_i - numeric_i| divided by
/// max(max_i |analytic_i|, max_i |numeric_i|, 1e-8); the result reports the
/// worst tensor. `eps` must lie in [1e-7, 1e-3].
GradCheckResult grad_check(const std::function<Tensor()>& f,
                           std::span<Tensor> params, double eps = 1e-4);

/// Single-input form: returns the max relative error of d f(x) / d x.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double eps = 1e-4);

}  // namespace conmamba

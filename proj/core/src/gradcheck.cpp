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

#include "conmamba/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "conmamba/autodiff.hpp"
#include "conmamba/errors.hpp"

namespace conmamba {
namespace {

double evaluate(const std::function<Tensor()>& f) {
  NoGradScope no_grad;
  Tensor out = f();
  if (out.numel() != 1) {
    throw ContractError("grad_check: function must be scalar-valued, got " +
                        shape_string(out.shape()));
  }
  return out.item();
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& f,
                           std::span<Tensor> params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ContractError("grad_check: eps must lie in [1e-7, 1e-3], got " +
                        std::to_string(eps));
  }

  std::vector<bool> previous_flags;
  for (Tensor& p : params) {
    previous_flags.push_back(p.requires_grad());
    p.clear_grad();
    p.set_requires_grad(true);
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor out = f();
    if (out.numel() != 1) {
      throw ContractError("grad_check: function must be scalar-valued, got " +
                          shape_string(out.shape()));
    }
    if (tape.contains_output(out)) backward(out, tape);
    for (Tensor& p : params) analytic.push_back(p.grad_or_zeros());
  }

  // Error is measured per tensor, relative to that tensor's largest
  // gradient component, so entries far below the tensor's gradient scale do
  // not turn round-off in the difference quotient into a large ratio.
  GradCheckResult result;
  bool first = true;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].mutable_data();
    double worst_abs = 0.0, scale = 1e-8;
    GradCheckResult local{0.0, k, 0, 0.0, 0.0};
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      auto at = [&](double offset) {
        data[i] = saved + offset;
        return evaluate(f);
      };
      // Five-point stencil, truncation error O(eps^4).
      const double numeric =
          (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
      data[i] = saved;
      const double a = analytic[k][i];
      scale = std::max({scale, std::abs(a), std::abs(numeric)});
      const double diff = std::abs(a - numeric);
      if (i == 0 || diff > worst_abs) {
        worst_abs = diff;
        local = {0.0, k, i, a, numeric};
      }
    }
    local.max_rel_error = worst_abs / scale;
    if (first || local.max_rel_error > result.max_rel_error) {
      result = local;
      first = false;
    }
  }

  for (std::size_t k = 0; k < params.size(); ++k) {
    params[k].clear_grad();
    params[k].set_requires_grad(previous_flags[k]);
  }
  return result;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double eps) {
  std::vector<Tensor> params{x};
  return grad_check([&] { return f(x); }, params, eps).max_rel_error;
}

}  // namespace conmamba

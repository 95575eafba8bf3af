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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "conmamba/gradcheck.hpp"

namespace conmamba {

struct GradCheckSuiteOptions {
  std::uint64_t seed = 7;
  double eps = 1e-4;
  double op_threshold = 1e-5;
  double model_threshold = 1e-4;
  /// Adds a deliberately wrong backward rule as an extra component. Used to
  /// show that the harness notices a broken gradient.
  bool inject_fault = false;
};

struct GradCheckCase {
  std::string name;
  bool composite = false;  // model-level case, judged by model_threshold
  std::function<GradCheckResult(const GradCheckSuiteOptions&)> run;
};

/// Every registered component: each differentiable primitive, the fused
/// selective scan in both modes, both losses, the uncertainty combination
/// and the full micro-encoder (16×16 input, one block).
std::vector<GradCheckCase> gradcheck_cases(const GradCheckSuiteOptions& options = {});

struct GradCheckRow {
  std::string name;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  double seconds = 0.0;

  bool passed() const;
  std::vector<std::string> failures() const;
  /// One `name max_rel_err threshold PASS|FAIL` line per component.
  std::string to_text() const;
};

/// `on_row` (optional) sees each row as soon as it is computed.
GradCheckReport run_gradcheck_suite(const GradCheckSuiteOptions& options = {},
                                    const std::function<void(const GradCheckRow&)>& on_row = {});

}  // namespace conmamba

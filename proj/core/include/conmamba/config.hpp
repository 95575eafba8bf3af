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
#include <string>

#include "conmamba/augment.hpp"
#include "conmamba/encoder.hpp"
#include "conmamba/probe.hpp"
#include "conmamba/train.hpp"

namespace conmamba {

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or "folder"
  std::string root;                  // folder source only
  std::size_t n_classes = 3;         // synthetic only
  std::size_t per_class = 40;        // synthetic only
  double train_fraction = 0.75;
};

/// Everything one CLI invocation needs. `train.seed` is the global seed.
struct RunConfig {
  EncoderConfig encoder;
  TrainConfig train;
  AugmentationSpec augmentation;
  ProbeConfig probe;
  DataConfig data;
  std::size_t threads = 0;  // 0: CONMAMBA_THREADS or the OpenMP default

  /// Throws ConfigError naming the first offending field.
  void validate() const;
};

/// Parses a JSON document. Every section and field is optional and falls
/// back to its default, except that a "data" section must name its
/// "source" and a folder source must name its "root". Unknown fields and
/// wrongly typed values are ConfigErrors carrying the dotted field path.
RunConfig parse_run_config(const std::string& json_text);

/// Fully resolved config; parse_run_config(to_json(c)) reproduces `c`.
std::string to_json(const RunConfig& config);

}  // namespace conmamba

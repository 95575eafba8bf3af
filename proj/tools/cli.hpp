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
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "conmamba/config.hpp"
#include "conmamba/dataset.hpp"

namespace conmamba::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Entry point of the `conmamba` binary. Reports go to `out`, progress and
/// the one-line error to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Artifact names inside a run directory.
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kCheckpointFile = "checkpoint.cmb";
inline constexpr const char* kLossFile = "loss_history.csv";
inline constexpr const char* kProbeFile = "probe_head.cmb";
inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kMetricsTableFile = "metrics.txt";
inline constexpr const char* kEmbeddingsFile = "embeddings.csv";

/// Dataset described by `config.data`, sized for `config.encoder`.
Dataset load_dataset(const RunConfig& config);

struct ScanBenchRow {
  std::size_t length = 0;
  double sequential_ns = 0.0;  // best of `repeats`
  double parallel_ns = 0.0;
  double max_abs_diff = 0.0;
};

/// Times scan_sequential against scan_parallel on random inputs with
/// d_inner × n_state lanes. Throws ConfigError when `repeats` is 0 or a
/// length is 0.
std::vector<ScanBenchRow> bench_scan(const std::vector<std::size_t>& lengths, std::size_t repeats,
                                     std::size_t d_inner = 8, std::size_t n_state = 8,
                                     std::uint64_t seed = 0);

/// CSV `L,sequential_ns,parallel_ns,max_abs_diff`.
std::string bench_scan_csv(const std::vector<ScanBenchRow>& rows);

}  // namespace conmamba::cli

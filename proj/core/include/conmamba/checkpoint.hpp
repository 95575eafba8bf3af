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

// Checkpoint byte layout (all integers little-endian):
//
//   bytes 0..7     magic "CMBACKPT"
//   bytes 8..15    u64 header length H
//   next H bytes   UTF-8 JSON header:
//                    {"format": "conmamba-checkpoint", "version": 1,
//                     "kind": "...", "meta": {...},
//                     "tensors": [{"name", "shape", "offset", "length"}, ...],
//                     "payload_bytes": P}
//   next P bytes   payload: IEEE-754 binary64 values, little-endian
//
// `offset` and `length` are in bytes, relative to the payload start. Tensor
// ranges never overlap and lie inside the payload, and the file ends right
// after the payload.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "conmamba/probe.hpp"
#include "conmamba/tensor.hpp"
#include "conmamba/train.hpp"

namespace conmamba {

inline constexpr std::uint64_t kCheckpointVersion = 1;

struct TensorArchive {
  std::string kind;
  std::string meta_json = "{}";  // a JSON object
  std::vector<std::pair<std::string, Tensor>> tensors;

  /// Throws CheckpointError when `name` is absent.
  const Tensor& get(const std::string& name) const;
};

/// Throws IoError when the file cannot be written.
void write_archive(const TensorArchive& archive, const std::filesystem::path& path);

/// Throws IoError for an unreadable file and CheckpointError for a bad
/// magic, an unsupported version, a malformed header, or a payload that is
/// truncated, overlapping or out of bounds.
TensorArchive read_archive(const std::filesystem::path& path);

/// Weights, log σ pair, optimizer moments, counters, configs and the loss
/// history. Loading reproduces every tensor bitwise.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

void save_probe_head(const ProbeHead& head, const std::vector<std::string>& class_names,
                     const std::filesystem::path& path);
ProbeHead load_probe_head(const std::filesystem::path& path,
                          std::vector<std::string>* class_names = nullptr);

}  // namespace conmamba

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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "conmamba/ssm.hpp"
#include "conmamba/tensor.hpp"

namespace conmamba {

struct EncoderConfig {
  std::size_t image_size = 32;  // square inputs
  std::size_t channels = 3;
  std::size_t patch_size = 8;
  std::size_t d_model = 64;
  std::size_t n_blocks = 2;
  std::size_t d_inner = 128;
  std::size_t n_state = 16;
  std::size_t proj_dim = 32;
  ssm::ScanMode scan_mode = ssm::ScanMode::kSequential;

  std::size_t grid_side() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid_side() * grid_side(); }
  std::size_t patch_dim() const { return channels * patch_size * patch_size; }

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Tokens of one image in row-major patch-grid order.
struct PatchSequence {
  Tensor tokens;  // [M × d_model]
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string source_id;
};

struct VimBlockWeights {
  Tensor norm_gain;     // [d_model]
  Tensor w_in, b_in;    // SSM branch lift, d_model → d_inner
  Tensor w_gate, b_gate;  // gate branch, d_model → d_inner
  ssm::SelectiveSSMParams fwd;
  ssm::SelectiveSSMParams bwd;
  Tensor w_fuse, b_fuse;  // concat(y_fwd, y_bwd), 2·d_inner → d_inner
  Tensor w_out, b_out;    // d_inner → d_model
};

struct EncoderWeights {
  Tensor patch_w, patch_b;  // patch_dim → d_model
  Tensor pos;               // [M × d_model]
  std::vector<VimBlockWeights> blocks;
  Tensor head_w1, head_b1;  // d_model → d_model
  Tensor head_w2, head_b2;  // d_model → proj_dim

  /// Uniform ±1/sqrt(fan_in) projections, zero position embedding, unit
  /// norm gains.
  static EncoderWeights initialize(const EncoderConfig& cfg, std::uint64_t seed);

  /// Stable, unique names; the order is the canonical parameter order.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
  std::vector<Tensor> tensors() const;
};

struct ImageEmbedding {
  Tensor z;               // [proj_dim], unit L2 norm
  Tensor pre_projection;  // [d_model]
};

struct BatchEmbedding {
  Tensor z;               // [B × proj_dim]
  Tensor pre_projection;  // [B × d_model]
};

struct BidirectionalOutputs {
  Tensor y_fwd;
  Tensor y_bwd;
};

/// Stacks images ([C×H×W] each) into [(B·M) × patch_dim] patch rows. Each
/// patch is flattened channel-major, then by row and column inside the patch.
Tensor extract_patches(std::span<const Tensor> images, const EncoderConfig& cfg);

PatchSequence patch_embed(const Tensor& image, const EncoderConfig& cfg,
                          const EncoderWeights& weights,
                          std::string source_id = {});

/// Token rows for a batch, [(B·M) × d_model].
Tensor embed_patches(std::span<const Tensor> images, const EncoderConfig& cfg,
                     const EncoderWeights& weights);

/// Forward and backward selective scans of the lifted sequence `u`.
BidirectionalOutputs bidirectional_scan(const Tensor& u,
                                        const ssm::SelectiveSSMParams& fwd,
                                        const ssm::SelectiveSSMParams& bwd,
                                        std::size_t seq_len,
                                        ssm::ScanMode mode = ssm::ScanMode::kSequential);

/// One residual bidirectional block over token rows holding consecutive
/// sequences of `seq_len` tokens.
Tensor vim_block(const Tensor& tokens, const VimBlockWeights& block,
                 std::size_t seq_len,
                 ssm::ScanMode mode = ssm::ScanMode::kSequential);

PatchSequence vim_block(const PatchSequence& seq, const VimBlockWeights& block,
                        ssm::ScanMode mode = ssm::ScanMode::kSequential);

/// Two-layer head with a SiLU in between, then row L2 normalization.
Tensor projection_head(const Tensor& pooled, const EncoderWeights& weights);

BatchEmbedding encode_batch(std::span<const Tensor> images,
                            const EncoderConfig& cfg,
                            const EncoderWeights& weights);

ImageEmbedding encode(const Tensor& image, const EncoderConfig& cfg,
                      const EncoderWeights& weights);

}  // namespace conmamba

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

#include "conmamba/encoder.hpp"

#include <cmath>

#include "conmamba/errors.hpp"
#include "conmamba/ops.hpp"
#include "conmamba/random.hpp"

namespace conmamba {

void EncoderConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v < 1) throw ConfigError("must be at least 1", std::string("encoder.") + field);
  };
  positive(image_size, "image_size");
  positive(patch_size, "patch_size");
  positive(d_model, "d_model");
  positive(n_blocks, "n_blocks");
  positive(d_inner, "d_inner");
  positive(n_state, "n_state");
  positive(proj_dim, "proj_dim");
  if (channels != 1 && channels != 3) {
    throw ConfigError("must be 1 or 3", "encoder.channels");
  }
  if (image_size % patch_size != 0) {
    throw ConfigError("image size " + std::to_string(image_size) +
                          " is not a multiple of patch size " +
                          std::to_string(patch_size),
                      "encoder.patch_size");
  }
}

EncoderWeights EncoderWeights::initialize(const EncoderConfig& cfg,
                                          std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed({seed, 0x656e636f646572ULL}));
  auto uniform_tensor = [&](Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(shape_numel(shape));
    for (double& e : v) e = uniform(rng, -bound, bound);
    return Tensor(std::move(shape), std::move(v));
  };

  EncoderWeights w;
  const std::size_t pd = cfg.patch_dim(), dm = cfg.d_model, di = cfg.d_inner;
  w.patch_w = uniform_tensor({pd, dm}, pd);
  w.patch_b = uniform_tensor({dm}, pd);
  w.pos = Tensor::zeros({cfg.num_patches(), dm});
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    VimBlockWeights b;
    b.norm_gain = Tensor::full({dm}, 1.0);
    b.w_in = uniform_tensor({dm, di}, dm);
    b.b_in = uniform_tensor({di}, dm);
    b.w_gate = uniform_tensor({dm, di}, dm);
    b.b_gate = uniform_tensor({di}, dm);
    b.fwd = ssm::SelectiveSSMParams::initialize(di, cfg.n_state, rng);
    b.bwd = ssm::SelectiveSSMParams::initialize(di, cfg.n_state, rng);
    b.w_fuse = uniform_tensor({2 * di, di}, 2 * di);
    b.b_fuse = uniform_tensor({di}, 2 * di);
    b.w_out = uniform_tensor({di, dm}, di);
    b.b_out = uniform_tensor({dm}, di);
    w.blocks.push_back(std::move(b));
  }
  w.head_w1 = uniform_tensor({dm, dm}, dm);
  w.head_b1 = uniform_tensor({dm}, dm);
  w.head_w2 = uniform_tensor({dm, cfg.proj_dim}, dm);
  w.head_b2 = uniform_tensor({cfg.proj_dim}, dm);
  return w;
}

std::vector<std::pair<std::string, Tensor>> EncoderWeights::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out{
      {"patch.w", patch_w}, {"patch.b", patch_b}, {"patch.pos", pos}};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const VimBlockWeights& b = blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    out.emplace_back(p + "norm_gain", b.norm_gain);
    out.emplace_back(p + "in.w", b.w_in);
    out.emplace_back(p + "in.b", b.b_in);
    out.emplace_back(p + "gate.w", b.w_gate);
    out.emplace_back(p + "gate.b", b.b_gate);
    for (auto& [name, t] : b.fwd.named_tensors()) out.emplace_back(p + "fwd." + name, t);
    for (auto& [name, t] : b.bwd.named_tensors()) out.emplace_back(p + "bwd." + name, t);
    out.emplace_back(p + "fuse.w", b.w_fuse);
    out.emplace_back(p + "fuse.b", b.b_fuse);
    out.emplace_back(p + "out.w", b.w_out);
    out.emplace_back(p + "out.b", b.b_out);
  }
  out.emplace_back("head.w1", head_w1);
  out.emplace_back("head.b1", head_b1);
  out.emplace_back("head.w2", head_w2);
  out.emplace_back("head.b2", head_b2);
  return out;
}

std::vector<Tensor> EncoderWeights::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_tensors()) out.push_back(t);
  return out;
}

Tensor extract_patches(std::span<const Tensor> images, const EncoderConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.channels, s = cfg.image_size, p = cfg.patch_size;
  const std::size_t grid = cfg.grid_side(), m = cfg.num_patches(), pd = cfg.patch_dim();
  std::vector<double> out(images.size() * m * pd);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Tensor& img = images[b];
    if (img.rank() != 3 || img.dim(0) != c || img.dim(1) != s || img.dim(2) != s) {
      throw ConfigError("image " + shape_string(img.shape()) +
                            " does not match configured " + std::to_string(c) + "x" +
                            std::to_string(s) + "x" + std::to_string(s),
                        "encoder.image_size");
    }
    auto px = img.data();
    for (std::size_t gr = 0; gr < grid; ++gr) {
      for (std::size_t gc = 0; gc < grid; ++gc) {
        double* row = out.data() + ((b * m) + gr * grid + gc) * pd;
        std::size_t k = 0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t dy = 0; dy < p; ++dy) {
            for (std::size_t dx = 0; dx < p; ++dx) {
              row[k++] = px[(ch * s + gr * p + dy) * s + gc * p + dx];
            }
          }
        }
      }
    }
  }
  return Tensor({images.size() * m, pd}, std::move(out));
}

Tensor embed_patches(std::span<const Tensor> images, const EncoderConfig& cfg,
                     const EncoderWeights& weights) {
  Tensor patches = extract_patches(images, cfg);
  return ops::add_tiled(ops::linear(patches, weights.patch_w, weights.patch_b),
                        weights.pos);
}

PatchSequence patch_embed(const Tensor& image, const EncoderConfig& cfg,
                          const EncoderWeights& weights, std::string source_id) {
  const Tensor one[] = {image};
  return {embed_patches(one, cfg, weights), cfg.grid_side(), cfg.grid_side(),
          std::move(source_id)};
}

BidirectionalOutputs bidirectional_scan(const Tensor& u,
                                        const ssm::SelectiveSSMParams& fwd,
                                        const ssm::SelectiveSSMParams& bwd,
                                        std::size_t seq_len, ssm::ScanMode mode) {
  return {ssm::selective_ssm(u, fwd, seq_len, mode),
          ssm::selective_ssm_reverse(u, bwd, seq_len, mode)};
}

Tensor vim_block(const Tensor& tokens, const VimBlockWeights& block,
                 std::size_t seq_len, ssm::ScanMode mode) {
  Tensor normed = ops::rms_norm(tokens, block.norm_gain);
  Tensor u = ops::linear(normed, block.w_in, block.b_in);
  Tensor gate = ops::silu(ops::linear(normed, block.w_gate, block.b_gate));
  BidirectionalOutputs y = bidirectional_scan(u, block.fwd, block.bwd, seq_len, mode);
  Tensor fused = ops::linear(ops::concat_cols(y.y_fwd, y.y_bwd), block.w_fuse,
                             block.b_fuse);
  Tensor update = ops::linear(ops::mul(fused, gate), block.w_out, block.b_out);
  return ops::add(tokens, update);
}

PatchSequence vim_block(const PatchSequence& seq, const VimBlockWeights& block,
                        ssm::ScanMode mode) {
  return {vim_block(seq.tokens, block, seq.tokens.dim(0), mode), seq.rows,
          seq.cols, seq.source_id};
}

Tensor projection_head(const Tensor& pooled, const EncoderWeights& weights) {
  Tensor hidden = ops::silu(ops::linear(pooled, weights.head_w1, weights.head_b1));
  return ops::l2_normalize(ops::linear(hidden, weights.head_w2, weights.head_b2));
}

BatchEmbedding encode_batch(std::span<const Tensor> images, const EncoderConfig& cfg,
                            const EncoderWeights& weights) {
  if (images.empty()) throw ContractError("encode_batch: no images");
  const std::size_t m = cfg.num_patches();
  Tensor tokens = embed_patches(images, cfg, weights);
  for (const VimBlockWeights& block : weights.blocks) {
    tokens = vim_block(tokens, block, m, cfg.scan_mode);
  }
  Tensor pooled =
      ops::mean(ops::reshape(tokens, {images.size(), m, cfg.d_model}), 1);
  return {projection_head(pooled, weights), pooled};
}

ImageEmbedding encode(const Tensor& image, const EncoderConfig& cfg,
                      const EncoderWeights& weights) {
  const Tensor one[] = {image};
  BatchEmbedding batch = encode_batch(one, cfg, weights);
  return {ops::reshape(batch.z, {cfg.proj_dim}),
          ops::reshape(batch.pre_projection, {cfg.d_model})};
}

}  // namespace conmamba

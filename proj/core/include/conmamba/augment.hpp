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
#include <utility>
#include <vector>

#include "conmamba/tensor.hpp"

namespace conmamba {

struct AugmentationSpec {
  double crop_min = 0.6;  // fraction of image area
  double crop_max = 1.0;
  double flip_prob = 0.5;
  double brightness = 0.2;  // max additive delta
  double contrast = 0.2;    // max relative change around the image mean
  double noise_sigma = 0.02;
  std::vector<int> quarter_turns{0};  // allowed rotations, in multiples of 90°

  /// Every transform disabled; views equal the input.
  static AugmentationSpec identity();
  void validate() const;
};

/// Random draws for one view, separated from their application so the
/// sampling statistics can be inspected directly.
struct ViewParams {
  double crop_x = 0.0, crop_y = 0.0;  // top-left corner, pixels
  double crop_w = 0.0, crop_h = 0.0;  // extent, pixels
  bool flip = false;
  int quarter_turns = 0;
  double brightness = 0.0;
  double contrast_factor = 1.0;
  std::uint64_t noise_seed = 0;
};

ViewParams sample_view(const AugmentationSpec& spec, std::size_t height,
                       std::size_t width, std::uint64_t view_seed);

/// crop → bilinear resize back to H×W → flip → rotate → jitter → noise →
/// clamp to [0, 1]. `image` is [C×H×W].
Tensor apply_view(const Tensor& image, const AugmentationSpec& spec,
                  const ViewParams& params);

/// Two independent views of `image`. Identical (image, spec, sample_seed)
/// always yields the same pair.
std::pair<Tensor, Tensor> make_views(const Tensor& image,
                                     const AugmentationSpec& spec,
                                     std::uint64_t sample_seed);

/// Per-sample seed: hash(global_seed, epoch, sample_index).
std::uint64_t sample_seed(std::uint64_t global_seed, std::uint64_t epoch,
                          std::uint64_t sample_index);

/// Bilinear resample of the box [x0, x0+w) × [y0, y0+h) onto an out_h×out_w
/// grid, with corner pixels mapped onto corner pixels.
Tensor crop_resize(const Tensor& image, double x0, double y0, double w, double h,
                   std::size_t out_h, std::size_t out_w);

}  // namespace conmamba

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

#include "conmamba/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "conmamba/errors.hpp"
#include "conmamba/random.hpp"

namespace conmamba {
namespace {

void require_image(const Tensor& image) {
  if (image.rank() != 3) {
    throw DimensionError("augmentation expects a [C×H×W] image, got " +
                         shape_string(image.shape()));
  }
}

Tensor flip_horizontal(const Tensor& image) {
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  auto src = image.data();
  std::vector<double> out(src.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        out[(ch * h + y) * w + x] = src[(ch * h + y) * w + (w - 1 - x)];
      }
    }
  }
  return Tensor(image.shape(), std::move(out));
}

// Counter-clockwise quarter turn of a square image.
Tensor rotate_quarter(const Tensor& image) {
  const std::size_t c = image.dim(0), n = image.dim(1);
  auto src = image.data();
  std::vector<double> out(src.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        out[(ch * n + y) * n + x] = src[(ch * n + x) * n + (n - 1 - y)];
      }
    }
  }
  return Tensor(image.shape(), std::move(out));
}

}  // namespace

AugmentationSpec AugmentationSpec::identity() {
  AugmentationSpec s;
  s.crop_min = 1.0;
  s.crop_max = 1.0;
  s.flip_prob = 0.0;
  s.brightness = 0.0;
  s.contrast = 0.0;
  s.noise_sigma = 0.0;
  s.quarter_turns = {0};
  return s;
}

void AugmentationSpec::validate() const {
  if (!(crop_min > 0.0 && crop_min <= crop_max && crop_max <= 1.0)) {
    throw ConfigError("need 0 < crop_min <= crop_max <= 1", "augmentation.crop_scale");
  }
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
    throw ConfigError("must lie in [0, 1]", "augmentation.flip_prob");
  }
  if (!(brightness >= 0.0)) throw ConfigError("must be >= 0", "augmentation.brightness");
  if (!(contrast >= 0.0 && contrast < 1.0)) {
    throw ConfigError("must lie in [0, 1)", "augmentation.contrast");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("must be >= 0", "augmentation.noise_sigma");
  if (quarter_turns.empty()) {
    throw ConfigError("at least one rotation must be allowed", "augmentation.rotations");
  }
  for (int k : quarter_turns) {
    if (k < 0 || k > 3) {
      throw ConfigError("rotations must be 0, 90, 180 or 270 degrees",
                        "augmentation.rotations");
    }
  }
}

std::uint64_t sample_seed(std::uint64_t global_seed, std::uint64_t epoch,
                          std::uint64_t sample_index) {
  return derive_seed({global_seed, epoch, sample_index});
}

ViewParams sample_view(const AugmentationSpec& spec, std::size_t height,
                       std::size_t width, std::uint64_t view_seed) {
  spec.validate();
  Rng rng(view_seed);
  ViewParams p;
  const double area = spec.crop_min == spec.crop_max
                          ? spec.crop_min
                          : uniform(rng, spec.crop_min, spec.crop_max);
  const double side = std::sqrt(area);
  p.crop_w = side * static_cast<double>(width);
  p.crop_h = side * static_cast<double>(height);
  if (p.crop_w < 1.0 || p.crop_h < 1.0) {
    throw ConfigError("crop of " + std::to_string(p.crop_w) + "x" +
                          std::to_string(p.crop_h) + " pixels is smaller than one pixel",
                      "augmentation.crop_scale");
  }
  const double slack_x = static_cast<double>(width) - p.crop_w;
  const double slack_y = static_cast<double>(height) - p.crop_h;
  p.crop_x = slack_x > 0.0 ? uniform(rng, 0.0, slack_x) : 0.0;
  p.crop_y = slack_y > 0.0 ? uniform(rng, 0.0, slack_y) : 0.0;
  p.flip = spec.flip_prob > 0.0 && uniform01(rng) < spec.flip_prob;
  p.quarter_turns =
      spec.quarter_turns[uniform_index(rng, spec.quarter_turns.size())];
  if (spec.brightness > 0.0) p.brightness = uniform(rng, -spec.brightness, spec.brightness);
  if (spec.contrast > 0.0) p.contrast_factor = 1.0 + uniform(rng, -spec.contrast, spec.contrast);
  p.noise_seed = rng();
  return p;
}

Tensor crop_resize(const Tensor& image, double x0, double y0, double w, double h,
                   std::size_t out_h, std::size_t out_w) {
  require_image(image);
  const std::size_t c = image.dim(0), ih = image.dim(1), iw = image.dim(2);
  auto src = image.data();
  auto coord = [](double origin, double extent, std::size_t i, std::size_t n) {
    if (n == 1) return origin + 0.5 * (extent - 1.0);
    return origin + static_cast<double>(i) * ((extent - 1.0) / static_cast<double>(n - 1));
  };
  std::vector<double> out(c * out_h * out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double sy = std::clamp(coord(y0, h, y, out_h), 0.0, static_cast<double>(ih - 1));
    const auto y_lo = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y_hi = std::min(y_lo + 1, ih - 1);
    const double fy = sy - static_cast<double>(y_lo);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = std::clamp(coord(x0, w, x, out_w), 0.0, static_cast<double>(iw - 1));
      const auto x_lo = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x_hi = std::min(x_lo + 1, iw - 1);
      const double fx = sx - static_cast<double>(x_lo);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = src.data() + ch * ih * iw;
        const double top = plane[y_lo * iw + x_lo] * (1.0 - fx) + plane[y_lo * iw + x_hi] * fx;
        const double bottom = plane[y_hi * iw + x_lo] * (1.0 - fx) + plane[y_hi * iw + x_hi] * fx;
        out[(ch * out_h + y) * out_w + x] = top * (1.0 - fy) + bottom * fy;
      }
    }
  }
  return Tensor({c, out_h, out_w}, std::move(out));
}

Tensor apply_view(const Tensor& image, const AugmentationSpec& spec,
                  const ViewParams& params) {
  require_image(image);
  const std::size_t h = image.dim(1), w = image.dim(2);
  Tensor view = crop_resize(image, params.crop_x, params.crop_y, params.crop_w,
                            params.crop_h, h, w);
  if (params.flip) view = flip_horizontal(view);
  if (params.quarter_turns % 4 != 0) {
    if (h != w) {
      throw ConfigError("quarter-turn rotations need square images",
                        "augmentation.rotations");
    }
    for (int k = 0; k < params.quarter_turns % 4; ++k) view = rotate_quarter(view);
  }

  auto px = view.mutable_data();
  if (params.brightness != 0.0) {
    for (double& v : px) v += params.brightness;
  }
  if (params.contrast_factor != 1.0) {
    double mean = 0.0;
    for (double v : px) mean += v;
    mean /= static_cast<double>(px.size());
    for (double& v : px) v = (v - mean) * params.contrast_factor + mean;
  }
  if (spec.noise_sigma > 0.0) {
    Rng rng(params.noise_seed);
    for (double& v : px) v += normal(rng, 0.0, spec.noise_sigma);
  }
  for (double& v : px) v = std::clamp(v, 0.0, 1.0);
  return view;
}

std::pair<Tensor, Tensor> make_views(const Tensor& image, const AugmentationSpec& spec,
                                     std::uint64_t sample_seed) {
  require_image(image);
  for (double v : image.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError("make_views: pixel values must lie in [0, 1]");
    }
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  Tensor first = apply_view(image, spec, sample_view(spec, h, w, derive_seed({sample_seed, 1})));
  Tensor second = apply_view(image, spec, sample_view(spec, h, w, derive_seed({sample_seed, 2})));
  return {std::move(first), std::move(second)};
}

}  // namespace conmamba

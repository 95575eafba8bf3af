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
#include <string>
#include <vector>

#include "conmamba/encoder.hpp"
#include "conmamba/tensor.hpp"

namespace conmamba {

enum class Split { kTrain, kTest };

struct SampleEntry {
  std::string id;
  std::string path;  // empty for synthetic samples
  int class_id = 0;
  Split split = Split::kTrain;
};

struct DatasetManifest {
  std::string source;  // "folder" or "synthetic"
  std::vector<std::string> class_names;
  std::vector<SampleEntry> samples;

  std::size_t num_classes() const { return class_names.size(); }
  /// Checks dense class ids and a non-empty sample list.
  void validate() const;
  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

/// Images with their class ids and sample ids, in a fixed order.
struct LabeledImages {
  std::vector<Tensor> images;  // [C×H×W] each, values in [0, 1]
  std::vector<int> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Tensor> images;  // aligned with manifest.samples

  LabeledImages subset(Split split) const;
  LabeledImages all() const;
};

/// Stratified seeded split: in every class the first round(n·train_fraction)
/// samples of a seeded shuffle go to train.
void assign_split(DatasetManifest& manifest, double train_fraction, std::uint64_t seed);

struct SyntheticSpec {
  std::size_t n_classes = 3;
  std::size_t per_class = 40;
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::uint64_t seed = 0;
  double train_fraction = 0.75;
};

/// Procedural texture classes. Class k is an oriented grating with its own
/// spatial frequency and orientation; every sample gets its own phase,
/// frequency and orientation jitter, a random blob, a color tint and pixel
/// noise.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// One sub-directory per class holding PNG files. Classes and files are
/// ordered by byte-wise name comparison; images are resized bilinearly to
/// image_size × image_size.
Dataset load_folder_dataset(const std::filesystem::path& root, std::size_t image_size,
                            std::size_t channels = 3, double train_fraction = 0.75,
                            std::uint64_t seed = 0);

/// Writes `dataset` as a class-per-directory PNG tree plus manifest.json.
void write_folder_dataset(const Dataset& dataset, const std::filesystem::path& root);

/// CSV `sample_id,class_id,e_0..e_{d-1}` of pre-projection embeddings, one
/// row per sample in the given order.
void export_embeddings(const EncoderConfig& cfg, const EncoderWeights& weights,
                       const LabeledImages& data, const std::filesystem::path& path);

/// Pre-projection embeddings [N × d_model] evaluated without recording.
Tensor compute_features(const EncoderConfig& cfg, const EncoderWeights& weights,
                        const std::vector<Tensor>& images, std::size_t chunk = 64);

}  // namespace conmamba

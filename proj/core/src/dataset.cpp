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

#include "conmamba/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <span>

#include <json.hpp>

#include "conmamba/augment.hpp"
#include "conmamba/autodiff.hpp"
#include "conmamba/errors.hpp"
#include "conmamba/png_io.hpp"
#include "conmamba/random.hpp"

namespace conmamba {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const char* split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "'", "manifest.samples.split");
}

bool has_png_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png";
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void DatasetManifest::validate() const {
  if (samples.empty()) throw ConfigError("dataset has no samples", "dataset");
  if (class_names.empty()) throw ConfigError("dataset has no classes", "dataset");
  std::vector<bool> seen(class_names.size(), false);
  for (const SampleEntry& s : samples) {
    if (s.class_id < 0 || static_cast<std::size_t>(s.class_id) >= class_names.size()) {
      throw ConfigError("sample '" + s.id + "' has class id " + std::to_string(s.class_id) +
                            " outside [0, " + std::to_string(class_names.size()) + ")",
                        "dataset");
    }
    seen[static_cast<std::size_t>(s.class_id)] = true;
  }
  for (std::size_t k = 0; k < seen.size(); ++k) {
    if (!seen[k]) {
      throw ConfigError("class '" + class_names[k] + "' has no samples", "dataset");
    }
  }
}

std::string DatasetManifest::to_json() const {
  json j;
  j["source"] = source;
  j["class_names"] = class_names;
  j["samples"] = json::array();
  for (const SampleEntry& s : samples) {
    j["samples"].push_back({{"id", s.id},
                            {"path", s.path},
                            {"class_id", s.class_id},
                            {"split", split_name(s.split)}});
  }
  return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    m.source = j.at("source").get<std::string>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const json& s : j.at("samples")) {
      m.samples.push_back({s.at("id").get<std::string>(), s.at("path").get<std::string>(),
                           s.at("class_id").get<int>(),
                           parse_split(s.at("split").get<std::string>())});
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what(), "manifest");
  }
  return m;
}

LabeledImages Dataset::subset(Split split) const {
  LabeledImages out;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const SampleEntry& s = manifest.samples[i];
    if (s.split != split) continue;
    out.images.push_back(images[i]);
    out.labels.push_back(s.class_id);
    out.ids.push_back(s.id);
  }
  return out;
}

LabeledImages Dataset::all() const {
  LabeledImages out;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    out.images.push_back(images[i]);
    out.labels.push_back(manifest.samples[i].class_id);
    out.ids.push_back(manifest.samples[i].id);
  }
  return out;
}

void assign_split(DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("must lie in (0, 1]", "dataset.train_fraction");
  }
  for (std::size_t k = 0; k < manifest.class_names.size(); ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
      if (manifest.samples[i].class_id == static_cast<int>(k)) members.push_back(i);
    }
    Rng rng(derive_seed({seed, 0x73706c6974ULL, k}));
    shuffle(members.begin(), members.end(), rng);
    const auto n_train = static_cast<std::size_t>(
        std::llround(static_cast<double>(members.size()) * train_fraction));
    for (std::size_t r = 0; r < members.size(); ++r) {
      manifest.samples[members[r]].split = r < n_train ? Split::kTrain : Split::kTest;
    }
  }
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw ConfigError("need at least 2 classes", "dataset.n_classes");
  if (spec.per_class < 1) throw ConfigError("must be at least 1", "dataset.per_class");
  if (spec.image_size < 4) throw ConfigError("must be at least 4", "dataset.image_size");
  if (spec.channels != 1 && spec.channels != 3) {
    throw ConfigError("must be 1 or 3", "dataset.channels");
  }

  Dataset ds;
  ds.manifest.source = "synthetic";
  const std::size_t s = spec.image_size, c = spec.channels;
  const double side = static_cast<double>(s);
  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    ds.manifest.class_names.push_back("class_" + std::to_string(k));
  }
  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    const double base_freq = 2.0 + 1.5 * static_cast<double>(k);  // cycles per image
    const double base_angle = std::numbers::pi * static_cast<double>(k) /
                              static_cast<double>(spec.n_classes);
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Rng rng(derive_seed({spec.seed, 0x73796e7468ULL, k, i}));
      const double freq = base_freq * uniform(rng, 0.92, 1.08);
      const double angle = base_angle + uniform(rng, -0.08, 0.08);
      const double phase = uniform(rng, -0.5, 0.5);
      const double blob_x = uniform(rng, 0.0, side), blob_y = uniform(rng, 0.0, side);
      const double blob_r = uniform(rng, 2.0, 5.0) * side / 32.0;
      const double blob_amp = uniform(rng, -0.25, 0.25);
      std::vector<double> tint(c);
      for (double& t : tint) t = uniform(rng, -0.08, 0.08);

      const double kx = 2.0 * std::numbers::pi * freq * std::cos(angle) / side;
      const double ky = 2.0 * std::numbers::pi * freq * std::sin(angle) / side;
      std::vector<double> px(c * s * s);
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
          const double fx = static_cast<double>(x), fy = static_cast<double>(y);
          const double grating = 0.3 * std::sin(kx * fx + ky * fy + phase);
          const double dx = fx - blob_x, dy = fy - blob_y;
          const double blob = blob_amp * std::exp(-(dx * dx + dy * dy) / (2.0 * blob_r * blob_r));
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double v = 0.5 + grating + blob + tint[ch] + normal(rng, 0.0, 0.03);
            px[(ch * s + y) * s + x] = std::clamp(v, 0.0, 1.0);
          }
        }
      }
      char id[64];
      std::snprintf(id, sizeof id, "class_%zu/img_%04zu", k, i);
      ds.manifest.samples.push_back({id, "", static_cast<int>(k), Split::kTrain});
      ds.images.emplace_back(Shape{c, s, s}, std::move(px));
    }
  }
  assign_split(ds.manifest, spec.train_fraction, spec.seed);
  return ds;
}

Dataset load_folder_dataset(const fs::path& root, std::size_t image_size,
                            std::size_t channels, double train_fraction,
                            std::uint64_t seed) {
  if (!fs::is_directory(root)) {
    throw IoError("dataset root '" + root.string() + "' is not a directory");
  }
  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.size() < 2) {
    throw IoError("dataset root '" + root.string() + "' needs at least two class directories");
  }

  Dataset ds;
  ds.manifest.source = "folder";
  ds.manifest.class_names = class_dirs;
  for (std::size_t k = 0; k < class_dirs.size(); ++k) {
    const fs::path dir = root / class_dirs[k];
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && has_png_extension(entry.path())) {
        files.push_back(entry.path().filename().string());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      throw IoError("manifest error: class directory '" + dir.string() +
                    "' contains no PNG files");
    }
    for (const std::string& f : files) {
      const fs::path path = dir / f;
      Tensor img = image_to_tensor(read_png(path, channels));
      if (img.dim(1) != image_size || img.dim(2) != image_size) {
        img = crop_resize(img, 0.0, 0.0, static_cast<double>(img.dim(2)),
                          static_cast<double>(img.dim(1)), image_size, image_size);
      }
      ds.manifest.samples.push_back(
          {class_dirs[k] + "/" + f, path.string(), static_cast<int>(k), Split::kTrain});
      ds.images.push_back(std::move(img));
    }
  }
  assign_split(ds.manifest, train_fraction, seed);
  return ds;
}

void write_folder_dataset(const Dataset& dataset, const fs::path& root) {
  fs::create_directories(root);
  DatasetManifest manifest = dataset.manifest;
  manifest.source = "folder";
  for (const std::string& name : manifest.class_names) fs::create_directories(root / name);
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    SampleEntry& s = manifest.samples[i];
    const std::string rel =
        manifest.class_names[static_cast<std::size_t>(s.class_id)] + "/" +
        fs::path(s.id).filename().string() + ".png";
    write_png(root / rel, tensor_to_image(dataset.images[i]));
    s.id = rel;
    s.path = (root / rel).string();
  }
  std::ofstream out(root / "manifest.json");
  if (!out) throw IoError("cannot write '" + (root / "manifest.json").string() + "'");
  out << manifest.to_json() << '\n';
}

Tensor compute_features(const EncoderConfig& cfg, const EncoderWeights& weights,
                        const std::vector<Tensor>& images, std::size_t chunk) {
  NoGradScope no_grad;
  std::vector<double> out;
  out.reserve(images.size() * cfg.d_model);
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const std::size_t end = std::min(images.size(), start + chunk);
    std::span<const Tensor> part(images.data() + start, end - start);
    BatchEmbedding e = encode_batch(part, cfg, weights);
    out.insert(out.end(), e.pre_projection.data().begin(), e.pre_projection.data().end());
  }
  return Tensor({images.size(), cfg.d_model}, std::move(out));
}

void export_embeddings(const EncoderConfig& cfg, const EncoderWeights& weights,
                       const LabeledImages& data, const fs::path& path) {
  Tensor features = compute_features(cfg, weights, data.images);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "sample_id,class_id";
  for (std::size_t j = 0; j < cfg.d_model; ++j) out << ",e_" << j;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << csv_field(data.ids[i]) << ',' << data.labels[i];
    for (std::size_t j = 0; j < cfg.d_model; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", features.at(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace conmamba

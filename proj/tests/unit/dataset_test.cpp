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
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "conmamba/errors.hpp"
#include "conmamba/png_io.hpp"
#include "test_util.hpp"

namespace conmamba {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

Image8 solid(std::size_t w, std::size_t h, std::uint8_t value) {
  Image8 img;
  img.width = w;
  img.height = h;
  img.channels = 3;
  img.pixels.assign(w * h * 3, value);
  return img;
}

double pixel_distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

TEST(Png, RoundTripAndScaling) {
  TempDir dir("png");
  Image8 img = solid(3, 2, 0);
  img.pixels[0] = 255;
  img.pixels[4] = 51;
  write_png(dir / "a.png", img);
  const Image8 back = read_png(dir / "a.png", 3);
  EXPECT_EQ(back.width, 3u);
  EXPECT_EQ(back.height, 2u);
  EXPECT_EQ(back.pixels, img.pixels);
  const Tensor t = image_to_tensor(back);
  EXPECT_EQ(t.shape(), (Shape{3, 2, 3}));
  EXPECT_EQ(t[0], 1.0);                 // channel 0, pixel (0, 0)
  EXPECT_DOUBLE_EQ(t[6 + 1], 0.2);      // channel 1, pixel (0, 1)
  const Image8 again = tensor_to_image(t);
  EXPECT_EQ(again.pixels, img.pixels);
  const Image8 gray = read_png(dir / "a.png", 1);
  EXPECT_EQ(gray.channels, 1u);
}

TEST(Png, CorruptFileNamesPath) {
  TempDir dir("png-corrupt");
  std::ofstream(dir / "bad.png") << "definitely not a png";
  try {
    read_png(dir / "bad.png", 3);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.png"), std::string::npos);
  }
  EXPECT_THROW(read_png(dir / "missing.png", 3), IoError);
}

TEST(FolderDataset, LoadsSortedClassesAndFiles) {
  TempDir dir("folder");
  fs::create_directories(dir / "b_leaf");
  fs::create_directories(dir / "a_leaf");
  write_png(dir / "b_leaf" / "x2.png", solid(4, 4, 255));
  write_png(dir / "b_leaf" / "x1.png", solid(4, 4, 255));
  write_png(dir / "a_leaf" / "z.png", solid(4, 4, 0));
  write_png(dir / "a_leaf" / "y.PNG", solid(4, 4, 0));
  std::ofstream(dir / "a_leaf" / "notes.txt") << "ignored";
  const Dataset ds = load_folder_dataset(dir.path(), 4, 3, 1.0, 0);
  EXPECT_EQ(ds.manifest.source, "folder");
  EXPECT_EQ(ds.manifest.class_names, (std::vector<std::string>{"a_leaf", "b_leaf"}));
  ASSERT_EQ(ds.manifest.samples.size(), 4u);
  EXPECT_EQ(ds.manifest.samples[0].id, "a_leaf/y.PNG");
  EXPECT_EQ(ds.manifest.samples[1].id, "a_leaf/z.png");
  EXPECT_EQ(ds.manifest.samples[2].id, "b_leaf/x1.png");
  EXPECT_EQ(ds.manifest.samples[3].class_id, 1);
  for (double v : ds.images[2].data()) EXPECT_EQ(v, 1.0);
  for (double v : ds.images[0].data()) EXPECT_EQ(v, 0.0);
}

TEST(FolderDataset, ResizesToConfiguredSize) {
  TempDir dir("folder-resize");
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  write_png(dir / "a" / "1.png", solid(10, 6, 128));
  write_png(dir / "b" / "1.png", solid(3, 3, 128));
  const Dataset ds = load_folder_dataset(dir.path(), 8, 3, 1.0, 0);
  for (const Tensor& t : ds.images) {
    EXPECT_EQ(t.shape(), (Shape{3, 8, 8}));
    for (double v : t.data()) EXPECT_NEAR(v, 128.0 / 255.0, 1e-12);
  }
}

TEST(FolderDataset, ErrorsNameTheProblem) {
  TempDir dir("folder-errors");
  EXPECT_THROW(load_folder_dataset(dir / "nope", 8), IoError);
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  write_png(dir / "a" / "1.png", solid(4, 4, 1));
  try {
    load_folder_dataset(dir.path(), 4);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("manifest error"), std::string::npos) << msg;
    EXPECT_NE(msg.find("b"), std::string::npos) << msg;
  }
  std::ofstream(dir / "b" / "broken.png") << "xx";
  try {
    load_folder_dataset(dir.path(), 4);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.png"), std::string::npos);
  }
}

TEST(Synthetic, DeterministicWithStratifiedSplit) {
  const SyntheticSpec spec;
  const Dataset a = generate_synthetic(spec);
  const Dataset b = generate_synthetic(spec);
  ASSERT_EQ(a.images.size(), 120u);
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    EXPECT_EQ(testing::max_abs_diff(a.images[i], b.images[i]), 0.0);
    EXPECT_EQ(a.manifest.samples[i].split, b.manifest.samples[i].split);
  }
  EXPECT_EQ(a.subset(Split::kTrain).size(), 90u);
  EXPECT_EQ(a.subset(Split::kTest).size(), 30u);
  std::map<int, int> train_per_class;
  for (int l : a.subset(Split::kTrain).labels) ++train_per_class[l];
  for (const auto& [k, n] : train_per_class) EXPECT_EQ(n, 30) << "class " << k;
  for (const Tensor& t : a.images) {
    EXPECT_EQ(t.shape(), (Shape{3, 32, 32}));
    for (double v : t.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  SyntheticSpec other = spec;
  other.seed = 1;
  EXPECT_GT(testing::max_abs_diff(generate_synthetic(other).images[0], a.images[0]), 0.0);
}

TEST(Synthetic, ClassesAreSeparatedInPixelSpace) {
  // Mean distance to same-class images is below the mean distance to
  // other-class images for the large majority of samples.
  SyntheticSpec spec;
  spec.per_class = 10;
  const Dataset ds = generate_synthetic(spec);
  const LabeledImages all = ds.all();
  std::size_t closer = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    double same = 0.0, other = 0.0;
    int ns = 0, no = 0;
    for (std::size_t j = 0; j < all.size(); ++j) {
      if (i == j) continue;
      const double d = pixel_distance(all.images[i], all.images[j]);
      if (all.labels[i] == all.labels[j]) {
        same += d;
        ++ns;
      } else {
        other += d;
        ++no;
      }
    }
    if (same / ns < other / no) ++closer;
  }
  EXPECT_GE(closer, all.size() * 9 / 10);
}

TEST(Synthetic, RejectsBadSpecs) {
  SyntheticSpec s;
  s.n_classes = 1;
  EXPECT_THROW(generate_synthetic(s), ConfigError);
  s = SyntheticSpec{};
  s.train_fraction = 0.0;
  EXPECT_THROW(generate_synthetic(s), ConfigError);
}

TEST(Manifest, JsonRoundTripAndValidation) {
  SyntheticSpec spec;
  spec.per_class = 3;
  spec.image_size = 8;
  const Dataset ds = generate_synthetic(spec);
  const DatasetManifest back = DatasetManifest::from_json(ds.manifest.to_json());
  EXPECT_EQ(back.class_names, ds.manifest.class_names);
  ASSERT_EQ(back.samples.size(), ds.manifest.samples.size());
  for (std::size_t i = 0; i < back.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].id, ds.manifest.samples[i].id);
    EXPECT_EQ(back.samples[i].class_id, ds.manifest.samples[i].class_id);
    EXPECT_EQ(back.samples[i].split, ds.manifest.samples[i].split);
  }
  EXPECT_THROW(DatasetManifest::from_json("{"), ConfigError);
  DatasetManifest bad = ds.manifest;
  bad.samples[0].class_id = 9;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(FolderDataset, WrittenSyntheticSetLoadsBack) {
  TempDir dir("folder-roundtrip");
  SyntheticSpec spec;
  spec.per_class = 2;
  spec.image_size = 8;
  const Dataset ds = generate_synthetic(spec);
  write_folder_dataset(ds, dir.path());
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  const Dataset back = load_folder_dataset(dir.path(), 8, 3, 1.0, 0);
  ASSERT_EQ(back.images.size(), ds.images.size());
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    // 8-bit quantization error is at most half a level.
    EXPECT_LE(testing::max_abs_diff(back.images[i], ds.images[i]), 0.5 / 255.0 + 1e-12);
  }
}

TEST(Embeddings, CsvHasOneRowPerSampleAndAllDims) {
  TempDir dir("embed");
  const SyntheticSpec spec;
  const Dataset ds = generate_synthetic(spec);
  const EncoderConfig cfg;
  const EncoderWeights w = EncoderWeights::initialize(cfg, 0);
  const auto path = dir / "embeddings.csv";
  export_embeddings(cfg, w, ds.all(), path);
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 121u);
  auto columns = [](const std::string& s) { return std::count(s.begin(), s.end(), ',') + 1; };
  EXPECT_EQ(columns(lines[0]), 66);
  EXPECT_EQ(lines[0].substr(0, 24), "sample_id,class_id,e_0,e");
  for (std::size_t i = 1; i < lines.size(); ++i) EXPECT_EQ(columns(lines[i]), 66);
  EXPECT_EQ(lines[1].substr(0, 19), "class_0/img_0000,0,");
}

TEST(Features, MatchEncoderAndIgnoreChunking) {
  SyntheticSpec spec;
  spec.per_class = 3;
  const Dataset ds = generate_synthetic(spec);
  const EncoderConfig cfg;
  const EncoderWeights w = EncoderWeights::initialize(cfg, 2);
  const Tensor f1 = compute_features(cfg, w, ds.images, 64);
  const Tensor f2 = compute_features(cfg, w, ds.images, 4);
  EXPECT_EQ(f1.shape(), (Shape{9, 64}));
  EXPECT_LT(testing::max_abs_diff(f1, f2), 1e-13);
  const ImageEmbedding e = encode(ds.images[5], cfg, w);
  for (std::size_t j = 0; j < 64; ++j) EXPECT_NEAR(f1.at(5, j), e.pre_projection[j], 1e-13);
}

}  // namespace
}  // namespace conmamba

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

#include "conmamba/probe.hpp"

#include <vector>

#include <gtest/gtest.h>

#include "conmamba/errors.hpp"
#include "conmamba/metrics.hpp"
#include "test_util.hpp"

namespace conmamba {
namespace {

struct Blobs {
  Tensor features;
  std::vector<int> labels;
};

Blobs separable_blobs(std::size_t per_class, Rng& rng) {
  const double centers[3][2] = {{3, 0}, {-3, 0}, {0, 3}};
  std::vector<double> flat;
  Blobs b;
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < per_class; ++i) {
      flat.push_back(centers[k][0] + uniform(rng, -0.5, 0.5));
      flat.push_back(centers[k][1] + uniform(rng, -0.5, 0.5));
      b.labels.push_back(k);
    }
  }
  b.features = Tensor({3 * per_class, 2}, flat);
  return b;
}

TEST(ProbeHead, LogitsAndTieBreaking) {
  ProbeHead h = ProbeHead::zeros(3, 2);
  EXPECT_EQ(h.num_classes(), 3u);
  EXPECT_EQ(h.dim(), 2u);
  const Tensor x({2, 2}, {1.0, 2.0, -1.0, 0.0});
  EXPECT_EQ(h.predict(x), (std::vector<int>{0, 0}));
  h.weight.mutable_data()[2] = 1.0;  // class 1 reads feature 0
  h.bias.mutable_data()[2] = 0.5;
  const Tensor z = h.logits(x);
  testing::expect_values(z, {0.0, 1.0, 0.5, 0.0, -1.0, 0.5});
  EXPECT_EQ(h.predict(x), (std::vector<int>{1, 2}));
  EXPECT_THROW(h.logits(Tensor::zeros({2, 3})), DimensionError);
}

TEST(Probe, SeparableDataReachesFullAccuracy) {
  Rng rng(1);
  const Blobs b = separable_blobs(20, rng);
  const ProbeHead h = train_probe(b.features, b.labels, 3);
  const MetricsReport r = evaluate(h, b.features, b.labels);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.macro_f1, 1.0);
}

TEST(Probe, ZeroStepsReturnsInitialHead) {
  Rng rng(2);
  const Blobs b = separable_blobs(5, rng);
  ProbeConfig cfg;
  cfg.steps = 0;
  const ProbeHead h = train_probe(b.features, b.labels, 3, cfg);
  for (double v : h.weight.data()) EXPECT_EQ(v, 0.0);
  for (double v : h.bias.data()) EXPECT_EQ(v, 0.0);
}

TEST(Probe, FeaturesAreLeftUntouched) {
  Rng rng(3);
  const Blobs b = separable_blobs(5, rng);
  const Tensor before = b.features.clone();
  train_probe(b.features, b.labels, 3);
  EXPECT_FALSE(b.features.has_grad());
  EXPECT_EQ(testing::max_abs_diff(before, b.features), 0.0);
}

TEST(Probe, EncoderWeightsReceiveNoGradient) {
  EncoderConfig cfg;
  cfg.image_size = 8;
  cfg.patch_size = 4;
  cfg.d_model = 4;
  cfg.n_blocks = 1;
  cfg.d_inner = 4;
  cfg.n_state = 2;
  cfg.proj_dim = 3;
  const EncoderWeights w = EncoderWeights::initialize(cfg, 0);
  for (Tensor t : w.tensors()) t.set_requires_grad();
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.per_class = 4;
  spec.image_size = 8;
  const LabeledImages data = generate_synthetic(spec).all();
  const auto snapshot = EncoderWeights::initialize(cfg, 0).tensors();
  ProbeConfig pc;
  pc.steps = 5;
  train_probe(cfg, w, data, 2, pc);
  const auto after = w.tensors();
  for (std::size_t i = 0; i < after.size(); ++i) {
    EXPECT_FALSE(after[i].has_grad());
    EXPECT_EQ(testing::max_abs_diff(after[i], snapshot[i]), 0.0);
  }
}

TEST(Probe, DegenerateTasksAreRejected) {
  const Tensor f = Tensor::zeros({3, 2});
  const std::vector<int> one_class{1, 1, 1};
  try {
    train_probe(f, one_class, 2);
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate task"), std::string::npos);
  }
  const std::vector<int> out_of_range{0, 1, 3};
  EXPECT_THROW(train_probe(f, out_of_range, 2), ContractError);
  const std::vector<int> short_labels{0, 1};
  EXPECT_THROW(train_probe(f, short_labels, 2), DimensionError);
  ProbeConfig bad;
  bad.lr = 0.0;
  const std::vector<int> ok{0, 1, 0};
  EXPECT_THROW(train_probe(f, ok, 2, bad), ConfigError);
}

}  // namespace
}  // namespace conmamba

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

#include "conmamba/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "conmamba/checkpoint.hpp"
#include "conmamba/dataset.hpp"
#include "conmamba/errors.hpp"
#include "test_util.hpp"

namespace conmamba {
namespace {

EncoderConfig tiny_encoder() {
  EncoderConfig cfg;
  cfg.image_size = 8;
  cfg.patch_size = 4;
  cfg.d_model = 6;
  cfg.n_blocks = 1;
  cfg.d_inner = 6;
  cfg.n_state = 3;
  cfg.proj_dim = 4;
  return cfg;
}

TrainConfig tiny_train(std::size_t epochs = 2) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 4;
  cfg.optimizer.lr = 1e-2;
  cfg.seed = 5;
  return cfg;
}

LabeledImages tiny_data() {
  SyntheticSpec spec;
  spec.n_classes = 2;
  spec.per_class = 6;
  spec.image_size = 8;
  spec.train_fraction = 0.75;
  spec.seed = 3;
  return generate_synthetic(spec).subset(Split::kTrain);
}

TEST(TrainConfig, ValidationNamesField) {
  auto field_of = [](TrainConfig c) {
    try {
      c.validate();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("none");
  };
  TrainConfig c;
  EXPECT_EQ(field_of(c), "none");
  c.epochs = 0;
  EXPECT_EQ(field_of(c), "train.epochs");
  c = TrainConfig{};
  c.batch_size = 1;
  EXPECT_EQ(field_of(c), "train.batch_size");
  c = TrainConfig{};
  c.optimizer.lr = 0.0;
  EXPECT_EQ(field_of(c), "train.lr");
  c = TrainConfig{};
  c.temperature = -1.0;
  EXPECT_EQ(field_of(c), "train.temperature");
  c = TrainConfig{};
  c.uncertainty_lr = 0.0;
  EXPECT_EQ(field_of(c), "train.uncertainty_lr");
  c = TrainConfig{};
  EXPECT_EQ(c.effective_uncertainty_lr(), c.optimizer.lr);
  c.uncertainty_lr = 0.5;
  EXPECT_EQ(c.effective_uncertainty_lr(), 0.5);
}

TEST(EpochOrder, IsSeededPermutation) {
  const auto a = epoch_order(1, 0, 50);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(50);
  std::iota(iota.begin(), iota.end(), std::size_t{0});
  EXPECT_EQ(sorted, iota);
  EXPECT_EQ(a, epoch_order(1, 0, 50));
  EXPECT_NE(a, epoch_order(1, 1, 50));
  EXPECT_NE(a, epoch_order(2, 0, 50));
}

TEST(Uncertainty, UpdateFollowsGradientSign) {
  auto u = losses::UncertaintyParams::initialize(0.0, 0.0);
  // ∂/∂s [L/2 · e^{-2s} + s] = 1 - L e^{-2s}: negative when L > σ², so σ grows.
  const double l_big = 4.0, l_small = 0.25;
  u.log_sigma_intra.accumulate_grad(std::vector<double>{1.0 - l_big});
  u.log_sigma_inter.accumulate_grad(std::vector<double>{1.0 - l_small});
  update_uncertainty(u, 0.1);
  EXPECT_NEAR(u.log_sigma_intra.item(), 0.3, 1e-15);
  EXPECT_NEAR(u.log_sigma_inter.item(), -0.075, 1e-15);
  EXPECT_GT(u.sigma_intra(), 1.0);
  EXPECT_LT(u.sigma_inter(), 1.0);
}

TEST(Trainer, RunsExpectedNumberOfSteps) {
  const LabeledImages data = tiny_data();
  ASSERT_EQ(data.size(), 10u);
  std::size_t calls = 0;
  const TrainState s = pretrain(tiny_train(3), tiny_encoder(), AugmentationSpec{}, data,
                                [&](const TrainState&, const LossRecord&) { ++calls; });
  EXPECT_EQ(calls, 3u * (10u / 4u));
  ASSERT_EQ(s.history.size(), calls);
  EXPECT_EQ(s.step, calls);
  EXPECT_EQ(s.epoch, 3u);
  EXPECT_EQ(s.optimizer.steps, calls);
  for (std::size_t i = 0; i < s.history.size(); ++i) {
    const LossRecord& r = s.history[i];
    EXPECT_EQ(r.step, i);
    EXPECT_EQ(r.epoch, i / 2);
    EXPECT_TRUE(std::isfinite(r.l_total));
    EXPECT_GE(r.l_intra, 0.0);
    EXPECT_GE(r.l_inter, 0.0);
  }
}

TEST(Trainer, IdenticalSeedGivesBitwiseIdenticalHistory) {
  const LabeledImages data = tiny_data();
  const TrainState a = pretrain(tiny_train(), tiny_encoder(), AugmentationSpec{}, data);
  const TrainState b = pretrain(tiny_train(), tiny_encoder(), AugmentationSpec{}, data);
  EXPECT_EQ(loss_history_csv(a.history), loss_history_csv(b.history));
  TrainConfig other = tiny_train();
  other.seed = 6;
  const TrainState c = pretrain(other, tiny_encoder(), AugmentationSpec{}, data);
  EXPECT_NE(loss_history_csv(a.history), loss_history_csv(c.history));
}

TEST(Trainer, ResumeFromCheckpointIsBitwiseIdentical) {
  const LabeledImages data = tiny_data();
  const TrainState init = initial_train_state(tiny_train(), tiny_encoder(), AugmentationSpec{});
  Trainer straight(init, data);
  for (int i = 0; i < 3; ++i) straight.step();

  testing::TempDir dir("resume");
  const auto path = dir / "ckpt.cmb";
  save_checkpoint(straight.state(), path);
  const LossRecord expected = straight.step();

  Trainer resumed(load_checkpoint(path), data);
  const LossRecord got = resumed.step();
  EXPECT_EQ(got.step, expected.step);
  EXPECT_EQ(got.l_intra, expected.l_intra);
  EXPECT_EQ(got.l_inter, expected.l_inter);
  EXPECT_EQ(got.l_total, expected.l_total);
  EXPECT_EQ(got.sigma_intra, expected.sigma_intra);
  const auto wa = straight.state().weights.tensors();
  const auto wb = resumed.state().weights.tensors();
  for (std::size_t i = 0; i < wa.size(); ++i) EXPECT_EQ(testing::max_abs_diff(wa[i], wb[i]), 0.0);
}

TEST(Trainer, FirstStepLossMatchesManualComputation) {
  // The recorded l_total must equal the uncertainty combination of the
  // recorded component losses at the initial σ = 1.
  const LabeledImages data = tiny_data();
  Trainer t(initial_train_state(tiny_train(), tiny_encoder(), AugmentationSpec{}), data);
  const LossRecord r = t.step();
  EXPECT_NEAR(r.l_total, 0.5 * r.l_intra + 0.5 * r.l_inter, 1e-14);
}

TEST(Trainer, DisabledInterLossKeepsSigmaInter) {
  TrainConfig cfg = tiny_train(1);
  cfg.inter_loss_enabled = false;
  const TrainState s = pretrain(cfg, tiny_encoder(), AugmentationSpec{}, tiny_data());
  for (const LossRecord& r : s.history) {
    EXPECT_EQ(r.l_inter, 0.0);
    EXPECT_EQ(r.sigma_inter, 1.0);
  }
  EXPECT_NE(s.history.back().sigma_intra, 1.0);
}

TEST(Trainer, NonFiniteWeightsRaiseNamedError) {
  TrainState s = initial_train_state(tiny_train(), tiny_encoder(), AugmentationSpec{});
  s.weights.blocks[0].w_fuse.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  Trainer t(std::move(s), tiny_data());
  try {
    t.step();
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("op 'matmul'"), std::string::npos) << msg;
  }
}

TEST(Trainer, TooFewImagesForOneBatch) {
  LabeledImages data = tiny_data();
  data.images.resize(3);
  data.labels.resize(3);
  data.ids.resize(3);
  EXPECT_THROW(Trainer(initial_train_state(tiny_train(), tiny_encoder(), AugmentationSpec{}), data),
               ContractError);
}

TEST(Trainer, LossDecreasesOnAverage) {
  TrainConfig cfg = tiny_train(12);
  const TrainState s = pretrain(cfg, tiny_encoder(), AugmentationSpec::identity(), tiny_data());
  auto mean_of = [&](std::size_t begin, std::size_t end) {
    double m = 0.0;
    for (std::size_t i = begin; i < end; ++i) m += s.history[i].l_intra;
    return m / static_cast<double>(end - begin);
  };
  const std::size_t n = s.history.size();
  EXPECT_LT(mean_of(n - 4, n), mean_of(0, 4));
}

TEST(LossHistory, CsvRoundTripsDoubles) {
  LossRecord r;
  r.step = 3;
  r.epoch = 1;
  r.l_intra = 0.1;
  r.l_inter = 1.0 / 3.0;
  r.l_total = std::nextafter(2.0, 3.0);
  const std::string csv = loss_history_csv({r});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,epoch,l_intra,l_inter,sigma_intra,sigma_inter,l_total");
  const std::string row = csv.substr(csv.find('\n') + 1);
  std::vector<std::string> cells;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = row.find(',', pos);
    cells.push_back(row.substr(pos, comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  ASSERT_EQ(cells.size(), 7u);
  EXPECT_EQ(cells[0], "3");
  EXPECT_EQ(std::stod(cells[3]), 1.0 / 3.0);
  EXPECT_EQ(std::stod(cells[6]), std::nextafter(2.0, 3.0));
}

}  // namespace
}  // namespace conmamba

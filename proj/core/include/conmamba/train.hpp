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
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "conmamba/augment.hpp"
#include "conmamba/dataset.hpp"
#include "conmamba/encoder.hpp"
#include "conmamba/losses.hpp"
#include "conmamba/optim.hpp"

namespace conmamba {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  OptimizerConfig optimizer;
  /// Step size for the log σ pair; negative means "same as optimizer.lr".
  double uncertainty_lr = -1.0;
  double temperature = 0.5;
  double margin = 0.5;
  double init_log_sigma_intra = 0.0;
  double init_log_sigma_inter = 0.0;
  std::uint64_t seed = 0;
  std::size_t checkpoint_interval = 0;  // steps; 0 disables periodic saves
  bool inter_loss_enabled = true;
  double grad_clip = 5.0;

  double effective_uncertainty_lr() const {
    return uncertainty_lr < 0.0 ? optimizer.lr : uncertainty_lr;
  }
  void validate() const;
};

struct LossRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double l_intra = 0.0;
  double l_inter = 0.0;
  double sigma_intra = 1.0;
  double sigma_inter = 1.0;
  double l_total = 0.0;
};

/// Everything needed to resume pretraining exactly where it stopped. The
/// epoch permutation and augmentation draws are pure functions of
/// (seed, epoch, sample index), so (seed, epoch, batch_in_epoch) is the
/// complete RNG state.
struct TrainState {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::size_t batch_in_epoch = 0;
  std::uint64_t seed = 0;
  TrainConfig train_config;
  EncoderConfig encoder_config;
  AugmentationSpec augmentation;
  EncoderWeights weights;
  losses::UncertaintyParams uncertainty;
  OptimizerState optimizer;
  std::vector<LossRecord> history;
};

TrainState initial_train_state(const TrainConfig& cfg, const EncoderConfig& encoder,
                               const AugmentationSpec& augmentation);

/// Gradient step on the log σ pair: log σ ← log σ − η ∂L/∂log σ.
void update_uncertainty(losses::UncertaintyParams& u, double lr);

/// Shuffled sample order for one epoch.
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n);

/// Runs pretraining one batch at a time.
class Trainer {
 public:
  Trainer(TrainState state, const LabeledImages& data);

  /// One optimization step on the next batch. Throws NumericalError naming
  /// the first non-finite tensor when the loss is not finite.
  const LossRecord& step();
  bool finished() const;
  std::size_t batches_per_epoch() const;

  const TrainState& state() const noexcept { return state_; }

 private:
  TrainState state_;
  LabeledImages data_;  // image tensors are shared handles, so this copy is cheap
  std::unique_ptr<Optimizer> optimizer_;
  std::vector<std::size_t> order_;
  std::size_t order_epoch_ = static_cast<std::size_t>(-1);
};

/// Callback invoked after every step; used for progress and checkpoints.
using StepCallback = std::function<void(const TrainState&, const LossRecord&)>;

/// Runs from `state` until all epochs are done.
TrainState pretrain(TrainState state, const LabeledImages& data,
                    const StepCallback& on_step = {});

/// Convenience overload starting from fresh weights.
TrainState pretrain(const TrainConfig& cfg, const EncoderConfig& encoder,
                    const AugmentationSpec& augmentation, const LabeledImages& data,
                    const StepCallback& on_step = {});

/// CSV `step,epoch,l_intra,l_inter,sigma_intra,sigma_inter,l_total`.
std::string loss_history_csv(const std::vector<LossRecord>& history);
void write_loss_history(const std::vector<LossRecord>& history,
                        const std::filesystem::path& path);

}  // namespace conmamba

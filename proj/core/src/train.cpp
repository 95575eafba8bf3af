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

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>

#include "conmamba/autodiff.hpp"
#include "conmamba/errors.hpp"
#include "conmamba/ops.hpp"
#include "conmamba/random.hpp"

namespace conmamba {

namespace {

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// First recorded op whose output went non-finite, or the loss itself.
std::string locate_non_finite(const Tape& tape) {
  for (std::size_t i = 0; i < tape.nodes().size(); ++i) {
    const TapeNode& node = tape.nodes()[i];
    if (!all_finite(node.output.data())) {
      return "op '" + node.op + "' (tape node " + std::to_string(i) + ", output " +
             shape_string(node.output.shape()) + ")";
    }
  }
  return "loss";
}

void mark_trainable(TrainState& s) {
  for (Tensor& t : s.weights.tensors()) t.set_requires_grad(true);
  s.uncertainty.log_sigma_intra.set_requires_grad(true);
  s.uncertainty.log_sigma_inter.set_requires_grad(true);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("must be >= 1", "train.epochs");
  if (batch_size < 2) throw ConfigError("must be >= 2", "train.batch_size");
  if (!(optimizer.lr > 0.0) || !std::isfinite(optimizer.lr)) {
    throw ConfigError("must be a positive finite number", "train.lr");
  }
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) {
    throw ConfigError("must lie in [0, 1)", "train.beta1");
  }
  if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("must lie in [0, 1)", "train.beta2");
  }
  if (!(optimizer.eps > 0.0)) throw ConfigError("must be > 0", "train.adam_eps");
  if (uncertainty_lr >= 0.0 && !(uncertainty_lr > 0.0)) {
    throw ConfigError("must be > 0", "train.uncertainty_lr");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("must be > 0", "train.temperature");
  }
  if (!(margin >= 0.0) || !std::isfinite(margin)) {
    throw ConfigError("must be >= 0", "train.margin");
  }
  if (!std::isfinite(init_log_sigma_intra)) {
    throw ConfigError("must be finite", "train.init_log_sigma_intra");
  }
  if (!std::isfinite(init_log_sigma_inter)) {
    throw ConfigError("must be finite", "train.init_log_sigma_inter");
  }
  if (!(grad_clip > 0.0)) throw ConfigError("must be > 0", "train.grad_clip");
}

TrainState initial_train_state(const TrainConfig& cfg, const EncoderConfig& encoder,
                               const AugmentationSpec& augmentation) {
  cfg.validate();
  encoder.validate();
  augmentation.validate();
  TrainState s;
  s.seed = cfg.seed;
  s.train_config = cfg;
  s.encoder_config = encoder;
  s.augmentation = augmentation;
  s.weights = EncoderWeights::initialize(encoder, derive_seed({cfg.seed, 0x57a7e}));
  s.uncertainty =
      losses::UncertaintyParams::initialize(cfg.init_log_sigma_intra, cfg.init_log_sigma_inter);
  return s;
}

void update_uncertainty(losses::UncertaintyParams& u, double lr) {
  for (Tensor* t : {&u.log_sigma_intra, &u.log_sigma_inter}) {
    const double g = t->grad_or_zeros()[0];
    t->mutable_data()[0] -= lr * g;
  }
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed({seed, 0xe90c, epoch}));
  shuffle(order.begin(), order.end(), rng);
  return order;
}

Trainer::Trainer(TrainState state, const LabeledImages& data)
    : state_(std::move(state)), data_(data) {
  state_.train_config.validate();
  state_.encoder_config.validate();
  state_.augmentation.validate();
  if (data_.size() < state_.train_config.batch_size) {
    throw ContractError("training set has " + std::to_string(data_.size()) +
                        " images, fewer than one batch of " +
                        std::to_string(state_.train_config.batch_size));
  }
  mark_trainable(state_);
  optimizer_ = std::make_unique<Optimizer>(state_.train_config.optimizer, state_.weights.tensors());
  if (state_.optimizer.steps > 0 || !state_.optimizer.first_moment.empty()) {
    optimizer_->set_state(state_.optimizer);
  }
  state_.optimizer = optimizer_->state();
}

std::size_t Trainer::batches_per_epoch() const {
  return data_.size() / state_.train_config.batch_size;
}

bool Trainer::finished() const { return state_.epoch >= state_.train_config.epochs; }

const LossRecord& Trainer::step() {
  if (finished()) throw ContractError("training already finished");
  const TrainConfig& cfg = state_.train_config;
  if (order_epoch_ != state_.epoch) {
    order_ = epoch_order(state_.seed, state_.epoch, data_.size());
    order_epoch_ = state_.epoch;
  }
  const std::size_t bsz = cfg.batch_size;
  const std::size_t first = state_.batch_in_epoch * bsz;

  std::vector<Tensor> views(2 * bsz);
  std::vector<int> labels(bsz);
  for (std::size_t i = 0; i < bsz; ++i) labels[i] = data_.labels[order_[first + i]];

  // An exception may not leave an OpenMP region, so each worker parks its
  // own and the first one (in sample order) is rethrown afterwards.
  std::vector<std::exception_ptr> errors(bsz);
  const auto n = static_cast<std::ptrdiff_t>(bsz);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      const std::size_t idx = order_[first + k];
      auto [v1, v2] = make_views(data_.images[idx], state_.augmentation,
                                 sample_seed(state_.seed, state_.epoch, idx));
      views[k] = std::move(v1);
      views[bsz + k] = std::move(v2);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  Tape tape;
  LossRecord rec;
  rec.step = state_.step;
  rec.epoch = state_.epoch;
  Tensor total;
  const auto non_finite = [&] {
    return NumericalError("non-finite loss at step " + std::to_string(state_.step) + " (epoch " +
                          std::to_string(state_.epoch) + "); first non-finite value in " +
                          locate_non_finite(tape));
  };
  try {
    TapeScope scope(tape);
    BatchEmbedding emb = encode_batch(views, state_.encoder_config, state_.weights);
    losses::ContrastiveBatch batch{ops::slice_rows(emb.z, 0, bsz),
                                   ops::slice_rows(emb.z, bsz, 2 * bsz), labels,
                                   cfg.temperature, cfg.margin};
    Tensor l_intra = losses::intra_loss(batch);
    rec.l_intra = l_intra.item();
    bool use_inter = cfg.inter_loss_enabled;
    Tensor l_inter;
    if (use_inter) {
      losses::InterLossResult inter = losses::inter_loss(batch);
      use_inter = !inter.degenerate;
      l_inter = inter.loss;
    }
    if (use_inter) {
      rec.l_inter = l_inter.item();
      total = losses::total_loss(l_intra, l_inter, state_.uncertainty);
    } else {
      // Without an inter term its σ has nothing to balance, so both of its
      // terms are left out and log σ_inter keeps its value.
      const Tensor& ls = state_.uncertainty.log_sigma_intra;
      Tensor w = ops::scale(ops::exp(ops::scale(ls, -2.0)), 0.5);
      total = ops::add(ops::mul(w, l_intra), ls);
    }
  } catch (const DomainError&) {
    // A NaN upstream can trip a domain check (e.g. a zero-norm test) first.
    if (locate_non_finite(tape) != "loss") throw non_finite();
    throw;
  }
  rec.l_total = total.item();
  if (!std::isfinite(rec.l_total)) throw non_finite();

  optimizer_->zero_grad();
  state_.uncertainty.log_sigma_intra.zero_grad();
  state_.uncertainty.log_sigma_inter.zero_grad();
  backward(total, tape);

  std::vector<Tensor> params = state_.weights.tensors();
  for (Tensor& p : params) p.mutable_grad();  // unreachable parameters get zeros
  clip_grad_norm(params, cfg.grad_clip);
  optimizer_->step();
  update_uncertainty(state_.uncertainty, cfg.effective_uncertainty_lr());

  rec.sigma_intra = state_.uncertainty.sigma_intra();
  rec.sigma_inter = state_.uncertainty.sigma_inter();
  state_.optimizer = optimizer_->state();
  state_.history.push_back(rec);
  ++state_.step;
  if (++state_.batch_in_epoch >= batches_per_epoch()) {
    state_.batch_in_epoch = 0;
    ++state_.epoch;
  }
  return state_.history.back();
}

TrainState pretrain(TrainState state, const LabeledImages& data, const StepCallback& on_step) {
  Trainer trainer(std::move(state), data);
  while (!trainer.finished()) {
    const LossRecord& rec = trainer.step();
    if (on_step) on_step(trainer.state(), rec);
  }
  return trainer.state();
}

TrainState pretrain(const TrainConfig& cfg, const EncoderConfig& encoder,
                    const AugmentationSpec& augmentation, const LabeledImages& data,
                    const StepCallback& on_step) {
  return pretrain(initial_train_state(cfg, encoder, augmentation), data, on_step);
}

std::string loss_history_csv(const std::vector<LossRecord>& history) {
  std::ostringstream out;
  out << "step,epoch,l_intra,l_inter,sigma_intra,sigma_inter,l_total\n";
  char buf[256];
  for (const LossRecord& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.epoch,
                  r.l_intra, r.l_inter, r.sigma_intra, r.sigma_inter, r.l_total);
    out << buf;
  }
  return out.str();
}

void write_loss_history(const std::vector<LossRecord>& history,
                        const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << loss_history_csv(history);
  if (!f) throw IoError("write failed for " + path.string());
}

}  // namespace conmamba

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

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "conmamba/autodiff.hpp"
#include "conmamba/encoder.hpp"
#include "conmamba/losses.hpp"
#include "conmamba/ops.hpp"
#include "conmamba/random.hpp"
#include "conmamba/ssm.hpp"

namespace {

using namespace conmamba;

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = uniform(rng, lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

constexpr std::size_t kInner = 16;
constexpr std::size_t kState = 8;

struct ScanInputs {
  Tensor a, delta, b, c, x, d_skip;
};

ScanInputs scan_inputs(std::size_t len) {
  Rng rng(derive_seed({11, len}));
  return {random_tensor({kInner, kState}, rng, -2.0, -0.1),
          random_tensor({len, kInner}, rng, 1e-3, 0.1),
          random_tensor({len, kState}, rng, -1.0, 1.0),
          random_tensor({len, kState}, rng, -1.0, 1.0),
          random_tensor({len, kInner}, rng, -1.0, 1.0),
          random_tensor({kInner}, rng, -1.0, 1.0)};
}

void BM_ScanFused(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const ScanInputs in = scan_inputs(len);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ssm::scan_sequential(in.a, in.delta, in.b, in.c, in.x, in.d_skip));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ScanFused)->RangeMultiplier(4)->Range(256, 65536)->Complexity(benchmark::oN);

void BM_ScanSequential(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const ScanInputs in = scan_inputs(len);
  const auto steps = ssm::discretize_sequence(in.a, in.delta, in.b, in.x);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ssm::scan_sequential(steps, in.c, in.x, in.d_skip));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ScanSequential)->RangeMultiplier(4)->Range(256, 16384)->Complexity(benchmark::oN);

void BM_ScanParallel(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const ScanInputs in = scan_inputs(len);
  const auto steps = ssm::discretize_sequence(in.a, in.delta, in.b, in.x);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ssm::scan_parallel(steps, in.c, in.x, in.d_skip));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ScanParallel)->RangeMultiplier(4)->Range(256, 16384)->Complexity(benchmark::oN);

// Forward plus backward through the differentiable scan.
void BM_SelectiveScanGrad(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  Rng rng(derive_seed({12, len}));
  Tensor x = random_tensor({len, kInner}, rng, -1.0, 1.0);
  Tensor delta = random_tensor({len, kInner}, rng, 1e-3, 0.1);
  Tensor a_log = random_tensor({kInner, kState}, rng, -1.0, 1.0);
  Tensor b = random_tensor({len, kState}, rng, -1.0, 1.0);
  Tensor c = random_tensor({len, kState}, rng, -1.0, 1.0);
  Tensor d_skip = random_tensor({kInner}, rng, -1.0, 1.0);
  for (Tensor* t : {&x, &delta, &a_log, &b, &c, &d_skip}) t->set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = ops::sum(ssm::selective_scan(x, delta, a_log, b, c, d_skip, len));
    }
    backward(loss, tape);
    benchmark::DoNotOptimize(a_log.grad_or_zeros());
  }
}
BENCHMARK(BM_SelectiveScanGrad)->Arg(64)->Arg(256)->Arg(1024);

void BM_EncodeBatch(benchmark::State& state) {
  EncoderConfig cfg;
  const auto batch = static_cast<std::size_t>(state.range(0));
  const EncoderWeights w = EncoderWeights::initialize(cfg, 3);
  Rng rng(13);
  std::vector<Tensor> images;
  for (std::size_t i = 0; i < batch; ++i) {
    images.push_back(random_tensor({cfg.channels, cfg.image_size, cfg.image_size}, rng, 0.0, 1.0));
  }
  NoGradScope no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(encode_batch(images, cfg, w));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncodeBatch)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ContrastiveLosses(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(14);
  const Tensor z1 = ops::l2_normalize(random_tensor({batch, 32}, rng, -1.0, 1.0));
  const Tensor z2 = ops::l2_normalize(random_tensor({batch, 32}, rng, -1.0, 1.0));
  std::vector<int> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<int>(i % 4);
  const losses::ContrastiveBatch cb{z1, z2, labels, 0.5, 0.5};
  NoGradScope no_grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(losses::intra_loss(cb));
    benchmark::DoNotOptimize(losses::inter_loss(cb));
  }
}
BENCHMARK(BM_ContrastiveLosses)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();

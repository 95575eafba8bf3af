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

#include "conmamba/ssm.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "conmamba/autodiff.hpp"
#include "conmamba/errors.hpp"
#include "conmamba/gradcheck.hpp"
#include "conmamba/ops.hpp"
#include "test_util.hpp"

namespace conmamba {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;

struct ScanInputs {
  Tensor a, delta, b, c, x, d_skip;
};

ScanInputs random_inputs(std::size_t len, std::size_t d, std::size_t n, Rng& rng) {
  ScanInputs in;
  in.a = random_tensor({d, n}, rng, -3.0, -0.05);
  in.delta = random_tensor({len, d}, rng, 0.01, 0.5);
  in.b = random_tensor({len, n}, rng);
  in.c = random_tensor({len, n}, rng);
  in.x = random_tensor({len, d}, rng);
  in.d_skip = random_tensor({d}, rng);
  return in;
}

// Direct transcription of the recurrence with the closed-form ZOH rule.
Tensor naive_scan(const ScanInputs& in) {
  const std::size_t len = in.x.dim(0), d = in.a.dim(0), n = in.a.dim(1);
  std::vector<double> h(d * n, 0.0), y(len * d, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t i = 0; i < d; ++i) {
      double acc = in.d_skip[i] * in.x.at(t, i);
      for (std::size_t s = 0; s < n; ++s) {
        const double a = in.a.at(i, s);
        const double dt = in.delta.at(t, i);
        const double a_bar = std::exp(dt * a);
        const double b_bar = (a_bar - 1.0) / a * in.b.at(t, s);
        double& state = h[i * n + s];
        state = a_bar * state + b_bar * in.x.at(t, i);
        acc += in.c.at(t, s) * state;
      }
      y[t * d + i] = acc;
    }
  }
  return Tensor({len, d}, y);
}

TEST(Discretize, ClosedFormAtLnTwo) {
  const ssm::ZohStep s = ssm::discretize_zoh(-1.0, 1.0, std::log(2.0));
  EXPECT_NEAR(s.a_bar, 0.5, 1e-12);
  EXPECT_NEAR(s.b_bar, 0.5, 1e-12);
}

TEST(Discretize, SmallStateEntryApproachesDeltaB) {
  const ssm::ZohStep s = ssm::discretize_zoh(-1e-12, 2.0, 0.1);
  EXPECT_NEAR(s.a_bar, 1.0, 1e-12);
  EXPECT_NEAR(s.b_bar, 0.2, 1e-12);
}

TEST(Discretize, RejectsNonPositiveStepAndNonNegativeA) {
  EXPECT_THROW(ssm::discretize_zoh(-1.0, 1.0, 0.0), ContractError);
  EXPECT_THROW(ssm::discretize_zoh(-1.0, 1.0, -0.1), ContractError);
  EXPECT_THROW(ssm::discretize_zoh(0.0, 1.0, 0.1), ContractError);
}

TEST(Discretize, ContinuousAcrossTaylorThreshold) {
  for (double delta : {1.0, 0.1, 3.0}) {
    const double a_edge = -ssm::kTaylorThreshold / delta;
    const double inside = std::nextafter(a_edge, 0.0);
    const double outside = std::nextafter(a_edge, -1.0);
    const auto lo = ssm::discretize_zoh(inside, 1.0, delta);
    const auto hi = ssm::discretize_zoh(outside, 1.0, delta);
    EXPECT_LT(std::abs(lo.b_bar - hi.b_bar), 1e-9) << "delta " << delta;
    EXPECT_LT(std::abs(lo.a_bar - hi.a_bar), 1e-9) << "delta " << delta;
    // The Taylor side differs from the exact value by the dropped Δ·u²/6 term.
    const double u = delta * inside;
    EXPECT_NEAR(lo.b_bar, std::expm1(u) / inside, 1.01 * delta * u * u / 6.0 + 1e-15);
  }
}

TEST(Discretize, CoefficientPartialsMatchDifferences) {
  for (double a : {-2.0, -0.3, -1e-8}) {
    const double delta = 0.7, h = 1e-6;
    const auto c = ssm::zoh_input_coefficient(a, delta);
    const double dd = (ssm::zoh_input_coefficient(a, delta + h).value -
                       ssm::zoh_input_coefficient(a, delta - h).value) / (2 * h);
    EXPECT_NEAR(c.d_delta, dd, 1e-7) << "a " << a;
    if (a < -1e-3) {
      const double da = (ssm::zoh_input_coefficient(a + h, delta).value -
                         ssm::zoh_input_coefficient(a - h, delta).value) / (2 * h);
      EXPECT_NEAR(c.d_a, da, 1e-7) << "a " << a;
    } else {
      EXPECT_NEAR(c.d_a, 0.5 * delta * delta, 1e-7);
    }
  }
}

TEST(Discretize, TensorFormMatchesScalarForm) {
  Rng rng(3);
  Tensor a = random_tensor({2, 3}, rng, -2.0, -0.1);
  Tensor b = random_tensor({3}, rng);
  Tensor delta = random_tensor({2}, rng, 0.1, 1.0);
  const ssm::DiscreteStep step = ssm::discretize_zoh(a, b, delta);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t s = 0; s < 3; ++s) {
      const auto ref = ssm::discretize_zoh(a.at(i, s), b[s], delta[i]);
      EXPECT_EQ(step.a_bar.at(i, s), ref.a_bar);
      EXPECT_EQ(step.b_bar.at(i, s), ref.b_bar);
    }
  }
}

TEST(Recurrence, ParallelEqualsSequentialForAllLengths) {
  Rng rng(11);
  for (std::size_t len : {1u, 2u, 3u, 5u, 8u, 13u, 64u, 100u, 257u}) {
    const std::size_t width = 3;
    std::vector<double> a(len * width), b(len * width);
    for (double& v : a) v = uniform(rng, 0.0, 1.0);
    for (double& v : b) v = uniform(rng, -1.0, 1.0);
    std::vector<double> hs(len * width), hp(len * width);
    ssm::recurrence_sequential(a, b, hs, len, width);
    ssm::recurrence_parallel(a, b, hp, len, width);
    for (std::size_t i = 0; i < hs.size(); ++i) EXPECT_NEAR(hs[i], hp[i], 1e-13) << len;
  }
}

TEST(Recurrence, SequentialMatchesHandComputation) {
  const std::vector<double> a{0.5, 0.5, 0.5}, b{1.0, 1.0, 1.0};
  std::vector<double> h(3);
  ssm::recurrence_sequential(a, b, h, 3, 1);
  EXPECT_EQ(h, (std::vector<double>{1.0, 1.5, 1.75}));
}

TEST(Scan, SequentialMatchesNaiveOracle) {
  Rng rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    const ScanInputs in = random_inputs(1 + uniform_index(rng, 60), 3, 4, rng);
    const Tensor ref = naive_scan(in);
    const auto steps = ssm::discretize_sequence(in.a, in.delta, in.b, in.x);
    EXPECT_LT(max_abs_diff(ssm::scan_sequential(steps, in.c, in.x, in.d_skip), ref), 1e-12);
    EXPECT_LT(max_abs_diff(ssm::scan_parallel(steps, in.c, in.x, in.d_skip), ref), 1e-12);
    const Tensor fused = ssm::scan_sequential(in.a, in.delta, in.b, in.c, in.x, in.d_skip);
    EXPECT_LT(max_abs_diff(fused, ref), 1e-12);
  }
}

TEST(Scan, FusedAndStepwiseSequentialAreBitwiseEqual) {
  Rng rng(22);
  const ScanInputs in = random_inputs(200, 4, 5, rng);
  const auto steps = ssm::discretize_sequence(in.a, in.delta, in.b, in.x);
  const Tensor s1 = ssm::scan_sequential(steps, in.c, in.x, in.d_skip);
  const Tensor s2 = ssm::scan_sequential(in.a, in.delta, in.b, in.c, in.x, in.d_skip);
  EXPECT_EQ(max_abs_diff(s1, s2), 0.0);
}

TEST(Scan, ParallelEqualsSequentialOnRandomInstances) {
  Rng rng(23);
  for (int rep = 0; rep < 25; ++rep) {
    const ScanInputs in = random_inputs(1 + uniform_index(rng, 1024), 2, 3, rng);
    const auto steps = ssm::discretize_sequence(in.a, in.delta, in.b, in.x);
    EXPECT_LT(max_abs_diff(ssm::scan_sequential(steps, in.c, in.x, in.d_skip),
                           ssm::scan_parallel(steps, in.c, in.x, in.d_skip)),
              1e-10);
  }
}

TEST(Scan, EmptySequence) {
  Rng rng(24);
  const ScanInputs in = random_inputs(0, 2, 3, rng);
  const Tensor y = ssm::scan_sequential(in.a, in.delta, in.b, in.c, in.x, in.d_skip);
  EXPECT_EQ(y.shape(), (Shape{0, 2}));
}

TEST(Scan, ZeroInputGivesZeroOutput) {
  Rng rng(25);
  ScanInputs in = random_inputs(16, 2, 3, rng);
  in.x = Tensor::zeros({16, 2});
  const Tensor y = ssm::scan_sequential(in.a, in.delta, in.b, in.c, in.x, in.d_skip);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Scan, RejectsNonPositiveStep) {
  Rng rng(26);
  ScanInputs in = random_inputs(4, 2, 3, rng);
  in.delta.mutable_data()[3] = 0.0;
  EXPECT_THROW(ssm::discretize_sequence(in.a, in.delta, in.b, in.x), ContractError);
  EXPECT_THROW(ssm::scan_sequential(in.a, in.delta, in.b, in.c, in.x, in.d_skip), ContractError);
}

TEST(SelectiveScan, ForwardMatchesOracleAndModesAgree) {
  Rng rng(31);
  const std::size_t len = 9, d = 3, n = 2;
  ScanInputs in = random_inputs(len, d, n, rng);
  Tensor a_log = random_tensor({d, n}, rng, -1.0, 1.0);
  for (std::size_t i = 0; i < d * n; ++i) in.a.mutable_data()[i] = -std::exp(a_log[i]);
  const Tensor ref = naive_scan(in);
  const Tensor s = ssm::selective_scan(in.x, in.delta, a_log, in.b, in.c, in.d_skip, len,
                                       ssm::ScanMode::kSequential);
  const Tensor p = ssm::selective_scan(in.x, in.delta, a_log, in.b, in.c, in.d_skip, len,
                                       ssm::ScanMode::kParallel);
  EXPECT_LT(max_abs_diff(s, ref), 1e-12);
  EXPECT_LT(max_abs_diff(p, ref), 1e-12);
}

TEST(SelectiveScan, SequencesInABatchAreIndependent) {
  Rng rng(32);
  const std::size_t len = 6, d = 2, n = 3;
  Tensor x = random_tensor({2 * len, d}, rng);
  Tensor delta = random_tensor({2 * len, d}, rng, 0.05, 0.5);
  Tensor a_log = random_tensor({d, n}, rng);
  Tensor b = random_tensor({2 * len, n}, rng);
  Tensor c = random_tensor({2 * len, n}, rng);
  Tensor dk = random_tensor({d}, rng);
  const Tensor both = ssm::selective_scan(x, delta, a_log, b, c, dk, len);
  auto part = [&](const Tensor& t, std::size_t k) { return ops::slice_rows(t, k * len, (k + 1) * len); };
  for (std::size_t k = 0; k < 2; ++k) {
    const Tensor one = ssm::selective_scan(part(x, k), part(delta, k), a_log, part(b, k),
                                           part(c, k), dk, len);
    EXPECT_EQ(max_abs_diff(one, part(both, k)), 0.0);
  }
}

TEST(SelectiveScan, GradientMatchesFiniteDifferences) {
  Rng rng(33);
  const std::size_t len = 5, d = 2, n = 3;
  std::vector<Tensor> params{random_tensor({2 * len, d}, rng),
                             random_tensor({2 * len, d}, rng, 0.05, 0.5),
                             random_tensor({d, n}, rng),
                             random_tensor({2 * len, n}, rng),
                             random_tensor({2 * len, n}, rng),
                             random_tensor({d}, rng)};
  const Tensor w = random_tensor({2 * len, d}, rng);
  for (auto mode : {ssm::ScanMode::kSequential, ssm::ScanMode::kParallel}) {
    const auto r = grad_check(
        [&] {
          return ops::sum(ops::mul(ssm::selective_scan(params[0], params[1], params[2], params[3],
                                                       params[4], params[5], len, mode),
                                   w));
        },
        params);
    EXPECT_LT(r.max_rel_error, 1e-8);
  }
}

TEST(SelectiveSsm, ReverseDirectionIsReversedForwardOfReversedInput) {
  Rng rng(41);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t len = 1 + uniform_index(rng, 40);
    const auto params = ssm::SelectiveSSMParams::initialize(4, 3, rng);
    const Tensor x = random_tensor({2 * len, 4}, rng);
    const Tensor bwd = ssm::selective_ssm_reverse(x, params, len);
    const Tensor ref =
        ops::reverse_blocks(ssm::selective_ssm(ops::reverse_blocks(x, len), params, len), len);
    EXPECT_LT(max_abs_diff(bwd, ref), 1e-12);
  }
}

TEST(SelectiveSsm, InitializationRanges) {
  Rng rng(42);
  const auto p = ssm::SelectiveSSMParams::initialize(8, 4, rng);
  EXPECT_EQ(p.d_inner(), 8u);
  EXPECT_EQ(p.n_state(), 4u);
  const Tensor a = p.state_matrix();
  for (double v : a.data()) {
    EXPECT_LE(v, -1.0 + 1e-12);
    EXPECT_GE(v, -4.0 - 1e-12);
  }
  for (double v : p.d_skip.data()) EXPECT_EQ(v, 1.0);
  const auto proj = ssm::selective_params(Tensor::zeros({3, 8}), p);
  for (double v : proj.delta.data()) EXPECT_NEAR(v, 0.05, 1e-9);
}

TEST(SelectiveSsm, StepSizesArePositive) {
  Rng rng(43);
  const auto p = ssm::SelectiveSSMParams::initialize(4, 2, rng);
  const auto proj = ssm::selective_params(random_tensor({20, 4}, rng, -50.0, 50.0), p);
  for (double v : proj.delta.data()) EXPECT_GT(v, 0.0);
}

}  // namespace
}  // namespace conmamba

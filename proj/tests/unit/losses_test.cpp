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

#include "conmamba/losses.hpp"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "conmamba/autodiff.hpp"
#include "conmamba/errors.hpp"
#include "conmamba/gradcheck.hpp"
#include "conmamba/ops.hpp"
#include "test_util.hpp"

namespace conmamba::losses {
namespace {

using testing::random_tensor;

Tensor unit_rows(std::size_t rows, std::size_t dim, Rng& rng) {
  return ops::l2_normalize(random_tensor({rows, dim}, rng));
}

double dot_rows(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(j, k);
  return s;
}

// Straight-line NT-Xent over the pooled views, positive kept in the denominator.
double nt_xent_oracle(const Tensor& z1, const Tensor& z2, double tau) {
  const Tensor z = ops::concat_rows(z1, z2);
  const std::size_t n = z.dim(0), b = n / 2;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pos = i < b ? i + b : i - b;
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) denom += std::exp(dot_rows(z, i, z, k) / tau);
    }
    total += -std::log(std::exp(dot_rows(z, i, z, pos) / tau) / denom);
  }
  return total / static_cast<double>(n);
}

double hinge_oracle(const Tensor& z1, const Tensor& z2, const std::vector<int>& labels,
                    double margin) {
  const Tensor z = ops::concat_rows(z1, z2);
  std::vector<int> lab(labels);
  lab.insert(lab.end(), labels.begin(), labels.end());
  const std::size_t n = z.dim(0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double min_pos = 1e300, max_neg = -1e300;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      const double s = dot_rows(z, i, z, k);
      if (lab[k] == lab[i]) min_pos = std::min(min_pos, s);
      else max_neg = std::max(max_neg, s);
    }
    total += std::max(0.0, margin - min_pos + max_neg);
  }
  return total / static_cast<double>(n);
}

TEST(IntraLoss, MatchesOracle) {
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t b = 2 + uniform_index(rng, 7);
    ContrastiveBatch batch{unit_rows(b, 5, rng), unit_rows(b, 5, rng), {}, 0.3 + 0.1 * rep, 0.5};
    EXPECT_NEAR(intra_loss(batch).item(), nt_xent_oracle(batch.z1, batch.z2, batch.temperature),
                1e-12);
  }
}

TEST(IntraLoss, NeverNegative) {
  Rng rng(2);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t b = 2 + uniform_index(rng, 8);
    Tensor z1 = unit_rows(b, 4, rng);
    ContrastiveBatch batch{z1, rep % 3 == 0 ? z1.clone() : unit_rows(b, 4, rng), {}, 0.05 + uniform01(rng), 0.5};
    EXPECT_GE(intra_loss(batch).item(), 0.0);
  }
}

TEST(IntraLoss, IdenticalEmbeddingsGiveLogOfCandidates) {
  for (std::size_t b : {2u, 4u, 16u}) {
    Tensor z = Tensor::zeros({b, 3});
    for (std::size_t i = 0; i < b; ++i) z.mutable_data()[i * 3] = 1.0;
    ContrastiveBatch batch{z, z.clone(), {}, 0.5, 0.5};
    EXPECT_NEAR(intra_loss(batch).item(), std::log(2.0 * b - 1.0), 1e-9);
  }
}

TEST(IntraLoss, RejectsSmallBatchAndBadTemperature) {
  Rng rng(3);
  ContrastiveBatch one{unit_rows(1, 3, rng), unit_rows(1, 3, rng), {0}, 0.5, 0.5};
  EXPECT_THROW(intra_loss(one), ContractError);
  ContrastiveBatch cold{unit_rows(2, 3, rng), unit_rows(2, 3, rng), {0, 1}, 0.0, 0.5};
  EXPECT_THROW(intra_loss(cold), ContractError);
  ContrastiveBatch mismatch{unit_rows(2, 3, rng), unit_rows(3, 3, rng), {0, 1}, 0.5, 0.5};
  EXPECT_THROW(intra_loss(mismatch), DimensionError);
}

TEST(InterLoss, MatchesOracle) {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t b = 2 + uniform_index(rng, 8);
    std::vector<int> labels(b);
    for (int& l : labels) l = static_cast<int>(uniform_index(rng, 3));
    labels[0] = 0;
    labels[1] = 1;
    ContrastiveBatch batch{unit_rows(b, 4, rng), unit_rows(b, 4, rng), labels, 0.5, 0.3};
    const InterLossResult r = inter_loss(batch);
    EXPECT_FALSE(r.degenerate);
    EXPECT_NEAR(r.loss.item(), hinge_oracle(batch.z1, batch.z2, labels, 0.3), 1e-12);
  }
}

TEST(InterLoss, EqualSimilaritiesGiveExactlyMargin) {
  Tensor sim = Tensor::full({4, 4}, 0.25);
  const std::vector<int> labels{0, 0, 1, 1};
  EXPECT_EQ(margin_hinge_from_similarity(sim, labels, 0.5).item(), 0.5);
  // Every embedding identical: sim is all ones, so each term is m.
  Tensor z = Tensor::zeros({2, 3});
  z.mutable_data()[0] = 1.0;
  z.mutable_data()[3] = 1.0;
  ContrastiveBatch batch{z, z.clone(), {0, 1}, 0.5, 0.25};
  EXPECT_EQ(inter_loss(batch).loss.item(), 0.25);
}

TEST(InterLoss, SatisfiedMarginGivesExactlyZero) {
  // Orthogonal classes: positive similarity 1, negative 0, margin 0.5.
  Tensor z1({2, 2}, {1, 0, 0, 1});
  ContrastiveBatch batch{z1, z1.clone(), {0, 1}, 0.5, 0.5};
  EXPECT_EQ(inter_loss(batch).loss.item(), 0.0);
}

TEST(InterLoss, TiesPickLowestIndex) {
  // Anchor 0 has two negatives with equal similarity; the gradient must land
  // on the first of them only.
  Tensor sim({4, 4}, {1.0, 0.2, 0.9, 0.9,
                      0.2, 1.0, 0.0, 0.0,
                      0.9, 0.0, 1.0, 0.5,
                      0.9, 0.0, 0.5, 1.0});
  sim.set_requires_grad();
  const std::vector<int> labels{0, 0, 1, 1};
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = margin_hinge_from_similarity(sim, labels, 0.5);
  }
  backward(loss, tape);
  const auto g = sim.grad();
  EXPECT_EQ(g[0 * 4 + 1], -0.25);
  EXPECT_EQ(g[0 * 4 + 2], 0.25);
  EXPECT_EQ(g[0 * 4 + 3], 0.0);
}

TEST(InterLoss, SingleClassBatchIsDegenerate) {
  Rng rng(5);
  ContrastiveBatch batch{unit_rows(3, 4, rng), unit_rows(3, 4, rng), {2, 2, 2}, 0.5, 0.5};
  const InterLossResult r = inter_loss(batch);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.loss.item(), 0.0);
}

TEST(InterLoss, RejectsWrongLabelCount) {
  Rng rng(6);
  ContrastiveBatch batch{unit_rows(3, 4, rng), unit_rows(3, 4, rng), {0, 1}, 0.5, 0.5};
  EXPECT_THROW(inter_loss(batch), DimensionError);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  std::vector<Tensor> params{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};
  const std::vector<int> labels{0, 1, 1};
  auto build = [&] {
    return ContrastiveBatch{ops::l2_normalize(params[0]), ops::l2_normalize(params[1]), labels,
                            0.5, 0.5};
  };
  EXPECT_LT(grad_check([&] { return intra_loss(build()); }, params).max_rel_error, 1e-8);
  EXPECT_LT(grad_check([&] { return inter_loss(build()).loss; }, params).max_rel_error, 1e-8);
}

TEST(TotalLoss, MatchesFormula) {
  const auto u = UncertaintyParams::initialize(0.3, -0.2);
  const double li = 1.7, le = 0.4;
  const double expected = li / (2 * std::exp(0.6)) + le / (2 * std::exp(-0.4)) + 0.3 - 0.2;
  EXPECT_NEAR(total_loss(Tensor::scalar(li), Tensor::scalar(le), u).item(), expected, 1e-14);
  EXPECT_NEAR(u.sigma_intra(), std::exp(0.3), 1e-15);
}

TEST(TotalLoss, DescentOnLogSigmaReachesStationaryPoint) {
  const std::vector<std::pair<double, double>> cases{{1.0, 1.0}, {0.05, 10.0}, {3.3, 0.7}, {10.0, 10.0}};
  for (const auto& [li, le] : cases) {
    auto u = UncertaintyParams::initialize();
    u.log_sigma_intra.set_requires_grad();
    u.log_sigma_inter.set_requires_grad();
    for (int step = 0; step < 2000; ++step) {
      Tape tape;
      Tensor loss;
      {
        TapeScope scope(tape);
        loss = total_loss(Tensor::scalar(li), Tensor::scalar(le), u);
      }
      backward(loss, tape);
      for (Tensor* p : {&u.log_sigma_intra, &u.log_sigma_inter}) {
        p->mutable_data()[0] -= 0.1 * p->grad()[0];
        p->clear_grad();
      }
    }
    EXPECT_NEAR(u.sigma_intra() * u.sigma_intra(), li, 1e-3);
    EXPECT_NEAR(u.sigma_inter() * u.sigma_inter(), le, 1e-3);
    const double final_loss = total_loss(Tensor::scalar(li), Tensor::scalar(le), u).item();
    EXPECT_NEAR(final_loss, 1.0 + 0.5 * std::log(li * le), 1e-6);
  }
}

}  // namespace
}  // namespace conmamba::losses

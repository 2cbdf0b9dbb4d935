// Copyright 2026 The emotts Authors
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

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "emotts/losses.hpp"
#include "grad_check.hpp"
#include "oracles.hpp"

namespace emotts::losses {
namespace {

using testing::RandomMat;

TEST(Kernel, ZeroDistanceIsEtaSum) {
  KernelBank bank{{{0.5, 0.3}, {2.0, 1.2}, {7.0, 0.05}}};
  std::vector<double> x{0.3, -1.0, 2.0};
  EXPECT_DOUBLE_EQ(Kernel(x, x, bank), bank.EtaSum());
}

TEST(Kernel, ClosedFormSingleComponent) {
  KernelBank bank{{{0.5, 1.0}}};
  // ||x - y||^2 = 1, so exp(-1 / (2 * 0.5)) = exp(-1).
  EXPECT_NEAR(Kernel(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 0.0}, bank),
              0.36787944117144233, 1e-15);
}

TEST(Kernel, SymmetricAndBounded) {
  Rng rng(3);
  const auto bank = KernelBank::Default();
  for (int i = 0; i < 200; ++i) {
    Mat x = RandomMat(1, 4, rng, 3.0), y = RandomMat(1, 4, rng, 3.0);
    const double k = Kernel(x, y, bank);
    EXPECT_EQ(k, Kernel(y, x, bank));
    EXPECT_GT(k, 0.0);
    EXPECT_LE(k, bank.EtaSum());
  }
}

TEST(Kernel, DimensionMismatch) {
  EXPECT_THROW(Kernel(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}, KernelBank::Default()),
               Error);
}

TEST(Kernel, InvalidBank) {
  KernelBank bad{{{0.0, 1.0}}};
  EXPECT_THROW(MmdLoss(Mat::Ones(2, 2), Mat::Ones(2, 2), bad), Error);
  EXPECT_THROW(MmdLoss(Mat::Ones(2, 2), Mat::Ones(2, 2), KernelBank{}), Error);
}

TEST(Mmd, IdenticalSetsGiveZero) {
  Rng rng(5);
  Mat s = RandomMat(6, 3, rng);
  EXPECT_LE(std::abs(MmdLoss(s, s, KernelBank::Default())), 1e-8);
}

TEST(Mmd, SinglePairClosedForm) {
  KernelBank bank{{{1.0, 0.25}, {3.0, 0.75}}};
  Rng rng(6);
  Mat s = RandomMat(1, 4, rng), t = RandomMat(1, 4, rng);
  EXPECT_NEAR(MmdLoss(s, t, bank), 2.0 * (1.0 - Kernel(s, t, bank)), 1e-14);
}

TEST(Mmd, MatchesBruteForceOracle) {
  Rng rng(7);
  const auto bank = KernelBank::Default();
  for (int trial = 0; trial < 50; ++trial) {
    Mat s = RandomMat(5, 3, rng), t = RandomMat(7, 3, rng, 2.0);
    EXPECT_NEAR(MmdLoss(s, t, bank), testing::BruteForceMmd(s, t, bank, 2.0), 1e-10);
    EXPECT_NEAR(MmdLoss(s, t, bank, MmdCross::kLiteral), testing::BruteForceMmd(s, t, bank, 1.0),
                1e-10);
  }
}

TEST(Mmd, SymmetricAndPermutationInvariant) {
  Rng rng(8);
  const auto bank = KernelBank::Default();
  Mat s = RandomMat(6, 4, rng), t = RandomMat(9, 4, rng);
  const double base = MmdLoss(s, t, bank);
  EXPECT_NEAR(MmdLoss(t, s, bank), base, 1e-12);
  std::vector<int> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  rng.Shuffle(perm);
  Mat tp(9, 4);
  for (int i = 0; i < 9; ++i) tp.row(i) = t.row(perm[i]);
  EXPECT_NEAR(MmdLoss(s, tp, bank), base, 1e-12);
}

TEST(Mmd, EmptyOrMismatchedInputs) {
  const auto bank = KernelBank::Default();
  EXPECT_THROW(MmdLoss(Mat(0, 3), Mat::Ones(2, 3), bank), Error);
  EXPECT_THROW(MmdLoss(Mat::Ones(2, 2), Mat::Ones(2, 3), bank), Error);
}

TEST(Mmd, GradientMatchesFiniteDifferences) {
  Rng rng(9);
  const auto bank = KernelBank::Default();
  for (auto cross : {MmdCross::kStandard, MmdCross::kLiteral}) {
    auto f = [&](ag::Tape&, std::vector<ag::Var>& in) { return Mmd(in[0], in[1], bank, cross); };
    EXPECT_LT(testing::MaxRelativeGradError(f, {RandomMat(4, 3, rng), RandomMat(5, 3, rng)}),
              1e-6);
  }
}

TEST(ClassWeights, FromCounts) {
  auto balanced = ClassWeightsFromCounts({25, 25, 25, 25});
  for (double w : balanced.w) EXPECT_DOUBLE_EQ(w, 1.0);
  auto w = ClassWeightsFromCounts({10, 30});
  EXPECT_DOUBLE_EQ(w[0], 2.0);
  EXPECT_NEAR(w[1], 0.6666666666666666, 1e-15);
  auto doubled = ClassWeightsFromCounts({20, 60});
  EXPECT_EQ(doubled.w, w.w);
  EXPECT_THROW(ClassWeightsFromCounts({3, 0}), Error);
}

TEST(WeightedCe, PerfectPredictionIsNearZero) {
  EXPECT_NEAR(WeightedCe(std::vector<double>{1, 0, 0, 0}, std::vector<double>{1, 0, 0, 0},
                         ClassWeights::Uniform(4)),
              0.0, 1e-12);
}

TEST(WeightedCe, ClosedForm) {
  ClassWeights w{{2.0, 1.0}};
  EXPECT_NEAR(WeightedCe(std::vector<double>{1, 0}, std::vector<double>{0.8, 0.2}, w),
              -2.0 * std::log(0.8), 1e-12);
  EXPECT_NEAR(-2.0 * std::log(0.8), 0.44629, 1e-5);
}

TEST(WeightedCe, LinearInWeightsAndSoftTargets) {
  Rng rng(10);
  Mat logits = RandomMat(6, 4, rng), targets_raw = RandomMat(6, 4, rng);
  Mat p = ag::SoftmaxRowsOf(logits), y = ag::SoftmaxRowsOf(targets_raw);
  ClassWeights w{{0.5, 1.5, 2.0, 0.25}}, w2{{1.0, 3.0, 4.0, 0.5}};
  EXPECT_DOUBLE_EQ(WeightedCe(y, p, w2), 2.0 * WeightedCe(y, p, w));
  // Soft target weighting uses argmax of the target row.
  Mat one = y.topRows(1), pone = p.topRows(1);
  Eigen::Index k;
  one.row(0).maxCoeff(&k);
  double plain = -(one.array() * pone.array().log()).sum();
  EXPECT_NEAR(WeightedCe(one, pone, w), w[k] * plain, 1e-12);
}

TEST(WeightedCe, RejectsUnnormalized) {
  EXPECT_THROW(WeightedCe(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.6},
                          ClassWeights::Uniform(2)),
               Error);
}

TEST(WeightedCe, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  ClassWeights w{{0.5, 1.5, 2.0}};
  Mat y = ag::SoftmaxRowsOf(RandomMat(4, 3, rng));
  // Through probabilities directly. Perturbations leave rows slightly
  // unnormalized, so the check runs through a softmax front end as well.
  auto via_softmax = [&](ag::Tape&, std::vector<ag::Var>& in) {
    return WeightedCeProb(ag::SoftmaxRows(in[0]), y, w);
  };
  EXPECT_LT(testing::MaxRelativeGradError(via_softmax, {RandomMat(4, 3, rng)}), 1e-6);
  auto via_logp = [&](ag::Tape&, std::vector<ag::Var>& in) {
    return WeightedCeLogp(ag::LogSoftmaxRows(in[0]), y, w, Reduction::kMean);
  };
  EXPECT_LT(testing::MaxRelativeGradError(via_logp, {RandomMat(4, 3, rng)}), 1e-6);
  // Direct derivative w.r.t. the probabilities: -w * y / p.
  Mat p = ag::SoftmaxRowsOf(RandomMat(4, 3, rng));
  ag::Param pp("p", p);
  ag::Tape t;
  t.Backward(WeightedCeProb(t.Leaf(pp), y, w));
  for (int i = 0; i < 4; ++i) {
    Eigen::Index k;
    y.row(i).maxCoeff(&k);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(pp.grad(i, c), -w[k] * y(i, c) / p(i, c), 1e-12);
  }
}

TEST(SerTotalLoss, Arithmetic) {
  EXPECT_DOUBLE_EQ(SerTotalLoss(0.7, 3.0, 0.0), 0.7);
  EXPECT_DOUBLE_EQ(SerTotalLoss(1.0, 0.4, 0.5), 1.2);
  EXPECT_DOUBLE_EQ(SerTotalLoss(0.9, 0.0, 1.0), 0.9);
  EXPECT_THROW(SerTotalLoss(1.0, 1.0, -0.1), Error);
}

TEST(Reconstruction, ZeroConstantAndPadding) {
  Rng rng(12);
  Mat mel = RandomMat(5, 8, rng), lin = RandomMat(5, 6, rng);
  EXPECT_DOUBLE_EQ(ReconstructionLoss(mel, mel, lin, lin), 0.0);
  EXPECT_NEAR(ReconstructionLoss((mel.array() + 0.3).matrix(), mel, lin, lin), 0.3, 1e-12);
  EXPECT_NEAR(ReconstructionLoss((mel.array() + 0.3).matrix(), mel, (lin.array() - 0.2).matrix(), lin),
              0.5, 1e-12);
  // Appending padded frames (masked out) leaves the loss unchanged.
  Mat pm = RandomMat(5, 8, rng), pl = RandomMat(5, 6, rng);
  const double base = ReconstructionLoss(pm, mel, pl, lin);
  Mat pm2(8, 8), mel2(8, 8), pl2(8, 6), lin2(8, 6);
  pm2 << pm, RandomMat(3, 8, rng);
  mel2 << mel, RandomMat(3, 8, rng);
  pl2 << pl, RandomMat(3, 6, rng);
  lin2 << lin, RandomMat(3, 6, rng);
  Vec mask = Vec::Zero(8);
  mask.head(5).setOnes();
  EXPECT_NEAR(ReconstructionLoss(pm2, mel2, pl2, lin2, mask), base, 1e-12);
  EXPECT_THROW(ReconstructionLoss(mel, lin, mel, lin), Error);
}

TEST(Reconstruction, AutogradMatchesValue) {
  Rng rng(13);
  Mat a = RandomMat(4, 3, rng), b = RandomMat(4, 3, rng);
  Vec mask(4);
  mask << 1, 1, 0, 1;
  ag::Tape t;
  EXPECT_NEAR(MaskedMaeVar(t.Constant(a), b, mask).value()(0, 0), MaskedMae(a, b, mask), 1e-14);
}

}  // namespace
}  // namespace emotts::losses

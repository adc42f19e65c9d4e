// Copyright 2026 The iwv3 Authors
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

#include <cmath>
#include <random>

#include "iwv3/quant.h"
#include "test_util.h"

namespace iwv3 {
namespace {

TEST(QuantizeTest, RoundsHalfAwayFromZero) {
  EXPECT_EQ(Quantize(12.0, 8.0), 2);
  EXPECT_EQ(Quantize(-12.0, 8.0), -2);
  EXPECT_EQ(Quantize(11.9, 8.0), 1);
  EXPECT_EQ(Quantize(3.99, 8.0), 0);
  EXPECT_EQ(Quantize(-4.0, 8.0), -1);
  const std::vector<double> c = {0.4, 1.6, -2.5};
  EXPECT_EQ(Quantize(c, 1.0), (std::vector<int32_t>{0, 2, -3}));
  const std::vector<int32_t> q = {3, -1};
  EXPECT_EQ(Dequantize(q, 2.5), (std::vector<double>{7.5, -2.5}));
}

TEST(SoftRoundTest, ReferenceValues) {
  EXPECT_NEAR(SoftRound(0.75, 2), 0.803388067, 1e-9);
  EXPECT_NEAR(SoftToHard(0.75, 12, 0), 0.999999625, 1e-9);
  EXPECT_NEAR(SoftToHard(0.3, 2, 0.1), 0.309417405583, 1e-11);
}

TEST(SoftRoundTest, IntegersAndHalvesAreFixed) {
  for (double alpha : {kAlphaMin, 6.0, kAlphaMax}) {
    for (int k = -20; k <= 20; ++k) {
      EXPECT_EQ(SoftRound(k, alpha), k);
      EXPECT_EQ(SoftToHard(k, alpha, 0), k);
      EXPECT_NEAR(SoftRound(k + 0.5, alpha), k + 0.5, 1e-12);
    }
  }
}

TEST(SoftRoundTest, SharpensWithAlpha) {
  const double y = 0.3;
  EXPECT_GT(std::fabs(SoftRound(y, 2) - y), 0);
  EXPECT_LT(std::fabs(SoftRound(y, 12)), std::fabs(SoftRound(y, 2)));
  EXPECT_LT(SoftRound(y, 12), 0.01);
}

TEST(SoftRoundTest, TensorMatchesScalar) {
  std::mt19937_64 rng(7);
  const Tensor y = testing::RandomTensor({10}, rng, 3);
  const Tensor u = UniformNoise({10}, rng);
  const Tensor s = SoftRound(y, 5);
  const Tensor sh = SoftToHard(y, 5, u);
  for (size_t i = 0; i < y.size(); ++i) {
    EXPECT_DOUBLE_EQ(s[i], SoftRound(y[i], 5));
    EXPECT_DOUBLE_EQ(sh[i], SoftToHard(y[i], 5, u[i]));
    EXPECT_LE(std::fabs(u[i]), 0.5);
  }
}

TEST(SoftRoundTest, DerivativeReference) {
  Tape tape;
  const Tensor y = tape.Watch("y", Tensor::Scalar(0.3));
  const Gradients g = Backward(tape, SoftToHard(y, 2, Tensor::Scalar(0)));
  EXPECT_NEAR(g.at("y").item(), 1.161340812280, 1e-10);
}

TEST(AnnealTest, Schedule) {
  EXPECT_EQ(AnnealAlpha(0, 100), 2);
  EXPECT_DOUBLE_EQ(AnnealAlpha(50, 100), 7);
  EXPECT_EQ(AnnealAlpha(100, 100), 12);
  EXPECT_EQ(AnnealAlpha(500, 100), 12);
}

TEST(QuantGridTest, LayoutAndValidation) {
  const QuantGrid g(1, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  EXPECT_EQ(g.subbands(), 4);
  EXPECT_EQ(g.at(1, 2), 7);
  EXPECT_THROW(QuantGrid(1, {1, 2, 3}), Error);
  EXPECT_THROW(QuantGrid(1, std::vector<double>(12, 0.0)), Error);
  EXPECT_EQ(QuantGrid::Lossless(3).values(), std::vector<double>(30, 1.0));
}

TEST(QuantGridTest, FromWeights) {
  ModelWeights w;
  AddLogQsteps(w, 2, 8.0);
  EXPECT_EQ(w.Get(kLogQstepName).shape(), (Shape{7, 3}));
  EXPECT_EQ(LevelsOfLogQsteps(w), 2);
  const QuantGrid g = QuantGridFromWeights(w, 1.5);
  EXPECT_EQ(g.levels(), 2);
  for (double q : g.values()) EXPECT_EQ(q, static_cast<double>(static_cast<float>(9.5)));
  EXPECT_THROW(QuantGridFromWeights(w, -8.0), Error);
}

TEST(QuantGridTest, SubbandMajorLayout) {
  ModelWeights w;
  std::vector<double> logs(12);
  for (int s = 0; s < 4; ++s) {
    for (int c = 0; c < 3; ++c) logs[s * 3 + c] = std::log(1.0 + 10 * s + c);
  }
  w.Add(kLogQstepName, Tensor({4, 3}, logs));
  const QuantGrid g = QuantGridFromWeights(w);
  EXPECT_NEAR(g.at(2, 1), 13.0, 1e-5);
  EXPECT_NEAR(g.at(0, 3), 31.0, 1e-5);
}

}  // namespace
}  // namespace iwv3

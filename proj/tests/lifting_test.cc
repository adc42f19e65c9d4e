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
#include <vector>

#include "iwv3/lifting.h"
#include "test_util.h"

namespace iwv3 {
namespace {

std::pair<std::vector<int32_t>, std::vector<int32_t>> Forward53(
    const std::vector<int32_t>& x) {
  auto [xe, xo] = Split<int32_t>(x);
  std::vector<int32_t> l(xe.size()), h(xe.size());
  Cdf53Forward1d(xe, xo, l, h);
  return {l, h};
}

Plane32 MakePlane(int w, int h, std::vector<int32_t> values) {
  Plane32 p(w, h);
  p.data() = std::move(values);
  return p;
}

std::vector<double> Values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

TEST(SplitMergeTest, RoundTrip) {
  const std::vector<int32_t> x = {1, 2, 3, 4, 5, 6};
  auto [e, o] = Split<int32_t>(x);
  EXPECT_EQ(e, (std::vector<int32_t>{1, 3, 5}));
  EXPECT_EQ(o, (std::vector<int32_t>{2, 4, 6}));
  EXPECT_EQ(Merge<int32_t>(e, o), x);
  EXPECT_THROW(Split<int32_t>(std::vector<int32_t>{1, 2, 3}), Error);
}

TEST(Cdf53Test, Ramp) {
  auto [l, h] = Forward53({0, 1, 2, 3, 4, 5});
  EXPECT_EQ(l, (std::vector<int32_t>{0, 2, 4}));
  EXPECT_EQ(h, (std::vector<int32_t>{0, 0, 1}));
}

TEST(Cdf53Test, Irregular) {
  auto [l, h] = Forward53({5, -3, 8, 100, 7, 7, -20, 1});
  EXPECT_EQ(l, (std::vector<int32_t>{1, 29, 34, -11}));
  EXPECT_EQ(h, (std::vector<int32_t>{-9, 93, 14, 21}));
}

TEST(Cdf53Test, OneDimensionalInverse) {
  std::mt19937_64 rng(1);
  for (int n : {1, 2, 3, 8, 33}) {
    std::vector<int32_t> xe(n), xo(n), l(n), h(n), ye(n), yo(n);
    for (int i = 0; i < n; ++i) {
      xe[i] = static_cast<int32_t>(rng() % 4001) - 2000;
      xo[i] = static_cast<int32_t>(rng() % 4001) - 2000;
    }
    Cdf53Forward1d(xe, xo, l, h);
    Cdf53Inverse1d(l, h, ye, yo);
    EXPECT_EQ(ye, xe);
    EXPECT_EQ(yo, xo);
  }
}

TEST(Cdf53Test, TwoByTwo) {
  const auto b = Cdf53ForwardLevel(MakePlane(2, 2, {7, 3, -2, 10}));
  EXPECT_EQ(b[0].data(), (std::vector<int32_t>{5}));
  EXPECT_EQ(b[1].data(), (std::vector<int32_t>{4}));
  EXPECT_EQ(b[2].data(), (std::vector<int32_t>{-1}));
  EXPECT_EQ(b[3].data(), (std::vector<int32_t>{16}));
}

TEST(Cdf53Test, FourByFour) {
  const auto b = Cdf53ForwardLevel(
      MakePlane(4, 4, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 17}));
  EXPECT_EQ(b[0].data(), (std::vector<int32_t>{1, 3, 10, 12}));
  EXPECT_EQ(b[1].data(), (std::vector<int32_t>{0, 1, 0, 1}));
  EXPECT_EQ(b[2].data(), (std::vector<int32_t>{0, 0, 4, 5}));
  EXPECT_EQ(b[3].data(), (std::vector<int32_t>{0, 0, 0, 1}));
}

TEST(Cdf53Test, MultilevelPerfectReconstruction) {
  std::mt19937_64 rng(2);
  for (auto [w, h, levels] : {std::tuple{8, 8, 3}, {64, 32, 4}, {16, 48, 2}}) {
    Plane32 p(w, h);
    for (auto& v : p.data()) v = static_cast<int32_t>(rng() % 511) - 255;
    const Pyramid<Plane32> pyr = Cdf53Forward(p, levels);
    EXPECT_EQ(pyr.levels(), levels);
    EXPECT_EQ(pyr.ll.width(), w >> levels);
    EXPECT_EQ(Cdf53Inverse(pyr), p);
  }
}

TEST(Cdf53Test, RejectsOddPlane) { EXPECT_THROW(Cdf53ForwardLevel(Plane32(3, 2)), Error); }

TEST(Cdf97Test, PerfectReconstruction) {
  std::mt19937_64 rng(3);
  const Tensor x = testing::RandomTensor({2, 1, 32, 16}, rng, 100);
  const LiftingBackend b = LiftingBackend::Cdf97();
  const Tensor y = b.Inverse(b.Forward(x, 3));
  for (size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-9);
}

TEST(Cdf97Test, ConstantSignalHasNoDetail) {
  const LiftingBackend b = LiftingBackend::Cdf97();
  const Pyramid<Tensor> p = b.Forward(Tensor::Full({1, 1, 16, 16}, 10), 2);
  for (const auto& d : p.detail) {
    for (const Tensor& t : d) {
      for (double v : t.values()) EXPECT_NEAR(v, 0, 1e-6);
    }
  }
  // Lowpass DC gain sqrt(2) per dimension and level, up to the normalization.
  for (double v : p.ll.values()) EXPECT_NEAR(v, p.ll[0], 1e-9);
}

TEST(Cdf97Test, RejectsIndivisibleInput) {
  EXPECT_THROW(LiftingBackend::Cdf97().Forward(Tensor::Zeros({1, 1, 12, 12}), 3), Error);
}

class LearnedTest : public ::testing::TestWithParam<TransformKind> {};

TEST_P(LearnedTest, InitMatchesCdf97AwayFromEdges) {
  std::mt19937_64 rng(4);
  ModelWeights w;
  AddLiftingWeights(w, GetParam(), 2, 8, rng, 0.1);
  const LiftingBackend learned = LiftingBackend::Learned(GetParam(), w);
  EXPECT_EQ(learned.steps(), 2);
  const Tensor xe = testing::RandomTensor({1, 1, 3, 16}, rng, 50);
  const Tensor xo = testing::RandomTensor({1, 1, 3, 16}, rng, 50);
  auto [l, h] = learned.Forward1d(xe, xo);
  auto [rl, rh] = LiftingBackend::Cdf97().Forward1d(xe, xo);
  // The additive variant omits the final normalization.
  const double zl = GetParam() == TransformKind::kAffine ? 1.0 : 1.0 / kCdf97Zeta;
  const double zh = GetParam() == TransformKind::kAffine ? 1.0 : kCdf97Zeta;
  for (int r = 0; r < 3; ++r) {
    for (int c = 3; c < 13; ++c) {
      const int i = r * 16 + c;
      EXPECT_NEAR(l[i], rl[i] * zl, 1e-8) << r << "," << c;
      EXPECT_NEAR(h[i], rh[i] * zh, 1e-8) << r << "," << c;
    }
  }
}

TEST_P(LearnedTest, RandomNetsStillInvert) {
  std::mt19937_64 rng(5);
  ModelWeights w;
  AddLiftingWeights(w, GetParam(), 3, 4, rng, 0.1);
  const ModelWeights noisy = RandomizedWeights(w, rng, 0.2);
  const LiftingBackend b = LiftingBackend::Learned(GetParam(), noisy);
  EXPECT_EQ(b.steps(), 3);
  const Tensor x = testing::RandomTensor({1, 1, 16, 16}, rng, 80);
  const Tensor y = b.Inverse(b.Forward(x, 2));
  for (size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-7 * (1 + std::fabs(x[i])));
}

TEST_P(LearnedTest, GradientsReachEveryNet) {
  std::mt19937_64 rng(6);
  ModelWeights w;
  AddLiftingWeights(w, GetParam(), 2, 4, rng, 0.1);
  Tape tape;
  ModelWeights watched;
  for (const auto& e : w.entries()) watched.Add(e.name, tape.Watch(e.name, e.value));
  const LiftingBackend b = LiftingBackend::Learned(GetParam(), watched);
  const Pyramid<Tensor> p = b.Forward(testing::RandomTensor({1, 1, 8, 8}, rng, 30), 1);
  Tensor loss = Sum(Mul(p.ll, p.ll));
  for (const Tensor& d : p.detail[0]) loss = Add(loss, Sum(Mul(d, d)));
  const Gradients g = Backward(tape, loss);
  for (const char* net : {"pu.p1.c1.w", "pu.u1.c1.w", "pu.p2.c1.w", "pu.u2.c1.w"}) {
    double norm = 0;
    for (double v : g.at(net).values()) norm += v * v;
    EXPECT_GT(norm, 0) << net;
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, LearnedTest,
                         ::testing::Values(TransformKind::kAdditive, TransformKind::kAffine));

TEST(LearnedTest, NeedsNets) {
  ModelWeights empty;
  EXPECT_THROW(LiftingBackend::Learned(TransformKind::kAffine, empty), Error);
  EXPECT_THROW(LiftingBackend::Learned(TransformKind::kCdf53, empty), Error);
}

TEST(TensorPlaneTest, RoundTrip) {
  PlaneF p(3, 2);
  p.data() = {1, 2, 3, 4, 5, 6};
  const Tensor t = ToTensor(p);
  EXPECT_EQ(t.shape(), (Shape{1, 1, 2, 3}));
  EXPECT_EQ(ToPlane(t), p);
  EXPECT_EQ(Values(ToTensor(MakePlane(2, 1, {7, -8}))), (std::vector<double>{7, -8}));
}

}  // namespace
}  // namespace iwv3

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

#include <random>

#include "iwv3/nets.h"
#include "iwv3/postproc.h"
#include "test_util.h"

namespace iwv3 {
namespace {

TEST(PostprocTest, StartsAsIdentity) {
  std::mt19937_64 rng(1);
  ModelWeights w;
  AddDequantWeights(w, {2, 1, 8}, rng, 0.2);
  EXPECT_TRUE(HasDequantNet(w));
  PlaneF p(7, 5);
  for (auto& v : p.data()) v = static_cast<double>(rng() % 512) - 256;
  EXPECT_EQ(DequantFilter(w, p), p);
}

TEST(PostprocTest, ConfigIsRecoveredFromWeights) {
  std::mt19937_64 rng(2);
  ModelWeights w;
  AddDequantWeights(w, {3, 2, 5}, rng, 0.2);
  const DequantConfig c = DequantConfigOf(w);
  EXPECT_EQ(c.groups, 3);
  EXPECT_EQ(c.blocks, 2);
  EXPECT_EQ(c.channels, 5);
  EXPECT_FALSE(HasDequantNet(ModelWeights()));
}

TEST(PostprocTest, TrainedFilterChangesOutputAndMatchesBatch) {
  std::mt19937_64 rng(3);
  ModelWeights w;
  AddDequantWeights(w, {1, 1, 4}, rng, 0.2);
  const ModelWeights noisy = RandomizedWeights(w, rng, 0.2);
  const Tensor x = testing::RandomTensor({2, 1, 6, 6}, rng, 20);
  const Tensor y = DequantForward(noisy, x);
  EXPECT_EQ(y.shape(), x.shape());
  PlaneF second(6, 6);
  for (int i = 0; i < 36; ++i) second.data()[i] = x[36 + i];
  const PlaneF single = DequantFilter(noisy, second);
  bool changed = false;
  for (int i = 0; i < 36; ++i) {
    EXPECT_NEAR(single.data()[i], y[36 + i], 1e-9);
    changed |= single.data()[i] != second.data()[i];
  }
  EXPECT_TRUE(changed);
}

TEST(PostprocTest, TailReceivesGradientAtInit) {
  std::mt19937_64 rng(4);
  ModelWeights w;
  AddDequantWeights(w, {1, 1, 4}, rng, 0.2);
  Tape tape;
  ModelWeights watched;
  for (const auto& e : w.entries()) watched.Add(e.name, tape.Watch(e.name, e.value));
  const Tensor y = DequantForward(watched, testing::RandomTensor({1, 1, 5, 5}, rng, 20));
  const Gradients g = Backward(tape, Sum(Mul(y, y)));
  double norm = 0;
  for (double v : g.at("dq.tail.w").values()) norm += v * v;
  EXPECT_GT(norm, 0);
}

}  // namespace
}  // namespace iwv3

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
#include <vector>

#include "iwv3/error.h"
#include "iwv3/weights.h"
#include "test_util.h"

namespace iwv3 {
namespace {

ErrorCode CodeOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kState;
}

TEST(WeightsTest, EmptyFile) {
  const std::vector<uint8_t> bytes = SaveWeights(ModelWeights());
  EXPECT_EQ(bytes.size(), 9u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "IWTW");
  EXPECT_EQ(WeightsChecksum(ModelWeights()), 0x0a879a0bec2469b3ull);
  EXPECT_TRUE(LoadWeights(bytes).empty());
}

TEST(WeightsTest, SingleKernelSize) {
  ModelWeights w;
  w.Add("p1.w", Tensor::Full({16, 1, 3, 3}, 0.25));
  EXPECT_EQ(SaveWeights(w).size(), 608u);
  EXPECT_EQ(w.NumValues(), 144u);
}

TEST(WeightsTest, RoundTripIsFloatRounding) {
  std::mt19937_64 rng(5);
  ModelWeights w;
  w.Add("a.w", testing::RandomTensor({3, 2, 3, 3}, rng));
  w.Add("a.b", testing::RandomTensor({3}, rng));
  w.Add("scalar", Tensor::Scalar(0.1));
  const ModelWeights back = LoadWeights(SaveWeights(w));
  const ModelWeights rounded = w.RoundedToFloat();
  ASSERT_EQ(back.size(), 3u);
  for (size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back.entries()[i].name, w.entries()[i].name);
    EXPECT_EQ(back.entries()[i].value.shape(), w.entries()[i].value.shape());
    for (size_t k = 0; k < back.entries()[i].value.size(); ++k) {
      EXPECT_EQ(back.entries()[i].value[k], rounded.entries()[i].value[k]);
    }
  }
  EXPECT_EQ(back.Get("scalar").item(), static_cast<double>(0.1f));
  EXPECT_EQ(SaveWeights(back), SaveWeights(w));
  EXPECT_EQ(WeightsChecksum(back), WeightsChecksum(w));
}

TEST(WeightsTest, ChecksumSeesValues) {
  ModelWeights a, b;
  a.Add("x", Tensor::Scalar(1));
  b.Add("x", Tensor::Scalar(2));
  EXPECT_NE(WeightsChecksum(a), WeightsChecksum(b));
}

TEST(WeightsTest, LookupErrors) {
  ModelWeights w;
  w.Add("x", Tensor::Zeros({2, 2}));
  EXPECT_EQ(CodeOf([&] { w.Get("y"); }), ErrorCode::kWeightsMismatch);
  EXPECT_EQ(CodeOf([&] { w.Get("x", {4}); }), ErrorCode::kWeightsMismatch);
  EXPECT_EQ(CodeOf([&] { w.Add("x", Tensor::Scalar(0)); }), ErrorCode::kState);
  w.Set("x", Tensor::Scalar(3));
  EXPECT_EQ(w.Get("x").item(), 3);
  EXPECT_EQ(w.size(), 1u);
}

TEST(WeightsTest, DamagedFilesRejected) {
  ModelWeights w;
  w.Add("p1.w", Tensor::Full({2, 1, 3, 3}, 1));
  const std::vector<uint8_t> good = SaveWeights(w);
  for (size_t cut = 0; cut < good.size(); ++cut) {
    const std::vector<uint8_t> bad(good.begin(), good.begin() + cut);
    EXPECT_EQ(CodeOf([&] { LoadWeights(bad); }), ErrorCode::kWeightsMismatch) << cut;
  }
  std::vector<uint8_t> magic = good;
  magic[0] = 'X';
  EXPECT_EQ(CodeOf([&] { LoadWeights(magic); }), ErrorCode::kWeightsMismatch);
  std::vector<uint8_t> extra = good;
  extra.push_back(0);
  EXPECT_EQ(CodeOf([&] { LoadWeights(extra); }), ErrorCode::kWeightsMismatch);
}

}  // namespace
}  // namespace iwv3

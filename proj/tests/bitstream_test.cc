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

#include "iwv3/bitstream.h"
#include "iwv3/error.h"

namespace iwv3 {
namespace {

Bitstream Sample(int levels) {
  Bitstream b;
  b.header.mode = CodecMode::kAffine;
  b.header.levels = levels;
  b.header.width = 37;
  b.header.height = 21;
  b.header.weights_checksum = 0x0123456789abcdefull;
  for (int i = 0; i < 3 * (3 * levels + 1); ++i) {
    b.header.subbands.push_back({1.5f + i, -i, 2 * i});
  }
  b.payloads[0] = {1, 2, 3};
  b.payloads[2] = {9};
  return b;
}

ErrorCode ParseError(const std::vector<uint8_t>& bytes) {
  try {
    ParseBitstream(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kState;
}

TEST(ModeTest, Names) {
  EXPECT_STREQ(ModeName(CodecMode::kAffine), "affine");
  EXPECT_EQ(ParseMode("additive"), CodecMode::kAdditive);
  EXPECT_EQ(ParseMode("lossless"), CodecMode::kLossless);
  EXPECT_THROW(ParseMode("jpeg"), Error);
}

TEST(BitstreamTest, LayoutSize) {
  const Bitstream b = Sample(2);
  const std::vector<uint8_t> bytes = SerializeBitstream(b);
  EXPECT_EQ(bytes.size(), 23u + 12u * 21 + 3 * 4 + 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "IWV3");
  EXPECT_EQ(bytes[4], kStreamVersion);
  EXPECT_EQ(bytes[5], 2);
  EXPECT_EQ(bytes[6], 2);
  EXPECT_EQ(bytes[7], 37);
}

TEST(BitstreamTest, RoundTrip) {
  const Bitstream b = Sample(3);
  const Bitstream back = ParseBitstream(SerializeBitstream(b));
  EXPECT_EQ(back.header, b.header);
  EXPECT_EQ(back.payloads, b.payloads);
  EXPECT_EQ(ParseHeader(SerializeBitstream(b)), b.header);
}

TEST(BitstreamTest, EveryTruncationIsCorrupt) {
  const std::vector<uint8_t> bytes = SerializeBitstream(Sample(1));
  for (size_t cut = 0; cut < bytes.size(); ++cut) {
    EXPECT_EQ(ParseError({bytes.begin(), bytes.begin() + cut}), ErrorCode::kCorruptStream)
        << cut;
  }
}

TEST(BitstreamTest, DamagedFieldsAreCorrupt) {
  const std::vector<uint8_t> good = SerializeBitstream(Sample(1));
  auto with = [&](size_t at, uint8_t v) {
    std::vector<uint8_t> b = good;
    b[at] = v;
    return b;
  };
  EXPECT_EQ(ParseError(with(0, 'J')), ErrorCode::kCorruptStream);
  EXPECT_EQ(ParseError(with(4, 9)), ErrorCode::kCorruptStream);
  EXPECT_EQ(ParseError(with(5, 7)), ErrorCode::kCorruptStream);
  EXPECT_EQ(ParseError(with(6, 0)), ErrorCode::kCorruptStream);
  EXPECT_EQ(ParseError(with(6, kMaxLevels + 1)), ErrorCode::kCorruptStream);
  // Width 0.
  std::vector<uint8_t> zero = good;
  for (int i = 7; i < 11; ++i) zero[i] = 0;
  EXPECT_EQ(ParseError(zero), ErrorCode::kCorruptStream);
  std::vector<uint8_t> trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(ParseError(trailing), ErrorCode::kCorruptStream);
}

TEST(BitstreamTest, InvalidSubbandHeaderIsCorrupt) {
  Bitstream b = Sample(1);
  b.header.subbands[3].min = 5;
  b.header.subbands[3].max = 4;
  EXPECT_EQ(ParseError(SerializeBitstream(b)), ErrorCode::kCorruptStream);
  b = Sample(1);
  b.header.subbands[0].qstep = 0;
  EXPECT_EQ(ParseError(SerializeBitstream(b)), ErrorCode::kCorruptStream);
}

TEST(BitstreamTest, ErrorNamesOffset) {
  const std::vector<uint8_t> bytes = SerializeBitstream(Sample(1));
  try {
    ParseBitstream(std::vector<uint8_t>(bytes.begin(), bytes.begin() + 30));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("at byte"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace iwv3

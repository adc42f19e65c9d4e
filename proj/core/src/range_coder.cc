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

#include "iwv3/range_coder.h"

#include <algorithm>
#include <string>

#include "iwv3/error.h"

namespace iwv3 {
namespace {

constexpr uint32_t kTop = 1u << 24;

}  // namespace

void RangeEncoder::Encode(uint32_t cum, uint32_t freq) {
  if (freq == 0 || cum + freq > kProbTotal) {
    Fail(ErrorCode::kInvalidArgument, "zero-probability symbol requested");
  }
  const uint32_t r = range_ >> kProbBits;
  low_ += static_cast<uint64_t>(r) * cum;
  range_ = r * freq;
  while (range_ < kTop) {
    range_ <<= 8;
    ShiftLow();
  }
}

void RangeEncoder::ShiftLow() {
  if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const uint8_t carry = static_cast<uint8_t>(low_ >> 32);
    uint8_t byte = cache_;
    do {
      if (first_) {
        first_ = false;
      } else {
        out_.push_back(static_cast<uint8_t>(byte + carry));
      }
      byte = 0xFF;
    } while (--pending_ != 0);
    cache_ = static_cast<uint8_t>(low_ >> 24);
  }
  ++pending_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<uint8_t> RangeEncoder::Finish() {
  // Round low up to the coarsest byte boundary still inside the interval.
  const uint64_t high = low_ + range_;
  for (int bits = 32; bits >= 0; bits -= 8) {
    const uint64_t mask = (uint64_t{1} << bits) - 1;
    const uint64_t v = (low_ + mask) & ~mask;
    if (v < high) {
      low_ = v;
      break;
    }
  }
  for (int i = 0; i < 5; ++i) ShiftLow();
  while (!out_.empty() && out_.back() == 0) out_.pop_back();
  std::vector<uint8_t> out = std::move(out_);
  *this = RangeEncoder();
  return out;
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | Next();
}

uint32_t RangeDecoder::Target() {
  step_ = range_ >> kProbBits;
  return std::min<uint32_t>(code_ / step_, kProbTotal - 1);
}

void RangeDecoder::Consume(uint32_t cum, uint32_t freq) {
  code_ -= step_ * cum;
  range_ = step_ * freq;
  while (range_ < kTop) {
    code_ = (code_ << 8) | Next();
    range_ <<= 8;
  }
}

FrequencyTable::FrequencyTable(std::span<const uint32_t> freq)
    : freq_(freq.begin(), freq.end()), cum_(freq.size() + 1, 0) {
  for (size_t i = 0; i < freq_.size(); ++i) {
    if (freq_[i] == 0) {
      Fail(ErrorCode::kInvalidArgument,
           "zero frequency for symbol " + std::to_string(i));
    }
    cum_[i + 1] = cum_[i] + freq_[i];
  }
  if (cum_.back() != kProbTotal) {
    Fail(ErrorCode::kInvalidArgument,
         "frequencies sum to " + std::to_string(cum_.back()));
  }
}

size_t FrequencyTable::Find(uint32_t target) const {
  auto it = std::upper_bound(cum_.begin(), cum_.end(), target);
  return static_cast<size_t>(it - cum_.begin()) - 1;
}

void EncodeSymbol(RangeEncoder& enc, const FrequencyTable& table, size_t s) {
  if (s >= table.size()) {
    Fail(ErrorCode::kInvalidArgument, "symbol outside table");
  }
  enc.Encode(table.cum(s), table.freq(s));
}

size_t DecodeSymbol(RangeDecoder& dec, const FrequencyTable& table) {
  const size_t s = table.Find(dec.Target());
  dec.Consume(table.cum(s), table.freq(s));
  return s;
}

}  // namespace iwv3

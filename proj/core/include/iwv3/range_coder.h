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

#ifndef IWV3_RANGE_CODER_H_
#define IWV3_RANGE_CODER_H_

#include <cstdint>
#include <span>
#include <vector>

namespace iwv3 {

// Probabilities are integer frequencies out of 2^16.
inline constexpr int kProbBits = 16;
inline constexpr uint32_t kProbTotal = 1u << kProbBits;

// Byte-oriented range coder: 64-bit low, 32-bit range, carries resolved
// through a cached byte plus a count of pending 0xFF bytes.
class RangeEncoder {
 public:
  // Codes a symbol occupying [cum, cum + freq) of kProbTotal.
  void Encode(uint32_t cum, uint32_t freq);
  // Flushes the shortest tail that pins the final interval. Trailing zero
  // bytes are dropped; the decoder reads zeros past the end.
  std::vector<uint8_t> Finish();

 private:
  void ShiftLow();

  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t pending_ = 1;
  bool first_ = true;  // The first shifted-out byte is always zero.
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> bytes);

  // Value in [0, kProbTotal) locating the next symbol.
  uint32_t Target();
  // Removes the symbol found by Target().
  void Consume(uint32_t cum, uint32_t freq);

  // Bytes consumed so far, including implied zeros past the end.
  size_t position() const { return pos_; }

 private:
  uint8_t Next() { return pos_ < bytes_.size() ? bytes_[pos_++] : (++pos_, 0); }

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
  uint32_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint32_t step_ = 0;
};

// Static cumulative table over symbols 0..n-1.
class FrequencyTable {
 public:
  // Throws kInvalidArgument on a zero frequency or a total != kProbTotal.
  explicit FrequencyTable(std::span<const uint32_t> freq);

  size_t size() const { return freq_.size(); }
  uint32_t freq(size_t s) const { return freq_[s]; }
  uint32_t cum(size_t s) const { return cum_[s]; }
  // Symbol whose interval contains `target`.
  size_t Find(uint32_t target) const;

 private:
  std::vector<uint32_t> freq_;
  std::vector<uint32_t> cum_;
};

void EncodeSymbol(RangeEncoder& enc, const FrequencyTable& table, size_t s);
size_t DecodeSymbol(RangeDecoder& dec, const FrequencyTable& table);

}  // namespace iwv3

#endif  // IWV3_RANGE_CODER_H_

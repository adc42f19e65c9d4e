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

#ifndef IWV3_BITSTREAM_H_
#define IWV3_BITSTREAM_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace iwv3 {

enum class CodecMode : uint8_t { kLossless = 0, kAdditive = 1, kAffine = 2 };

const char* ModeName(CodecMode mode);
// Accepts "lossless", "additive", "affine".
CodecMode ParseMode(const std::string& name);

struct SubbandHeader {
  float qstep = 1;
  int32_t min = 0;
  int32_t max = 0;
  bool operator==(const SubbandHeader&) const = default;
};

// Little-endian layout: "IWV3", version u8, mode u8, levels u8, width u32,
// height u32, weight checksum u64, then (qstep f32, min i32, max i32) for
// every channel and subband (channel-major, coding order), then per
// channel a u32 payload length followed by the payload.
struct StreamHeader {
  uint8_t version = 1;
  CodecMode mode = CodecMode::kLossless;
  int levels = 0;
  uint32_t width = 0;
  uint32_t height = 0;
  uint64_t weights_checksum = 0;
  std::vector<SubbandHeader> subbands;  // 3 * (3 * levels + 1)

  int subbands_per_channel() const { return 3 * levels + 1; }
  const SubbandHeader& at(int channel, int subband) const {
    return subbands[channel * subbands_per_channel() + subband];
  }
  bool operator==(const StreamHeader&) const = default;
};

struct Bitstream {
  StreamHeader header;
  std::array<std::vector<uint8_t>, 3> payloads;

  size_t payload_bytes() const {
    return payloads[0].size() + payloads[1].size() + payloads[2].size();
  }
};

inline constexpr uint8_t kStreamVersion = 1;
inline constexpr int kMaxLevels = 8;

std::vector<uint8_t> SerializeBitstream(const Bitstream& stream);
// Throws kCorruptStream naming the byte offset of the damage.
Bitstream ParseBitstream(std::span<const uint8_t> bytes);
// Header only; payload bytes are neither read nor validated.
StreamHeader ParseHeader(std::span<const uint8_t> bytes);

}  // namespace iwv3

#endif  // IWV3_BITSTREAM_H_

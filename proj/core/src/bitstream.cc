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

#include "iwv3/bitstream.h"

#include <bit>
#include <cstring>

#include "iwv3/error.h"

namespace iwv3 {
namespace {

constexpr char kMagic[4] = {'I', 'W', 'V', '3'};

void PutLe(std::vector<uint8_t>& out, uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

class Cursor {
 public:
  explicit Cursor(std::span<const uint8_t> in) : in_(in) {}

  uint64_t Le(int bytes, const char* what) {
    if (in_.size() - pos_ < static_cast<size_t>(bytes)) {
      Fail(ErrorCode::kCorruptStream, std::string("stream truncated in ") +
                                          what + " at byte " +
                                          std::to_string(pos_));
    }
    uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += bytes;
    return v;
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return in_.size() - pos_; }
  std::span<const uint8_t> Take(size_t n) {
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const uint8_t> in_;
  size_t pos_ = 0;
};

StreamHeader ReadHeader(Cursor& c, std::span<const uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    Fail(ErrorCode::kCorruptStream, "bad magic: not an IWV3 stream");
  }
  c.Le(4, "magic");
  StreamHeader h;
  h.version = static_cast<uint8_t>(c.Le(1, "header"));
  if (h.version != kStreamVersion) {
    Fail(ErrorCode::kCorruptStream,
         "unsupported stream version " + std::to_string(h.version));
  }
  const uint8_t mode = static_cast<uint8_t>(c.Le(1, "header"));
  if (mode > 2) {
    Fail(ErrorCode::kCorruptStream, "unknown mode " + std::to_string(mode));
  }
  h.mode = static_cast<CodecMode>(mode);
  h.levels = static_cast<int>(c.Le(1, "header"));
  if (h.levels < 1 || h.levels > kMaxLevels) {
    Fail(ErrorCode::kCorruptStream, "bad level count " + std::to_string(h.levels));
  }
  h.width = static_cast<uint32_t>(c.Le(4, "header"));
  h.height = static_cast<uint32_t>(c.Le(4, "header"));
  if (h.width == 0 || h.height == 0 || h.width > (1u << 16) ||
      h.height > (1u << 16)) {
    Fail(ErrorCode::kCorruptStream, "bad image size in header");
  }
  h.weights_checksum = c.Le(8, "header");
  const int n = 3 * h.subbands_per_channel();
  h.subbands.resize(n);
  for (int i = 0; i < n; ++i) {
    SubbandHeader& s = h.subbands[i];
    s.qstep = std::bit_cast<float>(static_cast<uint32_t>(c.Le(4, "subband table")));
    s.min = static_cast<int32_t>(static_cast<uint32_t>(c.Le(4, "subband table")));
    s.max = static_cast<int32_t>(static_cast<uint32_t>(c.Le(4, "subband table")));
    if (!(s.qstep > 0) || s.min > s.max) {
      Fail(ErrorCode::kCorruptStream,
           "bad subband entry " + std::to_string(i) + " at byte " +
               std::to_string(c.pos() - 12));
    }
  }
  return h;
}

}  // namespace

const char* ModeName(CodecMode mode) {
  switch (mode) {
    case CodecMode::kLossless:
      return "lossless";
    case CodecMode::kAdditive:
      return "additive";
    case CodecMode::kAffine:
      return "affine";
  }
  return "unknown";
}

CodecMode ParseMode(const std::string& name) {
  if (name == "lossless") return CodecMode::kLossless;
  if (name == "additive") return CodecMode::kAdditive;
  if (name == "affine") return CodecMode::kAffine;
  Fail(ErrorCode::kInvalidArgument, "unknown mode " + name);
}

std::vector<uint8_t> SerializeBitstream(const Bitstream& stream) {
  const StreamHeader& h = stream.header;
  if (h.subbands.size() != static_cast<size_t>(3 * h.subbands_per_channel())) {
    Fail(ErrorCode::kInvalidArgument, "subband table does not match levels");
  }
  std::vector<uint8_t> out(kMagic, kMagic + 4);
  PutLe(out, h.version, 1);
  PutLe(out, static_cast<uint8_t>(h.mode), 1);
  PutLe(out, static_cast<uint8_t>(h.levels), 1);
  PutLe(out, h.width, 4);
  PutLe(out, h.height, 4);
  PutLe(out, h.weights_checksum, 8);
  for (const auto& s : h.subbands) {
    PutLe(out, std::bit_cast<uint32_t>(s.qstep), 4);
    PutLe(out, static_cast<uint32_t>(s.min), 4);
    PutLe(out, static_cast<uint32_t>(s.max), 4);
  }
  for (const auto& p : stream.payloads) {
    PutLe(out, p.size(), 4);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

StreamHeader ParseHeader(std::span<const uint8_t> bytes) {
  Cursor c(bytes);
  return ReadHeader(c, bytes);
}

Bitstream ParseBitstream(std::span<const uint8_t> bytes) {
  Cursor c(bytes);
  Bitstream s;
  s.header = ReadHeader(c, bytes);
  for (int ch = 0; ch < 3; ++ch) {
    const size_t at = c.pos();
    const uint64_t len = c.Le(4, "payload length");
    if (len > c.remaining()) {
      Fail(ErrorCode::kCorruptStream,
           "payload " + std::to_string(ch) + " truncated: declared " +
               std::to_string(len) + " bytes at byte " + std::to_string(at) +
               ", " + std::to_string(c.remaining()) + " available");
    }
    auto p = c.Take(len);
    s.payloads[ch].assign(p.begin(), p.end());
  }
  if (c.remaining() != 0) {
    Fail(ErrorCode::kCorruptStream,
         std::to_string(c.remaining()) + " trailing bytes after payloads");
  }
  return s;
}

}  // namespace iwv3

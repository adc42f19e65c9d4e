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

#include "iwv3/weights.h"

#include <bit>
#include <cstring>

#include "iwv3/error.h"

namespace iwv3 {
namespace {

constexpr char kMagic[4] = {'I', 'W', 'T', 'W'};
constexpr uint8_t kVersion = 1;

class Writer {
 public:
  void Bytes(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void U8(uint8_t v) { out_.push_back(v); }
  void U16(uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void U32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  std::vector<uint8_t> Take() { return std::move(out_); }

 private:
  std::vector<uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> in) : in_(in) {}

  const uint8_t* Bytes(size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      Fail(ErrorCode::kWeightsMismatch,
           std::string("weight file truncated in ") + what);
    }
    const uint8_t* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  uint8_t U8(const char* what) { return *Bytes(1, what); }
  uint16_t U16(const char* what) {
    const uint8_t* p = Bytes(2, what);
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
  }
  uint32_t U32(const char* what) {
    const uint8_t* p = Bytes(4, what);
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) |
           (static_cast<uint32_t>(p[3]) << 24);
  }
  bool AtEnd() const { return pos_ == in_.size(); }

 private:
  std::span<const uint8_t> in_;
  size_t pos_ = 0;
};

}  // namespace

int ModelWeights::Find(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

bool ModelWeights::Contains(const std::string& name) const {
  return Find(name) >= 0;
}

const Tensor& ModelWeights::Get(const std::string& name) const {
  const int i = Find(name);
  if (i < 0) Fail(ErrorCode::kWeightsMismatch, "missing weight " + name);
  return entries_[i].value;
}

const Tensor& ModelWeights::Get(const std::string& name,
                                const Shape& shape) const {
  const Tensor& t = Get(name);
  if (t.shape() != shape) {
    Fail(ErrorCode::kWeightsMismatch, "weight " + name + " has shape " +
                                          ShapeString(t.shape()) + ", expected " +
                                          ShapeString(shape));
  }
  return t;
}

void ModelWeights::Add(const std::string& name, Tensor value) {
  if (Find(name) >= 0) Fail(ErrorCode::kState, "duplicate weight name " + name);
  entries_.push_back({name, std::move(value)});
}

void ModelWeights::Set(const std::string& name, Tensor value) {
  const int i = Find(name);
  if (i < 0) {
    entries_.push_back({name, std::move(value)});
  } else {
    entries_[i].value = std::move(value);
  }
}

size_t ModelWeights::NumValues() const {
  size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

ModelWeights ModelWeights::RoundedToFloat() const {
  ModelWeights out;
  for (const auto& e : entries_) {
    std::vector<double> v(e.value.values().begin(), e.value.values().end());
    for (double& x : v) x = static_cast<float>(x);
    out.entries_.push_back({e.name, Tensor(e.value.shape(), std::move(v))});
  }
  return out;
}

std::vector<uint8_t> SaveWeights(const ModelWeights& weights) {
  Writer w;
  w.Bytes(kMagic, 4);
  w.U8(kVersion);
  w.U32(static_cast<uint32_t>(weights.size()));
  for (const auto& e : weights.entries()) {
    if (e.name.size() > 0xFFFF) {
      Fail(ErrorCode::kInvalidArgument, "weight name too long");
    }
    w.U16(static_cast<uint16_t>(e.name.size()));
    w.Bytes(e.name.data(), e.name.size());
    w.U8(static_cast<uint8_t>(e.value.rank()));
    for (int d : e.value.shape()) w.U32(static_cast<uint32_t>(d));
    for (double v : e.value.values()) {
      w.U32(std::bit_cast<uint32_t>(static_cast<float>(v)));
    }
  }
  return w.Take();
}

ModelWeights LoadWeights(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    Fail(ErrorCode::kWeightsMismatch, "bad magic: not an IWTW weight file");
  }
  r.Bytes(4, "magic");
  const uint8_t version = r.U8("header");
  if (version != kVersion) {
    Fail(ErrorCode::kWeightsMismatch,
         "unsupported weight file version " + std::to_string(version));
  }
  const uint32_t count = r.U32("header");
  ModelWeights out;
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t len = r.U16("name");
    const uint8_t* name = r.Bytes(len, "name");
    std::string key(reinterpret_cast<const char*>(name), len);
    const uint8_t rank = r.U8("shape");
    Shape shape(rank);
    size_t n = 1;
    for (auto& d : shape) {
      const uint32_t v = r.U32("shape");
      if (v > (1u << 28)) Fail(ErrorCode::kWeightsMismatch, "dimension too large");
      d = static_cast<int>(v);
      n *= v;
      if (n > (1u << 28)) Fail(ErrorCode::kWeightsMismatch, "tensor too large");
    }
    std::vector<double> values(n);
    for (double& v : values) v = std::bit_cast<float>(r.U32("tensor payload"));
    if (out.Contains(key)) {
      Fail(ErrorCode::kWeightsMismatch, "duplicate name " + key);
    }
    out.Add(key, Tensor(std::move(shape), std::move(values)));
  }
  if (!r.AtEnd()) Fail(ErrorCode::kWeightsMismatch, "trailing bytes after weights");
  return out;
}

uint64_t WeightsChecksum(const ModelWeights& weights) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (uint8_t b : SaveWeights(weights)) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace iwv3

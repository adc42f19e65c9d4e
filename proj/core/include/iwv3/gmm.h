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

#ifndef IWV3_GMM_H_
#define IWV3_GMM_H_

#include <array>
#include <cstdint>
#include <vector>

#include "iwv3/range_coder.h"

namespace iwv3 {

inline constexpr int kMixtures = 3;
inline constexpr double kMinSigma = 1e-6;
// Widest coefficient range a subband may signal.
inline constexpr int64_t kMaxAlphabet = int64_t{1} << 15;

struct GmmParams {
  std::array<double, kMixtures> w{};
  std::array<double, kMixtures> u{};
  std::array<double, kMixtures> sigma{};
};

// Mixture mass of the unit bin around v, with the bins at lo and hi
// absorbing the tails. Throws kInvalidArgument for v outside [lo, hi].
double GmmProb(const GmmParams& p, int32_t v, int32_t lo, int32_t hi);

// Quantized distribution of a GMM over [lo, hi]: frequency
// max(1, floor(P * 2^16)), residual mass moved to the most probable
// symbol. Bins whose mass is below 2^-16 for every component are known to
// receive frequency 1 and are not evaluated.
class QuantizedPmf {
 public:
  QuantizedPmf(const GmmParams& p, int32_t lo, int32_t hi);

  uint32_t freq(int32_t v) const;
  uint32_t cum(int32_t v) const;
  int32_t Find(uint32_t target) const;

  int32_t lo() const { return lo_; }
  int32_t hi() const { return hi_; }

 private:
  struct Segment {
    int32_t start;
    std::vector<uint32_t> freq;
    uint32_t cum_before = 0;  // Cumulative frequency below `start`.
    int32_t end() const { return start + static_cast<int32_t>(freq.size()); }
  };

  int32_t lo_, hi_;
  std::vector<Segment> segments_;  // Sorted, disjoint, non-adjacent.
};

void EncodeValue(RangeEncoder& enc, const QuantizedPmf& pmf, int32_t v);
int32_t DecodeValue(RangeDecoder& dec, const QuantizedPmf& pmf);

}  // namespace iwv3

#endif  // IWV3_GMM_H_

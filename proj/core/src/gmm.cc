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

#include "iwv3/gmm.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "iwv3/error.h"
#include "iwv3/ops.h"

namespace iwv3 {
namespace {

// Half-width of the evaluated window in standard deviations. Beyond it a
// unit bin holds less than phi(5) / sigma <= 2^-16 of the component.
constexpr double kWindowSigmas = 5.0;

void CheckRange(int32_t lo, int32_t hi) {
  if (lo > hi) Fail(ErrorCode::kInvalidArgument, "empty coefficient range");
  if (static_cast<int64_t>(hi) - lo + 1 > kMaxAlphabet) {
    Fail(ErrorCode::kInvalidArgument,
         "coefficient range [" + std::to_string(lo) + ", " + std::to_string(hi) +
             "] exceeds the coder alphabet");
  }
}

// Mixture CDF at the upper edge of bin v with tail absorption.
double UpperCdf(const GmmParams& p, int32_t v, int32_t hi) {
  if (v >= hi) return 1.0;
  double c = 0;
  for (int k = 0; k < kMixtures; ++k) {
    c += p.w[k] * NormalCdf((v + 0.5 - p.u[k]) / p.sigma[k]);
  }
  return c;
}

}  // namespace

double GmmProb(const GmmParams& p, int32_t v, int32_t lo, int32_t hi) {
  CheckRange(lo, hi);
  if (v < lo || v > hi) {
    Fail(ErrorCode::kInvalidArgument,
         "value " + std::to_string(v) + " outside signaled range");
  }
  double mass = 0;
  for (int k = 0; k < kMixtures; ++k) {
    const double s = std::max(p.sigma[k], kMinSigma);
    const double zh = (v + 0.5 - p.u[k]) / s;
    const double zl = (v - 0.5 - p.u[k]) / s;
    double m;
    if (v == lo && v == hi) {
      m = 1.0;
    } else if (v == lo) {
      m = NormalCdf(zh);
    } else if (v == hi) {
      m = NormalCdf(-zl);
    } else {
      m = zl > 0 ? NormalCdf(-zl) - NormalCdf(-zh) : NormalCdf(zh) - NormalCdf(zl);
    }
    mass += p.w[k] * m;
  }
  return mass;
}

QuantizedPmf::QuantizedPmf(const GmmParams& params, int32_t lo, int32_t hi)
    : lo_(lo), hi_(hi) {
  CheckRange(lo, hi);
  GmmParams p = params;
  double a = hi, b = lo;
  for (int k = 0; k < kMixtures; ++k) {
    p.sigma[k] = std::max(p.sigma[k], kMinSigma);
    if (p.w[k] <= 0) continue;
    a = std::min(a, p.u[k] - kWindowSigmas * p.sigma[k] - 1);
    b = std::max(b, p.u[k] + kWindowSigmas * p.sigma[k] + 1);
  }
  // Explicit runs: the two tail bins and the window.
  std::vector<std::pair<int32_t, int32_t>> runs{{lo, lo}, {hi, hi}};
  if (a <= b && b >= lo && a <= hi) {
    runs.push_back({static_cast<int32_t>(std::max<double>(lo, std::floor(a))),
                    static_cast<int32_t>(std::min<double>(hi, std::ceil(b)))});
  }
  std::sort(runs.begin(), runs.end());
  std::vector<std::pair<int32_t, int32_t>> merged;
  for (const auto& r : runs) {
    if (!merged.empty() && r.first <= merged.back().second + 1) {
      merged.back().second = std::max(merged.back().second, r.second);
    } else {
      merged.push_back(r);
    }
  }

  int64_t total = 0;
  Segment* largest_seg = nullptr;
  size_t largest_idx = 0;
  for (const auto& [s, e] : merged) {
    Segment seg{s, std::vector<uint32_t>(static_cast<size_t>(e - s + 1))};
    double below = s == lo ? 0.0 : UpperCdf(p, s - 1, hi);
    for (int32_t v = s; v <= e; ++v) {
      const double above = UpperCdf(p, v, hi);
      const double mass = std::max(0.0, above - below);
      below = above;
      const uint32_t f = std::max<uint32_t>(
          1, static_cast<uint32_t>(std::floor(mass * kProbTotal)));
      seg.freq[v - s] = std::min(f, kProbTotal);
    }
    segments_.push_back(std::move(seg));
  }
  int64_t implicit = static_cast<int64_t>(hi) - lo + 1;
  for (const auto& seg : segments_) {
    implicit -= static_cast<int64_t>(seg.freq.size());
    for (uint32_t f : seg.freq) total += f;
  }
  total += implicit;
  int64_t residual = static_cast<int64_t>(kProbTotal) - total;
  while (residual != 0) {
    largest_seg = nullptr;
    for (auto& seg : segments_) {
      for (size_t i = 0; i < seg.freq.size(); ++i) {
        if (!largest_seg || seg.freq[i] > largest_seg->freq[largest_idx]) {
          largest_seg = &seg;
          largest_idx = i;
        }
      }
    }
    uint32_t& f = largest_seg->freq[largest_idx];
    if (residual > 0) {
      f += static_cast<uint32_t>(residual);
      residual = 0;
    } else {
      const int64_t take = std::min<int64_t>(-residual, f - 1);
      if (take == 0) {
        Fail(ErrorCode::kInvalidArgument, "alphabet too large for 16-bit pmf");
      }
      f -= static_cast<uint32_t>(take);
      residual += take;
    }
  }
  uint32_t cum = 0;
  int32_t prev_end = lo;
  for (auto& seg : segments_) {
    cum += static_cast<uint32_t>(seg.start - prev_end);
    seg.cum_before = cum;
    for (uint32_t f : seg.freq) cum += f;
    prev_end = seg.end();
  }
}

uint32_t QuantizedPmf::freq(int32_t v) const {
  for (const auto& seg : segments_) {
    if (v >= seg.start && v < seg.end()) return seg.freq[v - seg.start];
  }
  return 1;
}

uint32_t QuantizedPmf::cum(int32_t v) const {
  uint32_t c = 0;
  int32_t prev_end = lo_;
  for (const auto& seg : segments_) {
    if (v < seg.start) return c + static_cast<uint32_t>(v - prev_end);
    c = seg.cum_before;
    if (v < seg.end()) {
      for (int32_t i = seg.start; i < v; ++i) c += seg.freq[i - seg.start];
      return c;
    }
    for (uint32_t f : seg.freq) c += f;
    prev_end = seg.end();
  }
  return c + static_cast<uint32_t>(v - prev_end);
}

int32_t QuantizedPmf::Find(uint32_t target) const {
  uint32_t c = 0;
  int32_t prev_end = lo_;
  for (const auto& seg : segments_) {
    if (target < seg.cum_before) {
      return prev_end + static_cast<int32_t>(target - c);
    }
    c = seg.cum_before;
    for (size_t i = 0; i < seg.freq.size(); ++i) {
      if (target < c + seg.freq[i]) return seg.start + static_cast<int32_t>(i);
      c += seg.freq[i];
    }
    prev_end = seg.end();
  }
  return std::min(hi_, prev_end + static_cast<int32_t>(target - c));
}

void EncodeValue(RangeEncoder& enc, const QuantizedPmf& pmf, int32_t v) {
  if (v < pmf.lo() || v > pmf.hi()) {
    Fail(ErrorCode::kInvalidArgument,
         "value " + std::to_string(v) + " outside signaled range");
  }
  enc.Encode(pmf.cum(v), pmf.freq(v));
}

int32_t DecodeValue(RangeDecoder& dec, const QuantizedPmf& pmf) {
  const int32_t v = pmf.Find(dec.Target());
  dec.Consume(pmf.cum(v), pmf.freq(v));
  return v;
}

}  // namespace iwv3

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

#ifndef IWV3_SUBBAND_H_
#define IWV3_SUBBAND_H_

#include <array>
#include <string>
#include <vector>

#include "iwv3/error.h"

namespace iwv3 {

// First letter is the row (horizontal) filter, second the column filter.
enum class SubbandType { kLL = 0, kHL = 1, kLH = 2, kHH = 3 };

struct SubbandId {
  int level = 0;
  SubbandType type = SubbandType::kLL;
  bool operator==(const SubbandId&) const = default;
};

// LL_L, HL_L, LH_L, HH_L, HL_{L-1}, ..., HH_1.
inline std::vector<SubbandId> CodingOrder(int levels) {
  if (levels < 1) Fail(ErrorCode::kInvalidArgument, "levels must be >= 1");
  std::vector<SubbandId> order{{levels, SubbandType::kLL}};
  for (int j = levels; j >= 1; --j) {
    order.push_back({j, SubbandType::kHL});
    order.push_back({j, SubbandType::kLH});
    order.push_back({j, SubbandType::kHH});
  }
  return order;
}

inline std::string SubbandName(SubbandId id) {
  static const char* kNames[] = {"LL", "HL", "LH", "HH"};
  return kNames[static_cast<int>(id.type)] + std::to_string(id.level);
}

// Multilevel decomposition. detail[j - 1] holds {HL_j, LH_j, HH_j}; level 1
// is the finest. Only the coarsest LL is kept.
template <typename T>
struct Pyramid {
  T ll;
  std::vector<std::array<T, 3>> detail;

  int levels() const { return static_cast<int>(detail.size()); }

  T& at(SubbandId id) {
    return id.type == SubbandType::kLL
               ? ll
               : detail[id.level - 1][static_cast<int>(id.type) - 1];
  }
  const T& at(SubbandId id) const {
    return id.type == SubbandType::kLL
               ? ll
               : detail[id.level - 1][static_cast<int>(id.type) - 1];
  }
};

}  // namespace iwv3

#endif  // IWV3_SUBBAND_H_

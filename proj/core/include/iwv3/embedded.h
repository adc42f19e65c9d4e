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

#ifndef IWV3_EMBEDDED_H_
#define IWV3_EMBEDDED_H_

#include <cstddef>
#include <cstdint>

namespace iwv3::internal {

// Generated at build time from core/data/lossless_default.iwtw.
extern const std::uint8_t kEmbeddedLosslessWeights[];
extern const std::size_t kEmbeddedLosslessWeightsSize;

}  // namespace iwv3::internal

#endif  // IWV3_EMBEDDED_H_

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

#include "iwv3/codec.h"
#include "iwv3/embedded.h"

namespace iwv3 {

const ModelWeights& DefaultLosslessWeights() {
  static const ModelWeights weights = LoadWeights(
      {internal::kEmbeddedLosslessWeights, internal::kEmbeddedLosslessWeightsSize});
  return weights;
}

}  // namespace iwv3

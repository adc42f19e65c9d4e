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

#ifndef IWV3_LIFTING_H_
#define IWV3_LIFTING_H_

#include <array>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "iwv3/image.h"
#include "iwv3/nets.h"
#include "iwv3/subband.h"
#include "iwv3/tensor.h"

namespace iwv3 {

enum class TransformKind { kCdf53, kCdf97, kAdditive, kAffine };

// CDF 9/7 lifting constants.
inline constexpr double kCdf97Alpha = -1.586134342;
inline constexpr double kCdf97Beta = -0.05298011854;
inline constexpr double kCdf97Gamma = 0.8829110762;
inline constexpr double kCdf97Delta = 0.4435068522;
inline constexpr double kCdf97Zeta = 1.149604398;

// Parity split of an even-length signal and its inverse.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> Split(std::span<const T> signal) {
  if (signal.size() % 2 != 0) {
    Fail(ErrorCode::kInvalidArgument, "split of odd-length signal");
  }
  std::pair<std::vector<T>, std::vector<T>> out;
  out.first.reserve(signal.size() / 2);
  out.second.reserve(signal.size() / 2);
  for (size_t i = 0; i < signal.size(); i += 2) {
    out.first.push_back(signal[i]);
    out.second.push_back(signal[i + 1]);
  }
  return out;
}

template <typename T>
std::vector<T> Merge(std::span<const T> even, std::span<const T> odd) {
  if (even.size() != odd.size()) {
    Fail(ErrorCode::kInvalidArgument, "merge of unequal halves");
  }
  std::vector<T> out;
  out.reserve(even.size() * 2);
  for (size_t i = 0; i < even.size(); ++i) {
    out.push_back(even[i]);
    out.push_back(odd[i]);
  }
  return out;
}

// Reversible integer 5/3 lifting with symmetric extension:
//   h[n] = xo[n] - floor((xe[n] + xe[n+1]) / 2)
//   l[n] = xe[n] + floor((h[n-1] + h[n] + 2) / 4)
void Cdf53Forward1d(std::span<const int32_t> xe, std::span<const int32_t> xo,
                    std::span<int32_t> l, std::span<int32_t> h);
void Cdf53Inverse1d(std::span<const int32_t> l, std::span<const int32_t> h,
                    std::span<int32_t> xe, std::span<int32_t> xo);

// One 2D level, rows first: {LL, HL, LH, HH}.
std::array<Plane32, 4> Cdf53ForwardLevel(const Plane32& plane);
Plane32 Cdf53InverseLevel(const std::array<Plane32, 4>& bands);

Pyramid<Plane32> Cdf53Forward(const Plane32& plane, int levels);
Plane32 Cdf53Inverse(const Pyramid<Plane32>& pyramid);

// Floating-point lifting on (N,1,H,W) tensors: CDF 9/7 or learned P/U
// nets. The learned P_i/U_i parameters are "pu.p<i>.*" and "pu.u<i>.*",
// shared across levels, rows and columns. All operations are recorded
// when the input or the weights are.
class LiftingBackend {
 public:
  static LiftingBackend Cdf97();
  // `weights` must outlive the backend. The step count is the number of
  // P nets present.
  static LiftingBackend Learned(TransformKind kind, const ModelWeights& weights);

  TransformKind kind() const { return kind_; }
  int steps() const { return steps_; }

  // Lifting along the width axis.
  std::pair<Tensor, Tensor> Forward1d(const Tensor& xe, const Tensor& xo) const;
  std::pair<Tensor, Tensor> Inverse1d(const Tensor& l, const Tensor& h) const;

  std::array<Tensor, 4> ForwardLevel(const Tensor& x) const;
  Tensor InverseLevel(const std::array<Tensor, 4>& bands) const;

  Pyramid<Tensor> Forward(const Tensor& x, int levels) const;
  Tensor Inverse(const Pyramid<Tensor>& pyramid) const;

 private:
  LiftingBackend(TransformKind kind, const ModelWeights* weights, int steps)
      : kind_(kind), weights_(weights), steps_(steps) {}

  TransformKind kind_;
  const ModelWeights* weights_;
  int steps_;
};

// Adds P/U parameters for `steps` lifting steps. With two steps the nets
// start out as CDF 9/7 (normalized for affine, unnormalized for additive);
// further steps start as identity.
void AddLiftingWeights(ModelWeights& weights, TransformKind kind, int steps,
                       int channels, std::mt19937_64& rng, double stddev);

// Plane <-> (1,1,H,W) tensor.
Tensor ToTensor(const PlaneF& plane);
Tensor ToTensor(const Plane32& plane);
PlaneF ToPlane(const Tensor& t, int index = 0);

}  // namespace iwv3

#endif  // IWV3_LIFTING_H_

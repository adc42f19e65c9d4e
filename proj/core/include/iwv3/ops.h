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

#ifndef IWV3_OPS_H_
#define IWV3_OPS_H_

#include <span>

#include "iwv3/tensor.h"

namespace iwv3 {

// The core op set, addressable by kind for table-driven callers and tests.
enum class OpKind {
  kConv2d,         // inputs: x (N,Ci,H,W), w (Co,Ci,k,k), b (Co)
  kRelu,
  kAdd,
  kSub,
  kMul,
  kExp,
  kTanh,
  kScaleByScalar,  // inputs: x, s (single element)
  kSum,
  kMean,
};

Tensor Apply(OpKind kind, std::span<const Tensor> inputs);

// Elementwise, identical shapes.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Div(const Tensor& a, const Tensor& b);

Tensor Scale(const Tensor& x, double s);
Tensor AddScalar(const Tensor& x, double s);
Tensor ScaleBy(const Tensor& x, const Tensor& s);

Tensor Relu(const Tensor& x);
Tensor Exp(const Tensor& x);
Tensor Log(const Tensor& x);
Tensor Tanh(const Tensor& x);
Tensor Sqrt(const Tensor& x);
// max(x, lo); the gradient passes where x > lo.
Tensor ClampMin(const Tensor& x, double lo);
// Detached: floor has zero derivative almost everywhere.
Tensor Floor(const Tensor& x);

Tensor Sum(const Tensor& x);
Tensor Mean(const Tensor& x);

// Spatial causal masks for 3x3 kernels in raster order. Type A excludes the
// centre tap, type B includes it.
enum class ConvMask { kNone, kCausalA, kCausalB };

// Stride 1, zero padding that preserves H x W. Kernel sides must be odd.
Tensor Conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              ConvMask mask = ConvMask::kNone);

Tensor Reshape(const Tensor& x, Shape shape);
// Contiguous run of the flattened values, viewed with `shape`.
Tensor SliceFlat(const Tensor& x, size_t offset, Shape shape);

// Channel-axis ops on (N, C, H, W).
Tensor SliceChannels(const Tensor& x, int start, int count);
Tensor ConcatChannels(std::span<const Tensor> parts);
Tensor ScaleChannels(const Tensor& x, const Tensor& s);  // s has C elements
Tensor SoftmaxChannels(const Tensor& x);
Tensor LogSoftmaxChannels(const Tensor& x);
// (N, C, H, W) -> (N, 1, H, W)
Tensor LogSumExpChannels(const Tensor& x);

// Spatial rearrangements on (N, C, H, W). `axis` is 2 (rows) or 3 (columns).
Tensor TakeParity(const Tensor& x, int axis, int parity);
Tensor Interleave(const Tensor& even, const Tensor& odd, int axis);
Tensor TransposeHW(const Tensor& x);
// y[i] = x[clamp(i + offset)] along `axis`.
Tensor ShiftClamp(const Tensor& x, int axis, int offset);

// Standard normal CDF.
double NormalCdf(double z);

// Elementwise Gaussian mass of the unit bin around v:
// Phi((v + 1/2 - mean) / sigma) - Phi((v - 1/2 - mean) / sigma).
Tensor GaussianBinMass(const Tensor& v, const Tensor& mean,
                       const Tensor& sigma);
// Natural log of the same mass, accurate far into the tails.
Tensor LogGaussianBinMass(const Tensor& v, const Tensor& mean,
                          const Tensor& sigma);

}  // namespace iwv3

#endif  // IWV3_OPS_H_

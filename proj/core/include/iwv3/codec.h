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

#ifndef IWV3_CODEC_H_
#define IWV3_CODEC_H_

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "iwv3/bitstream.h"
#include "iwv3/image.h"
#include "iwv3/lifting.h"
#include "iwv3/subband.h"
#include "iwv3/weights.h"

namespace iwv3 {

inline constexpr int kDefaultLosslessLevels = 3;

struct EncodeOptions {
  CodecMode mode = CodecMode::kLossless;
  int levels = kDefaultLosslessLevels;  // Lossy streams take it from the weights.
  double qstep_offset = 0;              // Added to every lossy QStep.
  int threads = 1;                      // Channels coded concurrently.
};

struct EncodedImage {
  Bitstream stream;
  std::vector<uint8_t> bytes;
  // Quantized coefficients of Y, Co, Cg.
  std::array<Pyramid<Plane32>, 3> symbols;
  // Sum of -log2 of the quantized probability of every coded symbol.
  std::array<double, 3> model_bits{};
  // Payload bits per true pixel.
  double bpp = 0;
};

struct DecodedImage {
  RgbImage image;
  StreamHeader header;
  std::array<Pyramid<Plane32>, 3> symbols;
};

// Lossless streams need context weights (see DefaultLosslessWeights());
// lossy streams need the complete set for the requested mode.
EncodedImage EncodeImage(const RgbImage& image, const ModelWeights& weights,
                         const EncodeOptions& options);
// Throws kWeightsMismatch when `weights` are not the ones the stream was
// encoded with, kCorruptStream on damaged input.
DecodedImage DecodeImage(std::span<const uint8_t> bytes,
                         const ModelWeights& weights, int threads = 1);

// Context weights compiled into the library for zero-configuration
// lossless coding.
const ModelWeights& DefaultLosslessWeights();

// Throws kWeightsMismatch unless `weights` fully describe a `mode` codec.
void CheckCodecWeights(const ModelWeights& weights, CodecMode mode);

TransformKind TransformOf(CodecMode mode);

// Lossy analysis: YCoCg-R, padding, learned transform and quantization.
// The pyramids are (3,1,h,w), one batch entry per channel.
Pyramid<Tensor> AnalyzeImage(const RgbImage& image, const LiftingBackend& backend,
                             int levels);
// Inverse of the above from dequantized coefficients, including the post
// filter when the weights hold one.
RgbImage SynthesizeImage(const Pyramid<Tensor>& coefficients,
                         const LiftingBackend& backend,
                         const ModelWeights& weights, int width, int height);

}  // namespace iwv3

#endif  // IWV3_CODEC_H_

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

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <thread>

#include "iwv3/context_model.h"
#include "iwv3/error.h"
#include "iwv3/gmm.h"
#include "iwv3/ops.h"
#include "iwv3/postproc.h"
#include "iwv3/quant.h"
#include "iwv3/range_coder.h"

namespace iwv3 {
namespace {

// Position of (level, type) in coding order.
int CodingIndex(int levels, SubbandId id) {
  if (id.type == SubbandType::kLL) return 0;
  return 1 + 3 * (levels - id.level) + static_cast<int>(id.type) - 1;
}

Tensor Dequantized(const Plane32& q, double qstep) {
  std::vector<double> v(q.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = q.data()[i] * qstep;
  return Tensor({1, 1, q.height(), q.width()}, std::move(v));
}

Pyramid<Plane32> EmptyPyramid(int width, int height, int levels) {
  Pyramid<Plane32> p;
  for (int j = 1; j <= levels; ++j) {
    const Plane32 band(width >> j, height >> j);
    p.detail.push_back({band, band, band});
  }
  p.ll = Plane32(width >> levels, height >> levels);
  return p;
}

// Walks one channel's subbands in coding order, handing every coefficient
// and its quantized distribution to `code`. The encoder passes a coder that
// writes the value; the decoder one that overwrites it, so both see the
// same context at every step.
void CodeChannel(const ModelWeights& weights, const StreamHeader& header,
                 int channel, const LiftingBackend* backend,
                 Pyramid<Plane32>& symbols,
                 const std::function<void(int32_t&, const QuantizedPmf&)>& code) {
  const int levels = header.levels;
  const bool lossless = header.mode == CodecMode::kLossless;
  auto qstep = [&](SubbandId id) {
    return static_cast<double>(header.at(channel, CodingIndex(levels, id)).qstep);
  };

  Pyramid<Tensor> seen;
  seen.ll = ToTensor(symbols.ll);
  for (int j = 1; j <= levels; ++j) {
    const Plane32& ref = symbols.detail[j - 1][0];
    const Tensor zero = Tensor::Zeros({1, 1, ref.height(), ref.width()});
    seen.detail.push_back({zero, zero, zero});
  }

  // LL_j rebuilt from level j + 1, for j < levels.
  std::vector<std::optional<Plane32>> int_ll(levels + 1);
  std::vector<std::optional<Tensor>> rec_ll(levels + 1);
  std::function<Plane32(int)> lossless_ll = [&](int j) -> Plane32 {
    if (j == levels) return symbols.ll;
    if (!int_ll[j]) {
      const auto& d = symbols.detail[j];
      int_ll[j] = Cdf53InverseLevel({lossless_ll(j + 1), d[0], d[1], d[2]});
    }
    return *int_ll[j];
  };
  std::function<Tensor(int)> lossy_ll = [&](int j) -> Tensor {
    if (!rec_ll[j]) {
      if (j == levels) {
        rec_ll[j] = Dequantized(symbols.ll, qstep({levels, SubbandType::kLL}));
      } else {
        const auto& d = symbols.detail[j];
        const int lv = j + 1;
        rec_ll[j] = backend->InverseLevel(
            {lossy_ll(lv), Dequantized(d[0], qstep({lv, SubbandType::kHL})),
             Dequantized(d[1], qstep({lv, SubbandType::kLH})),
             Dequantized(d[2], qstep({lv, SubbandType::kHH}))});
      }
    }
    return *rec_ll[j];
  };
  auto ll_context = [&](int j) -> Tensor {
    if (lossless) return ToTensor(lossless_ll(j));
    return Scale(lossy_ll(j), 1.0 / qstep({j, SubbandType::kHL}));
  };

  const auto order = CodingOrder(levels);
  for (size_t k = 0; k < order.size(); ++k) {
    const SubbandId id = order[k];
    const SubbandHeader& sh = header.at(channel, static_cast<int>(k));
    Plane32& band = symbols.at(id);
    if (sh.min == sh.max) {
      std::fill(band.data().begin(), band.data().end(), sh.min);
    } else {
      ContextEvaluator eval(weights, id.type, LongTermContext(seen, id, ll_context));
      for (int y = 0; y < band.height(); ++y) {
        for (int x = 0; x < band.width(); ++x) {
          const QuantizedPmf pmf(eval.At(band, x, y), sh.min, sh.max);
          code(band.at(x, y), pmf);
        }
      }
    }
    seen.at(id) = ToTensor(band);
  }
}

void RunChannels(int threads, const std::function<void(int)>& fn) {
  if (threads <= 1) {
    for (int c = 0; c < 3; ++c) fn(c);
    return;
  }
  std::exception_ptr errors[3];
  std::vector<std::thread> pool;
  for (int c = 0; c < 3; ++c) {
    pool.emplace_back([&, c] {
      try {
        fn(c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Plane32 ToIntPlane(const Plane16& p) {
  Plane32 out(p.width(), p.height());
  std::copy(p.data().begin(), p.data().end(), out.data().begin());
  return out;
}

}  // namespace

TransformKind TransformOf(CodecMode mode) {
  switch (mode) {
    case CodecMode::kLossless:
      return TransformKind::kCdf53;
    case CodecMode::kAdditive:
      return TransformKind::kAdditive;
    case CodecMode::kAffine:
      return TransformKind::kAffine;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown mode");
}

void CheckCodecWeights(const ModelWeights& weights, CodecMode mode) {
  ContextChannels(weights);
  if (mode == CodecMode::kLossless) return;
  const bool affine = weights.Contains("pu.p1.shift.w");
  if (!weights.Contains("pu.p1.c1.w") || affine != (mode == CodecMode::kAffine)) {
    Fail(ErrorCode::kWeightsMismatch,
         std::string("weights do not hold a ") + ModeName(mode) + " transform");
  }
  LevelsOfLogQsteps(weights);
}

Pyramid<Tensor> AnalyzeImage(const RgbImage& image, const LiftingBackend& backend,
                             int levels) {
  const ImagePlanes planes = ToPlanes(image, levels);
  const int w = planes.padded_width(), h = planes.padded_height();
  std::vector<double> v;
  v.reserve(3 * planes.planes[0].size());
  for (const auto& p : planes.planes) v.insert(v.end(), p.data().begin(), p.data().end());
  return backend.Forward(Tensor({3, 1, h, w}, std::move(v)), levels);
}

RgbImage SynthesizeImage(const Pyramid<Tensor>& coefficients,
                         const LiftingBackend& backend,
                         const ModelWeights& weights, int width, int height) {
  Tensor x = backend.Inverse(coefficients);
  if (HasDequantNet(weights)) x = DequantForward(weights, x);
  ImagePlanes planes;
  planes.true_width = width;
  planes.true_height = height;
  const int pw = x.dim(3), ph = x.dim(2);
  for (int c = 0; c < 3; ++c) {
    const double lo = c == 0 ? 0 : -255, hi = 255;
    Plane16 p(pw, ph);
    const double* src = x.data() + static_cast<size_t>(c) * pw * ph;
    for (size_t i = 0; i < p.size(); ++i) {
      p.data()[i] = static_cast<int16_t>(std::clamp(std::round(src[i]), lo, hi));
    }
    planes.planes[c] = std::move(p);
  }
  return FromPlanes(planes);
}

EncodedImage EncodeImage(const RgbImage& image, const ModelWeights& raw_weights,
                         const EncodeOptions& options) {
  CheckCodecWeights(raw_weights, options.mode);
  const ModelWeights weights = raw_weights.RoundedToFloat();
  const bool lossless = options.mode == CodecMode::kLossless;
  const int levels = lossless ? options.levels : LevelsOfLogQsteps(weights);
  if (levels < 1 || levels > kMaxLevels) {
    Fail(ErrorCode::kInvalidArgument, "levels must be in [1, 8]");
  }
  if (lossless && options.qstep_offset != 0) {
    Fail(ErrorCode::kInvalidArgument, "qstep offset applies to lossy modes only");
  }

  EncodedImage out;
  StreamHeader& header = out.stream.header;
  header.mode = options.mode;
  header.levels = levels;
  header.width = static_cast<uint32_t>(image.width());
  header.height = static_cast<uint32_t>(image.height());
  header.weights_checksum = WeightsChecksum(weights);
  const int nsb = header.subbands_per_channel();
  header.subbands.resize(3 * nsb);
  const auto order = CodingOrder(levels);

  std::optional<LiftingBackend> backend;
  if (lossless) {
    const ImagePlanes planes = ToPlanes(image, levels);
    for (int c = 0; c < 3; ++c) {
      out.symbols[c] = Cdf53Forward(ToIntPlane(planes.planes[c]), levels);
    }
  } else {
    backend = LiftingBackend::Learned(TransformOf(options.mode), weights);
    const QuantGrid grid = QuantGridFromWeights(weights, options.qstep_offset);
    const Pyramid<Tensor> coeffs = AnalyzeImage(image, *backend, levels);
    for (int c = 0; c < 3; ++c) {
      out.symbols[c] = EmptyPyramid(coeffs.detail[0][0].dim(3) * 2,
                                    coeffs.detail[0][0].dim(2) * 2, levels);
      for (int k = 0; k < nsb; ++k) {
        const Tensor& band = coeffs.at(order[k]);
        const size_t n = static_cast<size_t>(band.dim(2)) * band.dim(3);
        const double q = grid.at(c, k);
        Plane32& dst = out.symbols[c].at(order[k]);
        for (size_t i = 0; i < n; ++i) dst.data()[i] = Quantize(band[c * n + i], q);
        header.subbands[c * nsb + k].qstep = static_cast<float>(q);
      }
    }
  }

  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < nsb; ++k) {
      const auto& data = out.symbols[c].at(order[k]).data();
      const auto [mn, mx] = std::minmax_element(data.begin(), data.end());
      SubbandHeader& sh = header.subbands[c * nsb + k];
      sh.min = *mn;
      sh.max = *mx;
      if (static_cast<int64_t>(sh.max) - sh.min + 1 > kMaxAlphabet) {
        Fail(ErrorCode::kInvalidArgument,
             "coefficient range of " + SubbandName(order[k]) +
                 " too wide to code; use a larger qstep");
      }
    }
  }

  RunChannels(options.threads, [&](int c) {
    RangeEncoder enc;
    double bits = 0;
    Pyramid<Plane32> work = out.symbols[c];
    CodeChannel(weights, header, c, backend ? &*backend : nullptr, work,
                [&](int32_t& v, const QuantizedPmf& pmf) {
                  EncodeValue(enc, pmf, v);
                  bits -= std::log2(pmf.freq(v) / static_cast<double>(kProbTotal));
                });
    out.stream.payloads[c] = enc.Finish();
    out.model_bits[c] = bits;
  });

  out.bytes = SerializeBitstream(out.stream);
  out.bpp = 8.0 * out.stream.payload_bytes() /
            (static_cast<double>(image.width()) * image.height());
  return out;
}

DecodedImage DecodeImage(std::span<const uint8_t> bytes,
                         const ModelWeights& raw_weights, int threads) {
  const Bitstream stream = ParseBitstream(bytes);
  const StreamHeader& header = stream.header;
  const ModelWeights weights = raw_weights.RoundedToFloat();
  if (WeightsChecksum(weights) != header.weights_checksum) {
    Fail(ErrorCode::kWeightsMismatch,
         "weights checksum does not match the stream");
  }
  CheckCodecWeights(weights, header.mode);
  const bool lossless = header.mode == CodecMode::kLossless;
  const int levels = header.levels;
  if (!lossless && LevelsOfLogQsteps(weights) != levels) {
    Fail(ErrorCode::kWeightsMismatch, "stream levels differ from the weights");
  }
  const int pw = PaddedSize(static_cast<int>(header.width), levels);
  const int ph = PaddedSize(static_cast<int>(header.height), levels);

  std::optional<LiftingBackend> backend;
  if (!lossless) backend = LiftingBackend::Learned(TransformOf(header.mode), weights);

  DecodedImage out;
  out.header = header;
  RunChannels(threads, [&](int c) {
    RangeDecoder dec(stream.payloads[c]);
    out.symbols[c] = EmptyPyramid(pw, ph, levels);
    CodeChannel(weights, header, c, backend ? &*backend : nullptr, out.symbols[c],
                [&](int32_t& v, const QuantizedPmf& pmf) {
                  v = DecodeValue(dec, pmf);
                });
  });

  if (lossless) {
    ImagePlanes planes;
    planes.true_width = static_cast<int>(header.width);
    planes.true_height = static_cast<int>(header.height);
    for (int c = 0; c < 3; ++c) {
      const Plane32 p = Cdf53Inverse(out.symbols[c]);
      Plane16 p16(p.width(), p.height());
      for (size_t i = 0; i < p.size(); ++i) {
        const int32_t v = p.data()[i];
        if (v < -32768 || v > 32767) {
          Fail(ErrorCode::kCorruptStream, "reconstructed sample out of range");
        }
        p16.data()[i] = static_cast<int16_t>(v);
      }
      planes.planes[c] = std::move(p16);
    }
    out.image = FromPlanes(planes);
    return out;
  }

  const auto order = CodingOrder(levels);
  const int nsb = header.subbands_per_channel();
  Pyramid<Tensor> coeffs;
  for (int j = 1; j <= levels; ++j) coeffs.detail.emplace_back();
  for (int k = 0; k < nsb; ++k) {
    const Plane32& ref = out.symbols[0].at(order[k]);
    std::vector<double> v;
    v.reserve(3 * ref.size());
    for (int c = 0; c < 3; ++c) {
      const double q = header.at(c, k).qstep;
      for (int32_t s : out.symbols[c].at(order[k]).data()) v.push_back(s * q);
    }
    coeffs.at(order[k]) = Tensor({3, 1, ref.height(), ref.width()}, std::move(v));
  }
  out.image = SynthesizeImage(coeffs, *backend, weights,
                              static_cast<int>(header.width),
                              static_cast<int>(header.height));
  return out;
}

}  // namespace iwv3

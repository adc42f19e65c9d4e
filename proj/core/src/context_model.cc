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

#include "iwv3/context_model.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "iwv3/error.h"
#include "iwv3/nets.h"
#include "iwv3/ops.h"

namespace iwv3 {
namespace {

const char* TypeKey(SubbandType type) {
  static const char* kKeys[] = {"ll", "hl", "lh", "hh"};
  return kKeys[static_cast<int>(type)];
}

std::string Prefix(SubbandType type) {
  return std::string("ctx.") + TypeKey(type) + ".";
}

}  // namespace

void AddContextWeights(ModelWeights& weights, int channels,
                       std::mt19937_64& rng, double stddev) {
  if (channels < 1) Fail(ErrorCode::kInvalidArgument, "context width < 1");
  const int c = channels;
  for (int t = 0; t < 4; ++t) {
    const std::string p = Prefix(static_cast<SubbandType>(t));
    AddConvLayer(weights, p + "s1", c, 1, 3, &rng, stddev);
    AddConvLayer(weights, p + "s2", c, c, 3, &rng, stddev / std::sqrt(c));
    AddConvLayer(weights, p + "l1", c, kLongTermChannels, 3, &rng, stddev);
    AddConvLayer(weights, p + "l2", c, c, 3, &rng, stddev / std::sqrt(c));
    AddConvLayer(weights, p + "f1", c, 2 * c, 1, &rng, stddev / std::sqrt(c));
    AddConvLayer(weights, p + "f2", kContextOutputs, c, 1, nullptr, 0);
    // Flat start: equal weights, zero means, sigma = kContextScale.
    std::vector<double> bias(kContextOutputs, 0.0);
    for (int k = 0; k < kMixtures; ++k) bias[2 * kMixtures + k] = std::log(kContextScale);
    weights.Set(p + "f2.b", Tensor({kContextOutputs}, std::move(bias)));
  }
}

int ContextChannels(const ModelWeights& weights) {
  const Tensor& w = weights.Get("ctx.ll.s1.w");
  if (w.rank() != 4) Fail(ErrorCode::kWeightsMismatch, "bad context weights");
  const int c = w.dim(0);
  for (int t = 0; t < 4; ++t) {
    const std::string p = Prefix(static_cast<SubbandType>(t));
    weights.Get(p + "s1.w", {c, 1, 3, 3});
    weights.Get(p + "s1.b", {c});
    weights.Get(p + "s2.w", {c, c, 3, 3});
    weights.Get(p + "s2.b", {c});
    weights.Get(p + "l1.w", {c, kLongTermChannels, 3, 3});
    weights.Get(p + "l1.b", {c});
    weights.Get(p + "l2.w", {c, c, 3, 3});
    weights.Get(p + "l2.b", {c});
    weights.Get(p + "f1.w", {c, 2 * c, 1, 1});
    weights.Get(p + "f1.b", {c});
    weights.Get(p + "f2.w", {kContextOutputs, c, 1, 1});
    weights.Get(p + "f2.b", {kContextOutputs});
  }
  return c;
}

Tensor ContextRaw(const ModelWeights& weights, SubbandType type,
                  const Tensor& s, const Tensor& l) {
  if (s.rank() != 4 || s.dim(1) != 1 || l.rank() != 4 ||
      l.dim(1) != kLongTermChannels || s.dim(0) != l.dim(0) ||
      s.dim(2) != l.dim(2) || s.dim(3) != l.dim(3)) {
    Fail(ErrorCode::kShapeMismatch, "context inputs " + ShapeString(s.shape()) +
                                        " and " + ShapeString(l.shape()));
  }
  const std::string p = Prefix(type);
  const double k = 1.0 / kContextScale;
  Tensor a = Relu(ConvLayer(weights, p + "s1", Scale(s, k), ConvMask::kCausalA));
  a = Relu(ConvLayer(weights, p + "s2", a, ConvMask::kCausalB));
  Tensor b = Relu(ConvLayer(weights, p + "l1", Scale(l, k)));
  b = Relu(ConvLayer(weights, p + "l2", b));
  const Tensor parts[] = {a, b};
  Tensor f = Relu(ConvLayer(weights, p + "f1", ConcatChannels(parts)));
  return ConvLayer(weights, p + "f2", f);
}

GmmParams MapRaw(std::span<const double> raw) {
  GmmParams p;
  double m = raw[0];
  for (int k = 1; k < kMixtures; ++k) m = std::max(m, raw[k]);
  double z = 0;
  for (int k = 0; k < kMixtures; ++k) {
    p.w[k] = std::exp(raw[k] - m);
    z += p.w[k];
  }
  for (int k = 0; k < kMixtures; ++k) {
    p.w[k] /= z;
    p.u[k] = raw[kMixtures + k] * kContextScale;
    p.sigma[k] = std::max(std::exp(raw[2 * kMixtures + k]), kMinSigma);
  }
  return p;
}

Tensor RateBits(const Tensor& raw, const Tensor& v) {
  if (raw.rank() != 4 || raw.dim(1) != kContextOutputs || v.rank() != 4 ||
      v.dim(1) != 1 || v.dim(0) != raw.dim(0) || v.dim(2) != raw.dim(2) ||
      v.dim(3) != raw.dim(3)) {
    Fail(ErrorCode::kShapeMismatch, "rate inputs " + ShapeString(raw.shape()) +
                                        " and " + ShapeString(v.shape()));
  }
  const Tensor logw = LogSoftmaxChannels(SliceChannels(raw, 0, kMixtures));
  const Tensor mean = Scale(SliceChannels(raw, kMixtures, kMixtures), kContextScale);
  const Tensor sigma =
      ClampMin(Exp(SliceChannels(raw, 2 * kMixtures, kMixtures)), kMinSigma);
  const Tensor copies[] = {v, v, v};
  const Tensor logm = LogGaussianBinMass(ConcatChannels(copies), mean, sigma);
  const Tensor ln_p = LogSumExpChannels(Add(logw, logm));
  return Scale(Sum(ln_p), -1.0 / std::log(2.0));
}

ContextEvaluator::ContextEvaluator(const ModelWeights& weights,
                                   SubbandType type, const Tensor& long_term) {
  c_ = ContextChannels(weights);
  if (long_term.rank() != 4 || long_term.dim(0) != 1 ||
      long_term.dim(1) != kLongTermChannels) {
    Fail(ErrorCode::kShapeMismatch,
         "long-term context " + ShapeString(long_term.shape()));
  }
  h_ = long_term.dim(2);
  w_ = long_term.dim(3);
  const int c = c_;
  const std::string p = Prefix(type);

  // s1 weights as (co, tap) over the four causal taps.
  const Tensor& s1w = weights.Get(p + "s1.w");
  s1w_.resize(static_cast<size_t>(c) * 4);
  for (int co = 0; co < c; ++co) {
    for (int t = 0; t < 4; ++t) s1w_[co * 4 + t] = s1w[co * 9 + t];
  }
  const auto& s1b = weights.Get(p + "s1.b").values();
  s1b_.assign(s1b.begin(), s1b.end());

  // s2 weights as (co, tap, ci) over the five taps up to the centre.
  const Tensor& s2w = weights.Get(p + "s2.w");
  s2w_.resize(static_cast<size_t>(c) * 5 * c);
  for (int co = 0; co < c; ++co)
    for (int t = 0; t < 5; ++t)
      for (int ci = 0; ci < c; ++ci)
        s2w_[(static_cast<size_t>(co) * 5 + t) * c + ci] =
            s2w[(static_cast<size_t>(co) * c + ci) * 9 + t];
  const auto& s2b = weights.Get(p + "s2.b").values();
  s2b_.assign(s2b.begin(), s2b.end());

  // f1 splits into the short-term half and the long-term half.
  const Tensor& f1w = weights.Get(p + "f1.w");
  f1s_.resize(static_cast<size_t>(c) * c);
  std::vector<double> f1l(static_cast<size_t>(c) * c);
  for (int co = 0; co < c; ++co)
    for (int ci = 0; ci < c; ++ci) {
      f1s_[co * c + ci] = f1w[co * 2 * c + ci];
      f1l[co * c + ci] = f1w[co * 2 * c + c + ci];
    }
  const auto& f2w = weights.Get(p + "f2.w").values();
  f2w_.assign(f2w.begin(), f2w.end());
  const auto& f2b = weights.Get(p + "f2.b").values();
  f2b_.assign(f2b.begin(), f2b.end());

  Tensor b = Relu(ConvLayer(weights, p + "l1",
                            Scale(long_term.Detach(), 1.0 / kContextScale)));
  b = Relu(ConvLayer(weights, p + "l2", b));
  const Tensor base = Conv2d(b, Tensor({c, c, 1, 1}, std::move(f1l)),
                             weights.Get(p + "f1.b"));
  f1_base_.assign(base.values().begin(), base.values().end());

  s1_.assign(static_cast<size_t>(h_) * w_ * c, 0.0);
  s2_.resize(c);
  f1_.resize(c);
  raw_.resize(kContextOutputs);
}

GmmParams ContextEvaluator::At(const Plane32& s, int x, int y) {
  const int c = c_;
  const double k = 1.0 / kContextScale;
  auto sample = [&](int xx, int yy) {
    return xx < 0 || yy < 0 || xx >= w_ ? 0.0 : s.at(xx, yy) * k;
  };
  const double in[4] = {sample(x - 1, y - 1), sample(x, y - 1),
                        sample(x + 1, y - 1), sample(x - 1, y)};
  double* s1 = &s1_[(static_cast<size_t>(y) * w_ + x) * c];
  for (int co = 0; co < c; ++co) {
    const double* wk = &s1w_[co * 4];
    const double v = s1b_[co] + wk[0] * in[0] + wk[1] * in[1] + wk[2] * in[2] +
                     wk[3] * in[3];
    s1[co] = v > 0 ? v : 0.0;
  }

  const double* taps[5];
  const int tx[5] = {x - 1, x, x + 1, x - 1, x};
  const int ty[5] = {y - 1, y - 1, y - 1, y, y};
  for (int t = 0; t < 5; ++t) {
    const bool inside = tx[t] >= 0 && tx[t] < w_ && ty[t] >= 0;
    taps[t] = inside ? &s1_[(static_cast<size_t>(ty[t]) * w_ + tx[t]) * c] : nullptr;
  }
  for (int co = 0; co < c; ++co) {
    double v = s2b_[co];
    for (int t = 0; t < 5; ++t) {
      if (!taps[t]) continue;
      const double* wk = &s2w_[(static_cast<size_t>(co) * 5 + t) * c];
      for (int ci = 0; ci < c; ++ci) v += wk[ci] * taps[t][ci];
    }
    s2_[co] = v > 0 ? v : 0.0;
  }

  const size_t pos = static_cast<size_t>(y) * w_ + x;
  const size_t plane = static_cast<size_t>(h_) * w_;
  for (int co = 0; co < c; ++co) {
    double v = f1_base_[co * plane + pos];
    const double* wk = &f1s_[co * c];
    for (int ci = 0; ci < c; ++ci) v += wk[ci] * s2_[ci];
    f1_[co] = v > 0 ? v : 0.0;
  }
  for (int o = 0; o < kContextOutputs; ++o) {
    double v = f2b_[o];
    const double* wk = &f2w_[o * c];
    for (int ci = 0; ci < c; ++ci) v += wk[ci] * f1_[ci];
    raw_[o] = v;
  }
  return MapRaw(raw_);
}

Tensor LongTermContext(const Pyramid<Tensor>& symbols, SubbandId target,
                       const std::function<Tensor(int)>& ll_of_level) {
  const int levels = symbols.levels();
  const int j = target.level;
  if (j < 1 || j > levels) {
    Fail(ErrorCode::kInvalidArgument, "context target outside pyramid");
  }
  const Tensor& ref = j == levels ? symbols.ll : symbols.detail[j - 1][0];
  const Shape plane = {ref.dim(0), 1, ref.dim(2), ref.dim(3)};
  std::vector<Tensor> parts;
  if (target.type != SubbandType::kLL) {
    parts.push_back(j == levels ? symbols.ll : ll_of_level(j));
    for (int t = 1; t < static_cast<int>(target.type); ++t) {
      parts.push_back(symbols.detail[j - 1][t - 1]);
    }
  }
  while (parts.size() < kLongTermChannels) parts.push_back(Tensor::Zeros(plane));
  for (const Tensor& t : parts) {
    if (t.shape() != plane) {
      Fail(ErrorCode::kShapeMismatch, "context grid " + ShapeString(t.shape()) +
                                          " for target " + ShapeString(plane));
    }
  }
  return ConcatChannels(parts);
}

}  // namespace iwv3

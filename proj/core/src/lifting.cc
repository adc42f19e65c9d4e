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

#include "iwv3/lifting.h"

#include <cmath>
#include <string>

#include "iwv3/ops.h"

namespace iwv3 {
namespace {

// Floor division by 2^s for signed values.
inline int32_t FloorShift(int32_t v, int s) { return v >> s; }

void RequireEven(int width, int height) {
  if (width % 2 != 0 || height % 2 != 0 || width == 0 || height == 0) {
    Fail(ErrorCode::kInvalidArgument,
         "transform level needs even, non-zero dims; got " +
             std::to_string(width) + "x" + std::to_string(height));
  }
}

}  // namespace

void Cdf53Forward1d(std::span<const int32_t> xe, std::span<const int32_t> xo,
                    std::span<int32_t> l, std::span<int32_t> h) {
  const size_t m = xe.size();
  if (xo.size() != m || l.size() != m || h.size() != m || m == 0) {
    Fail(ErrorCode::kInvalidArgument, "5/3 lifting: length mismatch");
  }
  for (size_t n = 0; n < m; ++n) {
    const int32_t right = xe[n + 1 < m ? n + 1 : m - 1];
    h[n] = xo[n] - FloorShift(xe[n] + right, 1);
  }
  for (size_t n = 0; n < m; ++n) {
    const int32_t left = h[n > 0 ? n - 1 : 0];
    l[n] = xe[n] + FloorShift(left + h[n] + 2, 2);
  }
}

void Cdf53Inverse1d(std::span<const int32_t> l, std::span<const int32_t> h,
                    std::span<int32_t> xe, std::span<int32_t> xo) {
  const size_t m = l.size();
  if (h.size() != m || xe.size() != m || xo.size() != m || m == 0) {
    Fail(ErrorCode::kInvalidArgument, "5/3 lifting: length mismatch");
  }
  for (size_t n = 0; n < m; ++n) {
    const int32_t left = h[n > 0 ? n - 1 : 0];
    xe[n] = l[n] - FloorShift(left + h[n] + 2, 2);
  }
  for (size_t n = 0; n < m; ++n) {
    const int32_t right = xe[n + 1 < m ? n + 1 : m - 1];
    xo[n] = h[n] + FloorShift(xe[n] + right, 1);
  }
}

namespace {

// Applies 1D lifting to every row of `in`, writing lows and highs.
void Cdf53Rows(const Plane32& in, Plane32& low, Plane32& high) {
  const int half = in.width() / 2;
  std::vector<int32_t> xe(half), xo(half);
  for (int y = 0; y < in.height(); ++y) {
    const int32_t* row = in.Row(y);
    for (int i = 0; i < half; ++i) {
      xe[i] = row[2 * i];
      xo[i] = row[2 * i + 1];
    }
    Cdf53Forward1d(xe, xo, {low.Row(y), size_t(half)}, {high.Row(y), size_t(half)});
  }
}

void Cdf53Columns(const Plane32& in, Plane32& low, Plane32& high) {
  const int half = in.height() / 2;
  std::vector<int32_t> xe(half), xo(half), l(half), h(half);
  for (int x = 0; x < in.width(); ++x) {
    for (int i = 0; i < half; ++i) {
      xe[i] = in.at(x, 2 * i);
      xo[i] = in.at(x, 2 * i + 1);
    }
    Cdf53Forward1d(xe, xo, l, h);
    for (int i = 0; i < half; ++i) {
      low.at(x, i) = l[i];
      high.at(x, i) = h[i];
    }
  }
}

void Cdf53InverseRows(const Plane32& low, const Plane32& high, Plane32& out) {
  const int half = low.width();
  std::vector<int32_t> xe(half), xo(half);
  for (int y = 0; y < low.height(); ++y) {
    Cdf53Inverse1d({low.Row(y), size_t(half)}, {high.Row(y), size_t(half)}, xe, xo);
    int32_t* row = out.Row(y);
    for (int i = 0; i < half; ++i) {
      row[2 * i] = xe[i];
      row[2 * i + 1] = xo[i];
    }
  }
}

void Cdf53InverseColumns(const Plane32& low, const Plane32& high, Plane32& out) {
  const int half = low.height();
  std::vector<int32_t> xe(half), xo(half), l(half), h(half);
  for (int x = 0; x < low.width(); ++x) {
    for (int i = 0; i < half; ++i) {
      l[i] = low.at(x, i);
      h[i] = high.at(x, i);
    }
    Cdf53Inverse1d(l, h, xe, xo);
    for (int i = 0; i < half; ++i) {
      out.at(x, 2 * i) = xe[i];
      out.at(x, 2 * i + 1) = xo[i];
    }
  }
}

}  // namespace

std::array<Plane32, 4> Cdf53ForwardLevel(const Plane32& plane) {
  RequireEven(plane.width(), plane.height());
  const int hw = plane.width() / 2, hh = plane.height() / 2;
  Plane32 low(hw, plane.height()), high(hw, plane.height());
  Cdf53Rows(plane, low, high);
  std::array<Plane32, 4> out;
  for (auto& b : out) b = Plane32(hw, hh);
  Cdf53Columns(low, out[0], out[2]);   // LL, LH
  Cdf53Columns(high, out[1], out[3]);  // HL, HH
  return out;
}

Plane32 Cdf53InverseLevel(const std::array<Plane32, 4>& bands) {
  const int hw = bands[0].width(), hh = bands[0].height();
  for (const auto& b : bands) {
    if (b.width() != hw || b.height() != hh || hw == 0 || hh == 0) {
      Fail(ErrorCode::kInvalidArgument, "inconsistent subband geometry");
    }
  }
  Plane32 low(hw, 2 * hh), high(hw, 2 * hh);
  Cdf53InverseColumns(bands[0], bands[2], low);
  Cdf53InverseColumns(bands[1], bands[3], high);
  Plane32 out(2 * hw, 2 * hh);
  Cdf53InverseRows(low, high, out);
  return out;
}

Pyramid<Plane32> Cdf53Forward(const Plane32& plane, int levels) {
  if (levels < 1) Fail(ErrorCode::kInvalidArgument, "levels must be >= 1");
  const int block = 1 << levels;
  if (plane.width() % block != 0 || plane.height() % block != 0 || plane.empty()) {
    Fail(ErrorCode::kInvalidArgument,
         "plane dims not divisible by 2^" + std::to_string(levels));
  }
  Pyramid<Plane32> out;
  Plane32 current = plane;
  for (int j = 1; j <= levels; ++j) {
    auto bands = Cdf53ForwardLevel(current);
    out.detail.push_back({std::move(bands[1]), std::move(bands[2]),
                          std::move(bands[3])});
    current = std::move(bands[0]);
  }
  out.ll = std::move(current);
  return out;
}

Plane32 Cdf53Inverse(const Pyramid<Plane32>& pyramid) {
  if (pyramid.levels() < 1) Fail(ErrorCode::kInvalidArgument, "empty pyramid");
  Plane32 current = pyramid.ll;
  for (int j = pyramid.levels(); j >= 1; --j) {
    const auto& d = pyramid.detail[j - 1];
    current = Cdf53InverseLevel({current, d[0], d[1], d[2]});
  }
  return current;
}

LiftingBackend LiftingBackend::Cdf97() {
  return LiftingBackend(TransformKind::kCdf97, nullptr, 2);
}

LiftingBackend LiftingBackend::Learned(TransformKind kind,
                                       const ModelWeights& weights) {
  if (kind != TransformKind::kAdditive && kind != TransformKind::kAffine) {
    Fail(ErrorCode::kInvalidArgument,
         "learned lifting needs an additive or affine kind");
  }
  int steps = 0;
  while (weights.Contains("pu.p" + std::to_string(steps + 1) + ".c1.w")) {
    ++steps;
  }
  if (steps == 0) {
    Fail(ErrorCode::kWeightsMismatch, "weights hold no P/U nets");
  }
  return LiftingBackend(kind, &weights, steps);
}

namespace {

// a + c * (b + shifted(b))
Tensor Cdf97Step(const Tensor& a, const Tensor& b, double c, int offset) {
  return Add(a, Scale(Add(b, ShiftClamp(b, 3, offset)), c));
}

PuKind ToPuKind(TransformKind kind) {
  return kind == TransformKind::kAffine ? PuKind::kAffine : PuKind::kAdditive;
}

}  // namespace

std::pair<Tensor, Tensor> LiftingBackend::Forward1d(const Tensor& xe,
                                                    const Tensor& xo) const {
  if (xe.shape() != xo.shape()) {
    Fail(ErrorCode::kShapeMismatch, "lifting halves differ in shape");
  }
  if (kind_ == TransformKind::kCdf97) {
    Tensor h = Cdf97Step(xo, xe, kCdf97Alpha, 1);
    Tensor l = Cdf97Step(xe, h, kCdf97Beta, -1);
    h = Cdf97Step(h, l, kCdf97Gamma, 1);
    l = Cdf97Step(l, h, kCdf97Delta, -1);
    return {Scale(l, kCdf97Zeta), Scale(h, 1.0 / kCdf97Zeta)};
  }
  const PuKind pk = ToPuKind(kind_);
  Tensor l = xe, h = xo;
  for (int i = 1; i <= steps_; ++i) {
    const std::string id = std::to_string(i);
    PuOutput p = PuForward(pk, *weights_, "pu.p" + id, l);
    h = Sub(h, p.shift);
    if (p.scale) h = Mul(*p.scale, h);
    PuOutput u = PuForward(pk, *weights_, "pu.u" + id, h);
    l = Add(l, u.shift);
    if (u.scale) l = Mul(*u.scale, l);
  }
  return {l, h};
}

std::pair<Tensor, Tensor> LiftingBackend::Inverse1d(const Tensor& low,
                                                    const Tensor& high) const {
  if (low.shape() != high.shape()) {
    Fail(ErrorCode::kShapeMismatch, "lifting halves differ in shape");
  }
  if (kind_ == TransformKind::kCdf97) {
    Tensor l = Scale(low, 1.0 / kCdf97Zeta);
    Tensor h = Scale(high, kCdf97Zeta);
    l = Cdf97Step(l, h, -kCdf97Delta, -1);
    h = Cdf97Step(h, l, -kCdf97Gamma, 1);
    l = Cdf97Step(l, h, -kCdf97Beta, -1);
    h = Cdf97Step(h, l, -kCdf97Alpha, 1);
    return {l, h};
  }
  const PuKind pk = ToPuKind(kind_);
  Tensor l = low, h = high;
  for (int i = steps_; i >= 1; --i) {
    const std::string id = std::to_string(i);
    PuOutput u = PuForward(pk, *weights_, "pu.u" + id, h);
    if (u.scale) l = Div(l, *u.scale);
    l = Sub(l, u.shift);
    PuOutput p = PuForward(pk, *weights_, "pu.p" + id, l);
    if (p.scale) h = Div(h, *p.scale);
    h = Add(h, p.shift);
  }
  return {l, h};
}

std::array<Tensor, 4> LiftingBackend::ForwardLevel(const Tensor& x) const {
  if (x.rank() != 4) {
    Fail(ErrorCode::kShapeMismatch, "transform input must be (N,1,H,W)");
  }
  RequireEven(x.dim(3), x.dim(2));
  auto [low, high] = Forward1d(TakeParity(x, 3, 0), TakeParity(x, 3, 1));
  auto columns = [&](const Tensor& t) {
    const Tensor tt = TransposeHW(t);
    auto [l, h] = Forward1d(TakeParity(tt, 3, 0), TakeParity(tt, 3, 1));
    return std::pair{TransposeHW(l), TransposeHW(h)};
  };
  auto [ll, lh] = columns(low);
  auto [hl, hh] = columns(high);
  return {ll, hl, lh, hh};
}

Tensor LiftingBackend::InverseLevel(const std::array<Tensor, 4>& bands) const {
  for (const auto& b : bands) {
    if (b.shape() != bands[0].shape() || b.rank() != 4) {
      Fail(ErrorCode::kShapeMismatch, "inconsistent subband geometry");
    }
  }
  auto columns = [&](const Tensor& l, const Tensor& h) {
    auto [xe, xo] = Inverse1d(TransposeHW(l), TransposeHW(h));
    return TransposeHW(Interleave(xe, xo, 3));
  };
  const Tensor low = columns(bands[0], bands[2]);
  const Tensor high = columns(bands[1], bands[3]);
  auto [xe, xo] = Inverse1d(low, high);
  return Interleave(xe, xo, 3);
}

Pyramid<Tensor> LiftingBackend::Forward(const Tensor& x, int levels) const {
  if (levels < 1) Fail(ErrorCode::kInvalidArgument, "levels must be >= 1");
  if (x.rank() != 4) {
    Fail(ErrorCode::kShapeMismatch, "transform input must be (N,1,H,W)");
  }
  const int block = 1 << levels;
  if (x.dim(2) % block != 0 || x.dim(3) % block != 0) {
    Fail(ErrorCode::kInvalidArgument,
         "plane dims not divisible by 2^" + std::to_string(levels));
  }
  Pyramid<Tensor> out;
  Tensor current = x;
  for (int j = 1; j <= levels; ++j) {
    auto bands = ForwardLevel(current);
    out.detail.push_back({bands[1], bands[2], bands[3]});
    current = bands[0];
  }
  out.ll = current;
  return out;
}

Tensor LiftingBackend::Inverse(const Pyramid<Tensor>& pyramid) const {
  if (pyramid.levels() < 1) Fail(ErrorCode::kInvalidArgument, "empty pyramid");
  Tensor current = pyramid.ll;
  for (int j = pyramid.levels(); j >= 1; --j) {
    const auto& d = pyramid.detail[j - 1];
    current = InverseLevel({current, d[0], d[1], d[2]});
  }
  return current;
}

void AddLiftingWeights(ModelWeights& weights, TransformKind kind, int steps,
                       int channels, std::mt19937_64& rng, double stddev) {
  if (kind != TransformKind::kAdditive && kind != TransformKind::kAffine) {
    Fail(ErrorCode::kInvalidArgument, "only learned transforms have weights");
  }
  if (steps < 1) Fail(ErrorCode::kInvalidArgument, "lifting steps must be >= 1");
  const PuKind pk = ToPuKind(kind);
  const bool affine = kind == TransformKind::kAffine;
  const bool cdf97 = steps == 2;
  const double zeta_log = std::log(kCdf97Zeta);
  for (int i = 1; i <= steps; ++i) {
    PuInit p, u;
    if (cdf97 || i == 1) {
      // h = x_o - P(x_e) with P taps on [n, n+1]; U taps on [n-1, n].
      const double pc = -(i == 1 ? kCdf97Alpha : kCdf97Gamma);
      double uc = i == 1 ? kCdf97Beta : kCdf97Delta;
      if (i == 2 && affine) {
        p.log_scale = -zeta_log;
        u.log_scale = zeta_log;
        uc *= kCdf97Zeta;
      }
      p.taps[1] = p.taps[2] = pc;
      u.taps[0] = u.taps[1] = uc;
    }
    const std::string id = std::to_string(i);
    AddPuNet(weights, pk, "pu.p" + id, channels, p, rng, stddev);
    AddPuNet(weights, pk, "pu.u" + id, channels, u, rng, stddev);
  }
}

Tensor ToTensor(const PlaneF& plane) {
  return Tensor({1, 1, plane.height(), plane.width()}, plane.data());
}

Tensor ToTensor(const Plane32& plane) {
  std::vector<double> v(plane.data().begin(), plane.data().end());
  return Tensor({1, 1, plane.height(), plane.width()}, std::move(v));
}

PlaneF ToPlane(const Tensor& t, int index) {
  if (t.rank() != 4) Fail(ErrorCode::kShapeMismatch, "expected (N,C,H,W)");
  const int h = t.dim(2), w = t.dim(3);
  PlaneF out(w, h);
  const size_t plane = static_cast<size_t>(h) * w;
  std::copy_n(t.data() + plane * index, plane, out.data().begin());
  return out;
}

}  // namespace iwv3

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

#include "iwv3/ops.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "iwv3/error.h"

namespace iwv3 {
namespace {

using Storage = Tensor::Storage;
using Buffer = std::vector<double>;

Storage MakeStorage(Buffer values) {
  return std::make_shared<const Buffer>(std::move(values));
}

void RequireSameShape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    Fail(ErrorCode::kShapeMismatch, std::string(op) + ": shapes " +
                                        ShapeString(a.shape()) + " and " +
                                        ShapeString(b.shape()));
  }
}

void RequireRank4(const Tensor& x, const char* op) {
  if (x.rank() != 4) {
    Fail(ErrorCode::kShapeMismatch, std::string(op) + ": expected (N,C,H,W), got " +
                                        ShapeString(x.shape()));
  }
}

// Four partial sums keep the reduction order fixed while leaving room for
// instruction-level parallelism.
double Dot(const double* a, const double* b, int n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double SumOf(const double* a, size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i];
    s1 += a[i + 1];
    s2 += a[i + 2];
    s3 += a[i + 3];
  }
  for (; i < n; ++i) s0 += a[i];
  return (s0 + s1) + (s2 + s3);
}

// Elementwise unary op whose derivative is expressed through x and y.
template <typename F, typename D>
Tensor Unary(const Tensor& x, F f, D dydx) {
  const size_t n = x.size();
  Buffer out(n);
  const double* xv = x.data();
  for (size_t i = 0; i < n; ++i) out[i] = f(xv[i]);
  Storage ys = MakeStorage(std::move(out));
  Storage xs = x.storage();
  return RecordOp(x.shape(), ys, {&x},
                  [xs, ys, dydx](std::span<const double> g,
                                 std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    Buffer& gx = *gin[0];
                    for (size_t i = 0; i < g.size(); ++i) {
                      gx[i] += g[i] * dydx((*xs)[i], (*ys)[i]);
                    }
                  });
}

}  // namespace

double NormalCdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

Tensor Add(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "add");
  Buffer out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return RecordOp(a.shape(), MakeStorage(std::move(out)), {&a, &b},
                  [](std::span<const double> g, std::span<Buffer*> gin) {
                    for (Buffer* gb : gin) {
                      if (!gb) continue;
                      for (size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
                    }
                  });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "sub");
  Buffer out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return RecordOp(a.shape(), MakeStorage(std::move(out)), {&a, &b},
                  [](std::span<const double> g, std::span<Buffer*> gin) {
                    if (gin[0]) {
                      for (size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                    }
                    if (gin[1]) {
                      for (size_t i = 0; i < g.size(); ++i) (*gin[1])[i] -= g[i];
                    }
                  });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "mul");
  Buffer out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Storage as = a.storage(), bs = b.storage();
  return RecordOp(a.shape(), MakeStorage(std::move(out)), {&a, &b},
                  [as, bs](std::span<const double> g, std::span<Buffer*> gin) {
                    if (gin[0]) {
                      for (size_t i = 0; i < g.size(); ++i)
                        (*gin[0])[i] += g[i] * (*bs)[i];
                    }
                    if (gin[1]) {
                      for (size_t i = 0; i < g.size(); ++i)
                        (*gin[1])[i] += g[i] * (*as)[i];
                    }
                  });
}

Tensor Div(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "div");
  Buffer out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
  Storage as = a.storage(), bs = b.storage();
  return RecordOp(a.shape(), MakeStorage(std::move(out)), {&a, &b},
                  [as, bs](std::span<const double> g, std::span<Buffer*> gin) {
                    for (size_t i = 0; i < g.size(); ++i) {
                      const double inv = 1.0 / (*bs)[i];
                      if (gin[0]) (*gin[0])[i] += g[i] * inv;
                      if (gin[1]) (*gin[1])[i] -= g[i] * (*as)[i] * inv * inv;
                    }
                  });
}

Tensor Scale(const Tensor& x, double s) {
  Buffer out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
  return RecordOp(x.shape(), MakeStorage(std::move(out)), {&x},
                  [s](std::span<const double> g, std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    for (size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * s;
                  });
}

Tensor AddScalar(const Tensor& x, double s) {
  Buffer out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] + s;
  return RecordOp(x.shape(), MakeStorage(std::move(out)), {&x},
                  [](std::span<const double> g, std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    for (size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                  });
}

Tensor ScaleBy(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) {
    Fail(ErrorCode::kShapeMismatch,
         "scale-by-scalar: scale must have one element, got " +
             ShapeString(s.shape()));
  }
  const double sv = s[0];
  Buffer out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] * sv;
  Storage xs = x.storage();
  return RecordOp(x.shape(), MakeStorage(std::move(out)), {&x, &s},
                  [xs, sv](std::span<const double> g, std::span<Buffer*> gin) {
                    if (gin[0]) {
                      for (size_t i = 0; i < g.size(); ++i)
                        (*gin[0])[i] += g[i] * sv;
                    }
                    if (gin[1]) (*gin[1])[0] += Dot(g.data(), xs->data(),
                                                    static_cast<int>(g.size()));
                  });
}

Tensor Relu(const Tensor& x) {
  return Unary(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor Exp(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor Log(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor Tanh(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor Sqrt(const Tensor& x) {
  return Unary(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Tensor ClampMin(const Tensor& x, double lo) {
  return Unary(
      x, [lo](double v) { return v > lo ? v : lo; },
      [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

Tensor Floor(const Tensor& x) {
  Buffer out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::floor(x[i]);
  return Tensor(x.shape(), std::move(out));
}

Tensor Sum(const Tensor& x) {
  const double s = SumOf(x.data(), x.size());
  return RecordOp({}, MakeStorage({s}), {&x},
                  [](std::span<const double> g, std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    for (double& v : *gin[0]) v += g[0];
                  });
}

Tensor Mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.size());
  const double s = SumOf(x.data(), x.size()) * inv;
  return RecordOp({}, MakeStorage({s}), {&x},
                  [inv](std::span<const double> g, std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    for (double& v : *gin[0]) v += g[0] * inv;
                  });
}

namespace {

bool TapAllowed(ConvMask mask, int ky, int kx, int cy, int cx) {
  switch (mask) {
    case ConvMask::kNone:
      return true;
    case ConvMask::kCausalA:
      return ky < cy || (ky == cy && kx < cx);
    case ConvMask::kCausalB:
      return ky < cy || (ky == cy && kx <= cx);
  }
  return true;
}

}  // namespace

Tensor Conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              ConvMask mask) {
  RequireRank4(x, "conv2d");
  if (w.rank() != 4) {
    Fail(ErrorCode::kShapeMismatch,
         "conv2d: kernel must be (Co,Ci,kh,kw), got " + ShapeString(w.shape()));
  }
  const int n = x.dim(0), ci_count = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co_count = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != ci_count || kh % 2 == 0 || kw % 2 == 0) {
    Fail(ErrorCode::kShapeMismatch, "conv2d: kernel " + ShapeString(w.shape()) +
                                        " incompatible with input " +
                                        ShapeString(x.shape()));
  }
  if (b.size() != static_cast<size_t>(co_count)) {
    Fail(ErrorCode::kShapeMismatch,
         "conv2d: bias " + ShapeString(b.shape()) + " for " +
             std::to_string(co_count) + " output channels");
  }
  const int cy = kh / 2, cx = kw / 2;
  const size_t plane = static_cast<size_t>(h) * wd;
  const int taps = kh * kw;

  Buffer out(static_cast<size_t>(n) * co_count * plane);
  const double* xv = x.data();
  const double* wv = w.data();
  for (int ni = 0; ni < n; ++ni) {
    for (int co = 0; co < co_count; ++co) {
      double* __restrict o = out.data() + (static_cast<size_t>(ni) * co_count + co) * plane;
      std::fill(o, o + plane, b[co]);
      for (int ci = 0; ci < ci_count; ++ci) {
        const double* in = xv + (static_cast<size_t>(ni) * ci_count + ci) * plane;
        const double* k = wv + (static_cast<size_t>(co) * ci_count + ci) * taps;
        for (int ky = 0; ky < kh; ++ky) {
          const int dy = ky - cy;
          const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
          for (int kx = 0; kx < kw; ++kx) {
            if (!TapAllowed(mask, ky, kx, cy, cx)) continue;
            const double kv = k[ky * kw + kx];
            const int dx = kx - cx;
            const int x0 = std::max(0, -dx), x1 = std::min(wd, wd - dx);
            for (int yy = y0; yy < y1; ++yy) {
              double* __restrict orow = o + static_cast<size_t>(yy) * wd;
              const double* __restrict irow = in + static_cast<size_t>(yy + dy) * wd + dx;
              for (int xx = x0; xx < x1; ++xx) orow[xx] += kv * irow[xx];
            }
          }
        }
      }
    }
  }

  Storage xs = x.storage(), ws = w.storage();
  return RecordOp(
      {n, co_count, h, wd}, MakeStorage(std::move(out)), {&x, &w, &b},
      [=](std::span<const double> g, std::span<Buffer*> gin) {
        Buffer* gx = gin[0];
        Buffer* gw = gin[1];
        Buffer* gb = gin[2];
        for (int ni = 0; ni < n; ++ni) {
          for (int co = 0; co < co_count; ++co) {
            const double* go = g.data() + (static_cast<size_t>(ni) * co_count + co) * plane;
            if (gb) (*gb)[co] += SumOf(go, plane);
            for (int ci = 0; ci < ci_count; ++ci) {
              const size_t in_off = (static_cast<size_t>(ni) * ci_count + ci) * plane;
              const size_t k_off = (static_cast<size_t>(co) * ci_count + ci) * taps;
              const double* in = xs->data() + in_off;
              for (int ky = 0; ky < kh; ++ky) {
                const int dy = ky - cy;
                const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                for (int kx = 0; kx < kw; ++kx) {
                  if (!TapAllowed(mask, ky, kx, cy, cx)) continue;
                  const int dx = kx - cx;
                  const int x0 = std::max(0, -dx), x1 = std::min(wd, wd - dx);
                  const int len = x1 - x0;
                  if (gw) {
                    double acc = 0;
                    for (int yy = y0; yy < y1; ++yy) {
                      acc += Dot(go + static_cast<size_t>(yy) * wd + x0,
                                 in + static_cast<size_t>(yy + dy) * wd + x0 + dx, len);
                    }
                    (*gw)[k_off + ky * kw + kx] += acc;
                  }
                  if (gx) {
                    const double kv = (*ws)[k_off + ky * kw + kx];
                    double* gxp = gx->data() + in_off;
                    for (int yy = y0; yy < y1; ++yy) {
                      double* __restrict dst = gxp + static_cast<size_t>(yy + dy) * wd + dx;
                      const double* __restrict src = go + static_cast<size_t>(yy) * wd;
                      for (int xx = x0; xx < x1; ++xx) dst[xx] += kv * src[xx];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Tensor Reshape(const Tensor& x, Shape shape) {
  if (NumElements(shape) != x.size()) {
    Fail(ErrorCode::kShapeMismatch, "reshape " + ShapeString(x.shape()) +
                                        " to " + ShapeString(shape));
  }
  return RecordOp(std::move(shape), x.storage(), {&x},
                  [](std::span<const double> g, std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    for (size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                  });
}

Tensor SliceFlat(const Tensor& x, size_t offset, Shape shape) {
  const size_t count = NumElements(shape);
  if (offset + count > x.size()) {
    Fail(ErrorCode::kShapeMismatch, "slice past end of " + ShapeString(x.shape()));
  }
  Buffer out(x.data() + offset, x.data() + offset + count);
  return RecordOp(std::move(shape), MakeStorage(std::move(out)), {&x},
                  [offset](std::span<const double> g, std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    for (size_t i = 0; i < g.size(); ++i)
                      (*gin[0])[offset + i] += g[i];
                  });
}

Tensor SliceChannels(const Tensor& x, int start, int count) {
  RequireRank4(x, "slice_channels");
  const int n = x.dim(0), c = x.dim(1);
  if (start < 0 || count < 0 || start + count > c) {
    Fail(ErrorCode::kShapeMismatch, "slice_channels out of range");
  }
  const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
  Buffer out(static_cast<size_t>(n) * count * plane);
  for (int ni = 0; ni < n; ++ni) {
    std::copy_n(x.data() + (static_cast<size_t>(ni) * c + start) * plane,
                count * plane, out.data() + static_cast<size_t>(ni) * count * plane);
  }
  return RecordOp({n, count, x.dim(2), x.dim(3)}, MakeStorage(std::move(out)),
                  {&x},
                  [=](std::span<const double> g, std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    for (int ni = 0; ni < n; ++ni) {
                      const double* src = g.data() + static_cast<size_t>(ni) * count * plane;
                      double* dst = gin[0]->data() + (static_cast<size_t>(ni) * c + start) * plane;
                      for (size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
                    }
                  });
}

Tensor ConcatChannels(std::span<const Tensor> parts) {
  if (parts.empty()) Fail(ErrorCode::kShapeMismatch, "concat of nothing");
  for (const Tensor& p : parts) RequireRank4(p, "concat_channels");
  const int n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  int total = 0;
  std::vector<int> offsets;
  for (const Tensor& p : parts) {
    if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w) {
      Fail(ErrorCode::kShapeMismatch, "concat_channels: " + ShapeString(p.shape()) +
                                          " vs " + ShapeString(parts[0].shape()));
    }
    offsets.push_back(total);
    total += p.dim(1);
  }
  const size_t plane = static_cast<size_t>(h) * w;
  Buffer out(static_cast<size_t>(n) * total * plane);
  std::vector<int> counts;
  for (size_t k = 0; k < parts.size(); ++k) {
    const int c = parts[k].dim(1);
    counts.push_back(c);
    for (int ni = 0; ni < n; ++ni) {
      std::copy_n(parts[k].data() + static_cast<size_t>(ni) * c * plane, c * plane,
                  out.data() + (static_cast<size_t>(ni) * total + offsets[k]) * plane);
    }
  }
  auto fn = [=](std::span<const double> g, std::span<Buffer*> gin) {
    for (size_t k = 0; k < gin.size(); ++k) {
      if (!gin[k]) continue;
      const int c = counts[k];
      for (int ni = 0; ni < n; ++ni) {
        const double* src = g.data() + (static_cast<size_t>(ni) * total + offsets[k]) * plane;
        double* dst = gin[k]->data() + static_cast<size_t>(ni) * c * plane;
        for (size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
      }
    }
  };
  Shape shape{n, total, h, w};
  Storage storage = MakeStorage(std::move(out));
  // RecordOp takes a fixed initializer list; bridge the variadic case.
  switch (parts.size()) {
    case 1:
      return RecordOp(shape, storage, {&parts[0]}, fn);
    case 2:
      return RecordOp(shape, storage, {&parts[0], &parts[1]}, fn);
    case 3:
      return RecordOp(shape, storage, {&parts[0], &parts[1], &parts[2]}, fn);
    case 4:
      return RecordOp(shape, storage,
                      {&parts[0], &parts[1], &parts[2], &parts[3]}, fn);
    default:
      Fail(ErrorCode::kShapeMismatch, "concat_channels supports up to 4 parts");
  }
}

Tensor ScaleChannels(const Tensor& x, const Tensor& s) {
  RequireRank4(x, "scale_channels");
  const int n = x.dim(0), c = x.dim(1);
  if (s.size() != static_cast<size_t>(c)) {
    Fail(ErrorCode::kShapeMismatch, "scale_channels: " + ShapeString(s.shape()) +
                                        " for " + std::to_string(c) + " channels");
  }
  const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
  Buffer out(x.size());
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const size_t off = (static_cast<size_t>(ni) * c + ci) * plane;
      for (size_t i = 0; i < plane; ++i) out[off + i] = x[off + i] * s[ci];
    }
  }
  Storage xs = x.storage(), ss = s.storage();
  return RecordOp(x.shape(), MakeStorage(std::move(out)), {&x, &s},
                  [=](std::span<const double> g, std::span<Buffer*> gin) {
                    for (int ni = 0; ni < n; ++ni) {
                      for (int ci = 0; ci < c; ++ci) {
                        const size_t off = (static_cast<size_t>(ni) * c + ci) * plane;
                        if (gin[0]) {
                          for (size_t i = 0; i < plane; ++i)
                            (*gin[0])[off + i] += g[off + i] * (*ss)[ci];
                        }
                        if (gin[1]) {
                          (*gin[1])[ci] += Dot(g.data() + off, xs->data() + off,
                                               static_cast<int>(plane));
                        }
                      }
                    }
                  });
}

Tensor SoftmaxChannels(const Tensor& x) {
  RequireRank4(x, "softmax_channels");
  const int n = x.dim(0), c = x.dim(1);
  const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
  Buffer out(x.size());
  for (int ni = 0; ni < n; ++ni) {
    const size_t base = static_cast<size_t>(ni) * c * plane;
    for (size_t p = 0; p < plane; ++p) {
      double m = x[base + p];
      for (int ci = 1; ci < c; ++ci) m = std::max(m, x[base + ci * plane + p]);
      double z = 0;
      for (int ci = 0; ci < c; ++ci) {
        const double e = std::exp(x[base + ci * plane + p] - m);
        out[base + ci * plane + p] = e;
        z += e;
      }
      for (int ci = 0; ci < c; ++ci) out[base + ci * plane + p] /= z;
    }
  }
  Storage ys = MakeStorage(std::move(out));
  return RecordOp(x.shape(), ys, {&x},
                  [=](std::span<const double> g, std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    const Buffer& y = *ys;
                    for (int ni = 0; ni < n; ++ni) {
                      const size_t base = static_cast<size_t>(ni) * c * plane;
                      for (size_t p = 0; p < plane; ++p) {
                        double dot = 0;
                        for (int ci = 0; ci < c; ++ci) {
                          const size_t i = base + ci * plane + p;
                          dot += g[i] * y[i];
                        }
                        for (int ci = 0; ci < c; ++ci) {
                          const size_t i = base + ci * plane + p;
                          (*gin[0])[i] += y[i] * (g[i] - dot);
                        }
                      }
                    }
                  });
}

namespace {

// Channel-wise log-sum-exp at every (n, position).
std::vector<double> ChannelLse(const Tensor& x) {
  const int n = x.dim(0), c = x.dim(1);
  const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
  std::vector<double> out(static_cast<size_t>(n) * plane);
  for (int ni = 0; ni < n; ++ni) {
    const size_t base = static_cast<size_t>(ni) * c * plane;
    for (size_t p = 0; p < plane; ++p) {
      double m = x[base + p];
      for (int ci = 1; ci < c; ++ci) m = std::max(m, x[base + ci * plane + p]);
      double z = 0;
      for (int ci = 0; ci < c; ++ci) z += std::exp(x[base + ci * plane + p] - m);
      out[ni * plane + p] = m + std::log(z);
    }
  }
  return out;
}

}  // namespace

Tensor LogSoftmaxChannels(const Tensor& x) {
  RequireRank4(x, "log_softmax_channels");
  const int n = x.dim(0), c = x.dim(1);
  const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
  const std::vector<double> lse = ChannelLse(x);
  Buffer out(x.size());
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      for (size_t p = 0; p < plane; ++p) {
        const size_t i = (static_cast<size_t>(ni) * c + ci) * plane + p;
        out[i] = x[i] - lse[ni * plane + p];
      }
  Storage ys = MakeStorage(std::move(out));
  return RecordOp(x.shape(), ys, {&x},
                  [=](std::span<const double> g, std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    const Buffer& y = *ys;
                    for (int ni = 0; ni < n; ++ni) {
                      const size_t base = static_cast<size_t>(ni) * c * plane;
                      for (size_t p = 0; p < plane; ++p) {
                        double gs = 0;
                        for (int ci = 0; ci < c; ++ci) gs += g[base + ci * plane + p];
                        for (int ci = 0; ci < c; ++ci) {
                          const size_t i = base + ci * plane + p;
                          (*gin[0])[i] += g[i] - std::exp(y[i]) * gs;
                        }
                      }
                    }
                  });
}

Tensor LogSumExpChannels(const Tensor& x) {
  RequireRank4(x, "log_sum_exp_channels");
  const int n = x.dim(0), c = x.dim(1);
  const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
  Storage ys = MakeStorage(ChannelLse(x));
  Storage xs = x.storage();
  return RecordOp({n, 1, x.dim(2), x.dim(3)}, ys, {&x},
                  [=](std::span<const double> g, std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    for (int ni = 0; ni < n; ++ni) {
                      const size_t base = static_cast<size_t>(ni) * c * plane;
                      for (size_t p = 0; p < plane; ++p) {
                        const double go = g[ni * plane + p];
                        const double lse = (*ys)[ni * plane + p];
                        for (int ci = 0; ci < c; ++ci) {
                          const size_t i = base + ci * plane + p;
                          (*gin[0])[i] += go * std::exp((*xs)[i] - lse);
                        }
                      }
                    }
                  });
}

namespace {

void RequireAxis(int axis) {
  if (axis != 2 && axis != 3) {
    Fail(ErrorCode::kShapeMismatch, "axis must be 2 (rows) or 3 (columns)");
  }
}

// Visits (outer row, column) pairs of an (N,C,H,W) tensor viewed as
// `rows` rows of `cols` samples, where axis 3 maps directly and axis 2 is
// handled by the callers through row strides.
struct Geometry {
  int outer;  // N * C
  int h, w;
};

Geometry GeometryOf(const Tensor& x) {
  return {x.dim(0) * x.dim(1), x.dim(2), x.dim(3)};
}

}  // namespace

Tensor TakeParity(const Tensor& x, int axis, int parity) {
  RequireRank4(x, "take_parity");
  RequireAxis(axis);
  const Geometry geo = GeometryOf(x);
  const int len = axis == 3 ? geo.w : geo.h;
  if (len % 2 != 0) {
    Fail(ErrorCode::kShapeMismatch, "split of odd length " + std::to_string(len));
  }
  Shape shape = x.shape();
  shape[axis] /= 2;
  const int oh = shape[2], ow = shape[3];
  Buffer out(NumElements(shape));
  // Maps output flat index to input flat index.
  auto src_index = [=](int o, int yy, int xx) {
    const int sy = axis == 2 ? 2 * yy + parity : yy;
    const int sx = axis == 3 ? 2 * xx + parity : xx;
    return (static_cast<size_t>(o) * geo.h + sy) * geo.w + sx;
  };
  size_t k = 0;
  for (int o = 0; o < geo.outer; ++o)
    for (int yy = 0; yy < oh; ++yy)
      for (int xx = 0; xx < ow; ++xx) out[k++] = x[src_index(o, yy, xx)];
  return RecordOp(shape, MakeStorage(std::move(out)), {&x},
                  [=](std::span<const double> g, std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    size_t k = 0;
                    for (int o = 0; o < geo.outer; ++o)
                      for (int yy = 0; yy < oh; ++yy)
                        for (int xx = 0; xx < ow; ++xx)
                          (*gin[0])[src_index(o, yy, xx)] += g[k++];
                  });
}

Tensor Interleave(const Tensor& even, const Tensor& odd, int axis) {
  RequireRank4(even, "interleave");
  RequireSameShape(even, odd, "interleave");
  RequireAxis(axis);
  Shape shape = even.shape();
  shape[axis] *= 2;
  const Geometry half = GeometryOf(even);
  const int oh = shape[2], ow = shape[3];
  Buffer out(NumElements(shape));
  auto dst_index = [=](int o, int yy, int xx, int parity) {
    const int dy = axis == 2 ? 2 * yy + parity : yy;
    const int dx = axis == 3 ? 2 * xx + parity : xx;
    return (static_cast<size_t>(o) * oh + dy) * ow + dx;
  };
  size_t k = 0;
  for (int o = 0; o < half.outer; ++o)
    for (int yy = 0; yy < half.h; ++yy)
      for (int xx = 0; xx < half.w; ++xx, ++k) {
        out[dst_index(o, yy, xx, 0)] = even[k];
        out[dst_index(o, yy, xx, 1)] = odd[k];
      }
  return RecordOp(shape, MakeStorage(std::move(out)), {&even, &odd},
                  [=](std::span<const double> g, std::span<Buffer*> gin) {
                    size_t k = 0;
                    for (int o = 0; o < half.outer; ++o)
                      for (int yy = 0; yy < half.h; ++yy)
                        for (int xx = 0; xx < half.w; ++xx, ++k) {
                          if (gin[0]) (*gin[0])[k] += g[dst_index(o, yy, xx, 0)];
                          if (gin[1]) (*gin[1])[k] += g[dst_index(o, yy, xx, 1)];
                        }
                  });
}

Tensor TransposeHW(const Tensor& x) {
  RequireRank4(x, "transpose");
  const Geometry geo = GeometryOf(x);
  Buffer out(x.size());
  const size_t plane = static_cast<size_t>(geo.h) * geo.w;
  for (int o = 0; o < geo.outer; ++o) {
    const double* src = x.data() + o * plane;
    double* dst = out.data() + o * plane;
    for (int yy = 0; yy < geo.h; ++yy)
      for (int xx = 0; xx < geo.w; ++xx)
        dst[static_cast<size_t>(xx) * geo.h + yy] = src[static_cast<size_t>(yy) * geo.w + xx];
  }
  return RecordOp({x.dim(0), x.dim(1), geo.w, geo.h}, MakeStorage(std::move(out)),
                  {&x},
                  [=](std::span<const double> g, std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    for (int o = 0; o < geo.outer; ++o) {
                      const double* src = g.data() + o * plane;
                      double* dst = gin[0]->data() + o * plane;
                      for (int yy = 0; yy < geo.h; ++yy)
                        for (int xx = 0; xx < geo.w; ++xx)
                          dst[static_cast<size_t>(yy) * geo.w + xx] +=
                              src[static_cast<size_t>(xx) * geo.h + yy];
                    }
                  });
}

Tensor ShiftClamp(const Tensor& x, int axis, int offset) {
  RequireRank4(x, "shift_clamp");
  RequireAxis(axis);
  const Geometry geo = GeometryOf(x);
  auto src_index = [=](int o, int yy, int xx) {
    const int sy = axis == 2 ? std::clamp(yy + offset, 0, geo.h - 1) : yy;
    const int sx = axis == 3 ? std::clamp(xx + offset, 0, geo.w - 1) : xx;
    return (static_cast<size_t>(o) * geo.h + sy) * geo.w + sx;
  };
  Buffer out(x.size());
  size_t k = 0;
  for (int o = 0; o < geo.outer; ++o)
    for (int yy = 0; yy < geo.h; ++yy)
      for (int xx = 0; xx < geo.w; ++xx) out[k++] = x[src_index(o, yy, xx)];
  return RecordOp(x.shape(), MakeStorage(std::move(out)), {&x},
                  [=](std::span<const double> g, std::span<Buffer*> gin) {
                    if (!gin[0]) return;
                    size_t k = 0;
                    for (int o = 0; o < geo.outer; ++o)
                      for (int yy = 0; yy < geo.h; ++yy)
                        for (int xx = 0; xx < geo.w; ++xx)
                          (*gin[0])[src_index(o, yy, xx)] += g[k++];
                  });
}

Tensor GaussianBinMass(const Tensor& v, const Tensor& mean,
                       const Tensor& sigma) {
  RequireSameShape(v, mean, "gaussian_bin_mass");
  RequireSameShape(v, sigma, "gaussian_bin_mass");
  const size_t n = v.size();
  Buffer out(n);
  for (size_t i = 0; i < n; ++i) {
    const double hi = (v[i] + 0.5 - mean[i]) / sigma[i];
    const double lo = (v[i] - 0.5 - mean[i]) / sigma[i];
    // Evaluate on the lower tail to avoid cancellation near 1.
    out[i] = lo > 0 ? NormalCdf(-lo) - NormalCdf(-hi)
                    : NormalCdf(hi) - NormalCdf(lo);
  }
  Storage vs = v.storage(), ms = mean.storage(), ss = sigma.storage();
  return RecordOp(v.shape(), MakeStorage(std::move(out)), {&v, &mean, &sigma},
                  [=](std::span<const double> g, std::span<Buffer*> gin) {
                    const double k = 1.0 / std::sqrt(2.0 * M_PI);
                    for (size_t i = 0; i < g.size(); ++i) {
                      const double s = (*ss)[i];
                      const double hi = ((*vs)[i] + 0.5 - (*ms)[i]) / s;
                      const double lo = ((*vs)[i] - 0.5 - (*ms)[i]) / s;
                      const double phi_hi = k * std::exp(-0.5 * hi * hi);
                      const double phi_lo = k * std::exp(-0.5 * lo * lo);
                      const double dv = (phi_hi - phi_lo) / s;
                      if (gin[0]) (*gin[0])[i] += g[i] * dv;
                      if (gin[1]) (*gin[1])[i] -= g[i] * dv;
                      if (gin[2]) {
                        (*gin[2])[i] -= g[i] * (phi_hi * hi - phi_lo * lo) / s;
                      }
                    }
                  });
}

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double LogPhi(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

// log(1 - Phi(z)) for z >= 0; asymptotic series once erfc underflows.
double LogUpperTail(double z) {
  if (z < 30) return std::log(0.5 * std::erfc(z / std::sqrt(2.0)));
  const double r = 1.0 / (z * z);
  return LogPhi(z) - std::log(z) +
         std::log(1 - r + 3 * r * r - 15 * r * r * r);
}

// log(Phi(b) - Phi(a)) for a < b.
double LogIntervalMass(double a, double b) {
  if (a > 0) {
    const double la = LogUpperTail(a), lb = LogUpperTail(b);
    return la + std::log1p(-std::exp(lb - la));
  }
  if (b < 0) return LogIntervalMass(-b, -a);
  return std::log(std::max(0.0, 1.0 - 0.5 * std::erfc(b / std::sqrt(2.0)) -
                                    0.5 * std::erfc(-a / std::sqrt(2.0))));
}

}  // namespace

Tensor LogGaussianBinMass(const Tensor& v, const Tensor& mean,
                          const Tensor& sigma) {
  RequireSameShape(v, mean, "log_gaussian_bin_mass");
  RequireSameShape(v, sigma, "log_gaussian_bin_mass");
  const size_t n = v.size();
  Buffer out(n);
  for (size_t i = 0; i < n; ++i) {
    const double a = (v[i] - 0.5 - mean[i]) / sigma[i];
    const double b = (v[i] + 0.5 - mean[i]) / sigma[i];
    out[i] = LogIntervalMass(a, b);
  }
  Storage vs = v.storage(), ms = mean.storage(), ss = sigma.storage();
  Storage ys = MakeStorage(std::move(out));
  return RecordOp(v.shape(), ys, {&v, &mean, &sigma},
                  [=](std::span<const double> g, std::span<Buffer*> gin) {
                    for (size_t i = 0; i < g.size(); ++i) {
                      const double s = (*ss)[i];
                      const double a = ((*vs)[i] - 0.5 - (*ms)[i]) / s;
                      const double b = ((*vs)[i] + 0.5 - (*ms)[i]) / s;
                      const double lm = (*ys)[i];
                      const double ra = std::exp(LogPhi(a) - lm);
                      const double rb = std::exp(LogPhi(b) - lm);
                      const double dv = (rb - ra) / s;
                      if (gin[0]) (*gin[0])[i] += g[i] * dv;
                      if (gin[1]) (*gin[1])[i] -= g[i] * dv;
                      if (gin[2]) (*gin[2])[i] -= g[i] * (rb * b - ra * a) / s;
                    }
                  });
}

Tensor Apply(OpKind kind, std::span<const Tensor> in) {
  auto need = [&](size_t count, const char* name) {
    if (in.size() != count) {
      Fail(ErrorCode::kShapeMismatch, std::string(name) + " takes " +
                                          std::to_string(count) + " inputs");
    }
  };
  switch (kind) {
    case OpKind::kConv2d:
      need(3, "conv2d");
      return Conv2d(in[0], in[1], in[2]);
    case OpKind::kRelu:
      need(1, "relu");
      return Relu(in[0]);
    case OpKind::kAdd:
      need(2, "add");
      return Add(in[0], in[1]);
    case OpKind::kSub:
      need(2, "sub");
      return Sub(in[0], in[1]);
    case OpKind::kMul:
      need(2, "mul");
      return Mul(in[0], in[1]);
    case OpKind::kExp:
      need(1, "exp");
      return Exp(in[0]);
    case OpKind::kTanh:
      need(1, "tanh");
      return Tanh(in[0]);
    case OpKind::kScaleByScalar:
      need(2, "scale-by-scalar");
      return ScaleBy(in[0], in[1]);
    case OpKind::kSum:
      need(1, "sum");
      return Sum(in[0]);
    case OpKind::kMean:
      need(1, "mean");
      return Mean(in[0]);
  }
  Fail(ErrorCode::kInvalidArgument,
       "unknown op kind " + std::to_string(static_cast<int>(kind)));
}

}  // namespace iwv3

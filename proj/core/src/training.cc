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

#include "iwv3/training.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <utility>

#include "iwv3/codec.h"
#include "iwv3/context_model.h"
#include "iwv3/error.h"
#include "iwv3/ops.h"
#include "iwv3/quant.h"

namespace iwv3 {
namespace {

// ---------------------------------------------------------------------------
// Config text

std::string_view Trim(std::string_view s) {
  const char* ws = " \t\r";
  const size_t b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

template <typename T>
T ParseNumber(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    Fail(ErrorCode::kInvalidArgument,
         "config: bad value '" + std::string(value) + "' for " + std::string(key));
  }
  return out;
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Tensor helpers

// Scales every (b, c) plane of a (3B,1,h,w) tensor by s[c].
Tensor PerChannel(const Tensor& x, const Tensor& s) {
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  return Reshape(ScaleChannels(Reshape(x, {n / 3, 3, h, w}), s), {n, 1, h, w});
}

Tensor Concat3(const Tensor& a, const Tensor& b, const Tensor& c) {
  const Tensor parts[] = {a, b, c};
  return ConcatChannels(parts);
}

// YCoCg-R without the floors, on (B,3,H,W).
Tensor RgbToYCoCg(const Tensor& rgb) {
  const Tensor r = SliceChannels(rgb, 0, 1);
  const Tensor g = SliceChannels(rgb, 1, 1);
  const Tensor b = SliceChannels(rgb, 2, 1);
  const Tensor co = Sub(r, b);
  const Tensor t = Add(b, Scale(co, 0.5));
  const Tensor cg = Sub(g, t);
  return Concat3(Add(t, Scale(cg, 0.5)), co, cg);
}

Tensor YCoCgToRgb(const Tensor& ycc) {
  const Tensor y = SliceChannels(ycc, 0, 1);
  const Tensor co = SliceChannels(ycc, 1, 1);
  const Tensor cg = SliceChannels(ycc, 2, 1);
  const Tensor t = Sub(y, Scale(cg, 0.5));
  const Tensor b = Sub(t, Scale(co, 0.5));
  return Concat3(Add(b, co), Add(cg, t), b);
}

// (n,1,h,w) from n equally sized planes.
template <typename P>
Tensor Stack(const std::vector<const P*>& planes) {
  const int w = planes[0]->width(), h = planes[0]->height();
  std::vector<double> v;
  v.reserve(planes.size() * planes[0]->size());
  for (const P* p : planes) v.insert(v.end(), p->data().begin(), p->data().end());
  return Tensor({static_cast<int>(planes.size()), 1, h, w}, std::move(v));
}

ModelWeights Detached(const ModelWeights& weights) {
  ModelWeights out;
  for (const auto& e : weights.entries()) out.Add(e.name, e.value.Detach());
  return out;
}

// Source index into a w x h image of every sample of its padded extension.
std::vector<int32_t> PadIndex(int w, int h, int levels) {
  Plane32 idx(w, h);
  for (int i = 0; i < w * h; ++i) idx.data()[i] = i;
  return PadSymmetric(idx, levels).data();
}

struct PlanarBatch {
  Tensor ycocg;  // (3B,1,Hp,Wp) YCoCg-R
  Tensor rgb;    // (B,3,Hp,Wp) reference
  Tensor mask;   // (B,3,Hp,Wp), 1 inside the image
  int batch = 0;
  double pixels = 0;  // True pixels per image.
};

PlanarBatch MakeBatch(std::span<const RgbImage> images, int levels) {
  if (images.empty()) Fail(ErrorCode::kInvalidArgument, "empty batch");
  const int w = images[0].width(), h = images[0].height();
  const int pw = PaddedSize(w, levels), ph = PaddedSize(h, levels);
  const size_t plane = static_cast<size_t>(pw) * ph;
  const auto src = PadIndex(w, h, levels);
  const int n = static_cast<int>(images.size());
  std::vector<double> ycc, rgb(n * 3 * plane), mask(n * 3 * plane);
  ycc.reserve(n * 3 * plane);
  for (int b = 0; b < n; ++b) {
    const RgbImage& im = images[b];
    if (im.width() != w || im.height() != h) {
      Fail(ErrorCode::kInvalidArgument, "batch images differ in size");
    }
    const ImagePlanes planes = ToPlanes(im, levels);
    for (const auto& p : planes.planes) ycc.insert(ycc.end(), p.data().begin(), p.data().end());
    for (int c = 0; c < 3; ++c) {
      double* r = rgb.data() + (b * 3 + c) * plane;
      double* m = mask.data() + (b * 3 + c) * plane;
      for (int y = 0; y < ph; ++y) {
        for (int x = 0; x < pw; ++x) {
          const size_t i = static_cast<size_t>(y) * pw + x;
          const int s = src[i];
          r[i] = im.pixel(s % w, s / w)[c];
          m[i] = x < w && y < h ? 1.0 : 0.0;
        }
      }
    }
  }
  PlanarBatch out;
  out.ycocg = Tensor({3 * n, 1, ph, pw}, std::move(ycc));
  out.rgb = Tensor({n, 3, ph, pw}, std::move(rgb));
  out.mask = Tensor({n, 3, ph, pw}, std::move(mask));
  out.batch = n;
  out.pixels = static_cast<double>(w) * h;
  return out;
}

LossReport ReportOf(const Tensor& bits, const Tensor& l_obj, const Tensor& total,
                    double pixels) {
  LossReport r;
  r.bpp = bits.item() / pixels;
  r.l_obj = l_obj.item();
  r.total = total.item();
  return r;
}

bool Finite(const LossReport& r) {
  return std::isfinite(r.bpp) && std::isfinite(r.l_obj) && std::isfinite(r.total);
}

void RequireFinite(const LossReport& r, const std::string& where) {
  if (!Finite(r)) {
    Fail(ErrorCode::kNonFinite, where + ": non-finite loss (bpp=" +
                                    FormatDouble(r.bpp) + " l_obj=" +
                                    FormatDouble(r.l_obj) + ")");
  }
}

// Codec-equivalent forward from YCoCg planes.
ForwardResult ForwardPlanes(const ModelWeights& weights, const Tensor& ycocg,
                            const Tensor& ref, const Tensor& mask, int batch,
                            double pixels, const ForwardSpec& spec,
                            std::mt19937_64& rng) {
  const bool soft = spec.quant == QuantMode::kSoft;
  if (soft && (spec.alpha < kAlphaMin || spec.alpha > kAlphaMax)) {
    Fail(ErrorCode::kInvalidArgument,
         "alpha " + FormatDouble(spec.alpha) + " outside [2, 12]");
  }
  const int levels = LevelsOfLogQsteps(weights);
  const ModelWeights fixed = Detached(weights);
  const bool cdf97 = spec.transform == TransformKind::kCdf97;
  const LiftingBackend backend =
      cdf97 ? LiftingBackend::Cdf97() : LiftingBackend::Learned(spec.transform, weights);
  const LiftingBackend fixed_backend =
      cdf97 ? LiftingBackend::Cdf97() : LiftingBackend::Learned(spec.transform, fixed);

  const Pyramid<Tensor> y = backend.Forward(ycocg, levels);
  const auto order = CodingOrder(levels);
  const int nsb = static_cast<int>(order.size());
  const Tensor& log_q = weights.Get(kLogQstepName);
  std::optional<QuantGrid> grid;
  if (!soft) grid = QuantGridFromWeights(fixed, spec.qstep_offset);

  Pyramid<Tensor> sym, deq;
  sym.detail.resize(levels);
  deq.detail.resize(levels);
  std::vector<Tensor> qsteps(nsb);  // (3) per subband, detached
  for (int k = 0; k < nsb; ++k) {
    const SubbandId id = order[k];
    const Tensor& band = y.at(id);
    if (soft) {
      const Tensor q = AddScalar(Exp(SliceFlat(log_q, 3 * k, {3})), spec.qstep_offset);
      const Tensor z = PerChannel(band, Div(Tensor::Full({3}, 1.0), q));
      const Tensor s = SoftToHard(z, spec.alpha, UniformNoise(z.shape(), rng));
      sym.at(id) = s;
      deq.at(id) = PerChannel(s, q);
      qsteps[k] = q.Detach();
    } else {
      const size_t n = static_cast<size_t>(band.dim(2)) * band.dim(3);
      std::vector<double> s(band.size()), d(band.size());
      for (size_t i = 0; i < band.size(); ++i) {
        const double q = grid->at(static_cast<int>(i / n) % 3, k);
        s[i] = Quantize(band[i], q);
        d[i] = s[i] * q;
      }
      sym.at(id) = Tensor(band.shape(), std::move(s));
      deq.at(id) = Tensor(band.shape(), std::move(d));
      qsteps[k] = Tensor({3}, {grid->at(0, k), grid->at(1, k), grid->at(2, k)});
    }
  }

  // Long-term contexts see detached symbols, as the decoder would.
  Pyramid<Tensor> seen, seen_deq;
  seen.ll = sym.ll.Detach();
  seen_deq.ll = deq.ll.Detach();
  for (int j = 0; j < levels; ++j) {
    std::array<Tensor, 3> s, d;
    for (int t = 0; t < 3; ++t) {
      s[t] = sym.detail[j][t].Detach();
      d[t] = deq.detail[j][t].Detach();
    }
    seen.detail.push_back(s);
    seen_deq.detail.push_back(d);
  }
  auto qstep_of = [&](SubbandId id) -> const Tensor& {
    for (int k = 0; k < nsb; ++k) {
      if (order[k] == id) return qsteps[k];
    }
    Fail(ErrorCode::kState, "subband outside coding order");
  };
  std::vector<std::optional<Tensor>> rec_ll(levels + 1);
  std::function<Tensor(int)> recon_ll = [&](int j) -> Tensor {
    if (j == levels) return seen_deq.ll;
    if (!rec_ll[j]) {
      const auto& d = seen_deq.detail[j];
      rec_ll[j] = fixed_backend.InverseLevel({recon_ll(j + 1), d[0], d[1], d[2]});
    }
    return *rec_ll[j];
  };
  auto ll_context = [&](int j) -> Tensor {
    const Tensor inv = Div(Tensor::Full({3}, 1.0), qstep_of({j, SubbandType::kHL}));
    return PerChannel(recon_ll(j), inv);
  };

  Tensor bits = Tensor::Scalar(0);
  for (int k = 0; k < nsb; ++k) {
    const SubbandId id = order[k];
    const Tensor& s = sym.at(id);
    const Tensor raw = ContextRaw(weights, id.type, s, LongTermContext(seen, id, ll_context));
    bits = Add(bits, RateBits(raw, s));
  }

  Tensor x = backend.Inverse(deq);
  if (HasDequantNet(weights)) x = DequantForward(weights, x);
  const int ph = x.dim(2), pw = x.dim(3);
  const Tensor rgb = YCoCgToRgb(Reshape(x, {batch, 3, ph, pw}));
  const Tensor diff = Mul(Sub(rgb, ref), mask);
  const Tensor sq = Mul(diff, diff);
  const size_t per_image = static_cast<size_t>(3) * ph * pw;
  Tensor l_obj = Tensor::Scalar(0);
  for (int b = 0; b < batch; ++b) {
    const Tensor norm = Sqrt(Sum(SliceFlat(sq, b * per_image, {static_cast<int>(per_image)})));
    l_obj = Add(l_obj, norm);
  }
  l_obj = Scale(l_obj, 1.0 / (batch * std::sqrt(pixels)));

  ForwardResult out;
  out.bits = bits;
  out.l_obj = l_obj;
  out.total = Add(Scale(bits, 1.0 / (batch * pixels)), Scale(l_obj, spec.lambda));
  out.report = ReportOf(bits, l_obj, out.total, batch * pixels);
  return out;
}

// Copy of `weights` in which the entries of the listed groups are watched.
ModelWeights Watch(Tape& tape, const ModelWeights& weights,
                   std::initializer_list<const char*> groups) {
  ModelWeights out;
  for (const auto& e : weights.entries()) {
    const std::string g = ParamGroup(e.name);
    const bool train = std::any_of(groups.begin(), groups.end(),
                                   [&](const char* x) { return g == x; });
    out.Add(e.name, train ? tape.Watch(e.name, e.value) : e.value);
  }
  return out;
}

template <typename Fn>
LossReport OptimizeStep(ModelWeights& weights, Optimizer& optimizer,
                        std::initializer_list<const char*> groups,
                        const std::string& where, Fn&& forward) {
  Tape tape;
  const ModelWeights live = Watch(tape, weights, groups);
  const ForwardResult r = forward(live);
  RequireFinite(r.report, where);
  optimizer.Update(weights, Backward(tape, r.total));
  return r.report;
}

std::vector<RgbImage> BatchAt(const std::vector<RgbImage>& crops, int index, int size) {
  std::vector<RgbImage> out;
  for (int j = 0; j < size; ++j) {
    out.push_back(crops[(static_cast<size_t>(index) * size + j) % crops.size()]);
  }
  return out;
}

std::mt19937_64 SeededRng(uint64_t seed, uint64_t stream) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(stream)};
  return std::mt19937_64(seq);
}

double AlphaAt(const TrainConfig& config, int step, int steps) {
  const double t = (AnnealAlpha(step, std::max(1, steps - 1)) - kAlphaMin) /
                   (kAlphaMax - kAlphaMin);
  return config.alpha_min + (config.alpha_max - config.alpha_min) * t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TrainConfig ParseTrainConfig(std::string_view text) {
  TrainConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = line;
    if (const size_t hash = s.find('#'); hash != std::string_view::npos) {
      s = s.substr(0, hash);
    }
    s = Trim(s);
    if (s.empty()) continue;
    const size_t eq = s.find('=');
    if (eq == std::string_view::npos) {
      Fail(ErrorCode::kInvalidArgument,
           "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string_view key = Trim(s.substr(0, eq));
    const std::string_view v = Trim(s.substr(eq + 1));
    auto d = [&] { return ParseNumber<double>(key, v); };
    auto i = [&] { return ParseNumber<int>(key, v); };
    if (key == "mode") c.mode = ParseMode(std::string(v));
    else if (key == "lambda") c.lambda = d();
    else if (key == "levels") c.levels = i();
    else if (key == "lifting_steps") c.lifting_steps = i();
    else if (key == "pu_channels") c.pu_channels = i();
    else if (key == "ctx_channels") c.ctx_channels = i();
    else if (key == "dq_groups") c.dequant.groups = i();
    else if (key == "dq_blocks") c.dequant.blocks = i();
    else if (key == "dq_channels") c.dequant.channels = i();
    else if (key == "init_qstep") c.init_qstep = d();
    else if (key == "init_stddev") c.init_stddev = d();
    else if (key == "crop") c.crop = i();
    else if (key == "crops") c.crops = i();
    else if (key == "batch") c.batch = i();
    else if (key == "stage1_steps") c.stage1_steps = i();
    else if (key == "stage2_steps") c.stage2_steps = i();
    else if (key == "stage3_steps") c.stage3_steps = i();
    else if (key == "lr_pu") c.lr_pu = d();
    else if (key == "lr_quant") c.lr_quant = d();
    else if (key == "lr_ctx") c.lr_ctx = d();
    else if (key == "lr_dq") c.lr_dq = d();
    else if (key == "momentum") c.momentum = d();
    else if (key == "clip_norm") c.clip_norm = d();
    else if (key == "alpha_min") c.alpha_min = d();
    else if (key == "alpha_max") c.alpha_max = d();
    else if (key == "offset_fraction") c.offset_fraction = d();
    else if (key == "seed") c.seed = ParseNumber<uint64_t>(key, v);
    else {
      Fail(ErrorCode::kInvalidArgument, "config: unknown key " + std::string(key));
    }
  }
  ValidateTrainConfig(c);
  return c;
}

std::string FormatTrainConfig(const TrainConfig& c) {
  std::ostringstream os;
  os << "mode = " << ModeName(c.mode) << '\n'
     << "lambda = " << FormatDouble(c.lambda) << '\n'
     << "levels = " << c.levels << '\n'
     << "lifting_steps = " << c.lifting_steps << '\n'
     << "pu_channels = " << c.pu_channels << '\n'
     << "ctx_channels = " << c.ctx_channels << '\n'
     << "dq_groups = " << c.dequant.groups << '\n'
     << "dq_blocks = " << c.dequant.blocks << '\n'
     << "dq_channels = " << c.dequant.channels << '\n'
     << "init_qstep = " << FormatDouble(c.init_qstep) << '\n'
     << "init_stddev = " << FormatDouble(c.init_stddev) << '\n'
     << "crop = " << c.crop << '\n'
     << "crops = " << c.crops << '\n'
     << "batch = " << c.batch << '\n'
     << "stage1_steps = " << c.stage1_steps << '\n'
     << "stage2_steps = " << c.stage2_steps << '\n'
     << "stage3_steps = " << c.stage3_steps << '\n'
     << "lr_pu = " << FormatDouble(c.lr_pu) << '\n'
     << "lr_quant = " << FormatDouble(c.lr_quant) << '\n'
     << "lr_ctx = " << FormatDouble(c.lr_ctx) << '\n'
     << "lr_dq = " << FormatDouble(c.lr_dq) << '\n'
     << "momentum = " << FormatDouble(c.momentum) << '\n'
     << "clip_norm = " << FormatDouble(c.clip_norm) << '\n'
     << "alpha_min = " << FormatDouble(c.alpha_min) << '\n'
     << "alpha_max = " << FormatDouble(c.alpha_max) << '\n'
     << "offset_fraction = " << FormatDouble(c.offset_fraction) << '\n'
     << "seed = " << c.seed << '\n';
  return os.str();
}

void ValidateTrainConfig(const TrainConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) Fail(ErrorCode::kInvalidArgument, std::string("config: ") + what);
  };
  const bool lossless = c.mode == CodecMode::kLossless;
  require(lossless || c.lambda > 0, "lambda must be > 0");
  require(c.levels >= 1 && c.levels <= kMaxLevels, "levels must be in [1, 8]");
  require(c.lifting_steps >= 1, "lifting_steps must be >= 1");
  require(c.pu_channels >= 2, "pu_channels must be >= 2");
  require(c.ctx_channels >= 1, "ctx_channels must be >= 1");
  require(c.dequant.groups >= 0 && c.dequant.blocks >= 0 && c.dequant.channels >= 1,
          "bad post filter size");
  require(c.init_qstep > 0, "init_qstep must be > 0");
  require(c.init_stddev >= 0, "init_stddev must be >= 0");
  require(c.crop >= 1 && c.crop % (1 << c.levels) == 0,
          "crop must be a positive multiple of 2^levels");
  require(c.crops >= 1 && c.batch >= 1, "crops and batch must be >= 1");
  require(c.stage1_steps >= 1 && c.stage2_steps >= 1 && c.stage3_steps >= 1,
          "stage step counts must be >= 1");
  require(c.lr_pu >= 0 && c.lr_quant >= 0 && c.lr_ctx >= 0 && c.lr_dq >= 0,
          "learning rates must be >= 0");
  require(c.momentum >= 0 && c.momentum < 1, "momentum must be in [0, 1)");
  require(c.clip_norm >= 0, "clip_norm must be >= 0");
  require(c.alpha_min >= kAlphaMin && c.alpha_max <= kAlphaMax &&
              c.alpha_min <= c.alpha_max,
          "alpha bounds must satisfy 2 <= alpha_min <= alpha_max <= 12");
  require(c.offset_fraction >= 0 && c.offset_fraction < 1,
          "offset_fraction must be in [0, 1)");
}

std::optional<uint64_t> SeedFromEnvironment() {
  const char* v = std::getenv("IWV3_SEED");
  if (!v || !*v) return std::nullopt;
  return ParseNumber<uint64_t>("IWV3_SEED", v);
}

// ---------------------------------------------------------------------------
// Loss

LossReport LossRd(const PlaneF& original, const PlaneF& reconstructed,
                  double rate_bits, double lambda, DistortionScale scale) {
  if (original.width() != reconstructed.width() ||
      original.height() != reconstructed.height() || original.empty()) {
    Fail(ErrorCode::kInvalidArgument, "loss over planes of different size");
  }
  if (!(rate_bits >= 0) || !(lambda >= 0)) {
    Fail(ErrorCode::kInvalidArgument, "rate and lambda must be >= 0");
  }
  double sq = 0;
  for (size_t i = 0; i < original.size(); ++i) {
    const double d = original.data()[i] - reconstructed.data()[i];
    sq += d * d;
  }
  const double pixels = static_cast<double>(original.size());
  LossReport r;
  r.bpp = rate_bits / pixels;
  r.l_obj = std::sqrt(sq);
  if (scale == DistortionScale::kPerPixel) r.l_obj /= std::sqrt(pixels);
  r.total = r.bpp + lambda * r.l_obj;
  return r;
}

LossReport LossRd(const RgbImage& original, const RgbImage& reconstructed,
                  double rate_bits, double lambda, DistortionScale scale) {
  if (original.width() != reconstructed.width() ||
      original.height() != reconstructed.height()) {
    Fail(ErrorCode::kInvalidArgument, "loss over images of different size");
  }
  if (!(rate_bits >= 0) || !(lambda >= 0)) {
    Fail(ErrorCode::kInvalidArgument, "rate and lambda must be >= 0");
  }
  double sq = 0;
  for (size_t i = 0; i < original.pixels().size(); ++i) {
    const double d = static_cast<double>(original.pixels()[i]) - reconstructed.pixels()[i];
    sq += d * d;
  }
  const double pixels = static_cast<double>(original.width()) * original.height();
  LossReport r;
  r.bpp = rate_bits / pixels;
  r.l_obj = std::sqrt(sq);
  if (scale == DistortionScale::kPerPixel) r.l_obj /= std::sqrt(pixels);
  r.total = r.bpp + lambda * r.l_obj;
  return r;
}

// ---------------------------------------------------------------------------
// Data

std::vector<RgbImage> LoadImageDir(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    Fail(ErrorCode::kInvalidArgument, "not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) Fail(ErrorCode::kInvalidArgument, "no .ppm images in " + dir.string());
  std::vector<RgbImage> images;
  for (const auto& f : files) images.push_back(ReadPpmFile(f));
  return images;
}

std::vector<RgbImage> ExtractCrops(std::span<const RgbImage> images, int count,
                                   int size, std::mt19937_64& rng) {
  if (count < 1 || size < 1) Fail(ErrorCode::kInvalidArgument, "bad crop request");
  std::vector<const RgbImage*> usable;
  for (const auto& im : images) {
    if (im.width() >= size && im.height() >= size) usable.push_back(&im);
  }
  if (usable.empty()) {
    Fail(ErrorCode::kInvalidArgument,
         "no image is large enough for a " + std::to_string(size) + "px crop");
  }
  std::vector<RgbImage> out;
  for (int i = 0; i < count; ++i) {
    const RgbImage& im = *usable[i % usable.size()];
    const int x0 = std::uniform_int_distribution<int>(0, im.width() - size)(rng);
    const int y0 = std::uniform_int_distribution<int>(0, im.height() - size)(rng);
    RgbImage crop(size, size);
    for (int y = 0; y < size; ++y) {
      std::copy_n(im.pixel(x0, y0 + y), 3 * size, crop.pixel(0, y));
    }
    out.push_back(std::move(crop));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model

ModelWeights InitialWeights(const TrainConfig& config) {
  ValidateTrainConfig(config);
  std::mt19937_64 rng = SeededRng(config.seed, 0);
  ModelWeights w;
  if (config.mode == CodecMode::kLossless) {
    AddContextWeights(w, config.ctx_channels, rng, config.init_stddev);
    return w;
  }
  AddLiftingWeights(w, TransformOf(config.mode), config.lifting_steps,
                    config.pu_channels, rng, config.init_stddev);
  AddLogQsteps(w, config.levels, config.init_qstep);
  AddContextWeights(w, config.ctx_channels, rng, config.init_stddev);
  if (config.dequant.groups > 0 || config.dequant.blocks > 0) {
    AddDequantWeights(w, config.dequant, rng, config.init_stddev);
  }
  w.Add(kLambdaName, Tensor::Scalar(config.lambda));
  return w;
}

double LambdaOf(const ModelWeights& weights) {
  if (!weights.Contains(kLambdaName)) {
    Fail(ErrorCode::kWeightsMismatch, "weights carry no lambda");
  }
  return weights.Get(kLambdaName).item();
}

CodecMode ModelMode(const ModelWeights& weights) {
  if (!weights.Contains("pu.p1.c1.w")) return CodecMode::kLossless;
  return weights.Contains("pu.p1.shift.w") ? CodecMode::kAffine : CodecMode::kAdditive;
}

std::string ParamGroup(const std::string& name) {
  return name.substr(0, name.find('.'));
}

// ---------------------------------------------------------------------------
// Forward passes

ForwardResult RdForward(const ModelWeights& weights, std::span<const RgbImage> batch,
                        const ForwardSpec& spec, std::mt19937_64& rng) {
  const PlanarBatch b = MakeBatch(batch, LevelsOfLogQsteps(weights));
  return ForwardPlanes(weights, b.ycocg, b.rgb, b.mask, b.batch, b.pixels, spec, rng);
}

ForwardResult LosslessForward(const ModelWeights& weights,
                              std::span<const RgbImage> batch, int levels) {
  if (batch.empty()) Fail(ErrorCode::kInvalidArgument, "empty batch");
  std::vector<Pyramid<Plane32>> pyr;
  for (const RgbImage& im : batch) {
    if (im.width() != batch[0].width() || im.height() != batch[0].height()) {
      Fail(ErrorCode::kInvalidArgument, "batch images differ in size");
    }
    const ImagePlanes planes = ToPlanes(im, levels);
    for (const auto& p : planes.planes) {
      Plane32 p32(p.width(), p.height());
      std::copy(p.data().begin(), p.data().end(), p32.data().begin());
      pyr.push_back(Cdf53Forward(p32, levels));
    }
  }
  const auto order = CodingOrder(levels);
  auto stack = [&](SubbandId id) {
    std::vector<const Plane32*> planes;
    for (const auto& p : pyr) planes.push_back(&p.at(id));
    return Stack(planes);
  };
  Pyramid<Tensor> sym;
  sym.detail.resize(levels);
  for (const SubbandId id : order) sym.at(id) = stack(id);

  std::vector<std::vector<Plane32>> ll(levels + 1);
  std::function<const Plane32&(int, size_t)> int_ll = [&](int j, size_t n) -> const Plane32& {
    if (j == levels) return pyr[n].ll;
    if (ll[j].empty()) {
      for (size_t m = 0; m < pyr.size(); ++m) {
        const auto& d = pyr[m].detail[j];
        ll[j].push_back(Cdf53InverseLevel({int_ll(j + 1, m), d[0], d[1], d[2]}));
      }
    }
    return ll[j][n];
  };
  auto ll_context = [&](int j) {
    std::vector<const Plane32*> planes;
    for (size_t n = 0; n < pyr.size(); ++n) planes.push_back(&int_ll(j, n));
    return Stack(planes);
  };

  Tensor bits = Tensor::Scalar(0);
  for (const SubbandId id : order) {
    const Tensor& s = sym.at(id);
    bits = Add(bits, RateBits(ContextRaw(weights, id.type, s,
                                         LongTermContext(sym, id, ll_context)),
                              s));
  }
  const double pixels =
      static_cast<double>(batch.size()) * batch[0].width() * batch[0].height();
  ForwardResult out;
  out.bits = bits;
  out.l_obj = Tensor::Scalar(0);
  out.total = Scale(bits, 1.0 / pixels);
  out.report = ReportOf(bits, out.l_obj, out.total, pixels);
  return out;
}

// ---------------------------------------------------------------------------
// Optimization

double Optimizer::LearningRate(const std::string& name) const {
  const std::string g = ParamGroup(name);
  if (g == "pu") return config_.lr_pu;
  if (g == "quant") return config_.lr_quant;
  if (g == "ctx") return config_.lr_ctx;
  if (g == "dq") return config_.lr_dq;
  return 0;
}

void Optimizer::Update(ModelWeights& weights, const Gradients& grads) {
  double sq = 0;
  for (const auto& [name, g] : grads) {
    for (double v : g.values()) sq += v * v;
  }
  if (!std::isfinite(sq)) Fail(ErrorCode::kNonFinite, "non-finite gradient");
  const double norm = std::sqrt(sq);
  const double factor =
      config_.clip_norm > 0 && norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;
  for (const auto& [name, g] : grads) {
    const double lr = LearningRate(name);
    if (lr == 0) continue;
    const Tensor& w = weights.Get(name, g.shape());
    std::vector<double>& vel = velocity_[name];
    if (vel.empty()) vel.assign(g.size(), 0.0);
    std::vector<double> v(w.values().begin(), w.values().end());
    for (size_t i = 0; i < v.size(); ++i) {
      vel[i] = config_.momentum * vel[i] + factor * g[i];
      v[i] -= lr * vel[i];
    }
    weights.Set(name, Tensor(w.shape(), std::move(v)));
  }
}

std::string FormatStepLog(const StepLog& log) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d\t%s\t%.6f\t%.6f\t%.6f", log.step,
                log.alpha > 0 ? FormatDouble(log.alpha).c_str() : "inf",
                log.loss.bpp, log.loss.l_obj, log.loss.total);
  return buf;
}

LossReport PretrainStep(std::span<const RgbImage> batch, ModelWeights& weights,
                        Optimizer& optimizer, const TrainConfig& config) {
  ForwardSpec spec;
  spec.transform = TransformKind::kCdf97;
  spec.lambda = config.lambda;
  std::mt19937_64 unused;
  return OptimizeStep(weights, optimizer, {"ctx", "dq"}, "stage 1",
                      [&](const ModelWeights& w) {
                        return RdForward(w, batch, spec, unused);
                      });
}

LossReport SoftStep(std::span<const RgbImage> batch, ModelWeights& weights,
                    Optimizer& optimizer, const TrainConfig& config,
                    double alpha, std::mt19937_64& rng) {
  ForwardSpec spec;
  spec.transform = TransformOf(ModelMode(weights));
  spec.quant = QuantMode::kSoft;
  spec.alpha = alpha;
  spec.lambda = config.lambda;
  return OptimizeStep(weights, optimizer, {"pu", "quant", "ctx", "dq"}, "stage 2",
                      [&](const ModelWeights& w) {
                        return RdForward(w, batch, spec, rng);
                      });
}

LossReport HardFinetuneStep(std::span<const RgbImage> batch,
                            ModelWeights& weights, Optimizer& optimizer,
                            const TrainConfig& config, double offset_min,
                            double offset_max, std::mt19937_64& rng) {
  if (offset_min > offset_max) {
    Fail(ErrorCode::kInvalidArgument, "empty qstep offset range");
  }
  ForwardSpec spec;
  spec.transform = TransformOf(ModelMode(weights));
  spec.lambda = config.lambda;
  spec.qstep_offset = offset_min;
  if (offset_max > offset_min) {
    spec.qstep_offset = std::uniform_real_distribution<double>(offset_min, offset_max)(rng);
  }
  return OptimizeStep(weights, optimizer, {"ctx", "dq"}, "stage 3",
                      [&](const ModelWeights& w) {
                        return RdForward(w, batch, spec, rng);
                      });
}

LossReport LosslessStep(std::span<const RgbImage> batch, ModelWeights& weights,
                        Optimizer& optimizer, const TrainConfig& config) {
  return OptimizeStep(weights, optimizer, {"ctx"}, "lossless",
                      [&](const ModelWeights& w) {
                        return LosslessForward(w, batch, config.levels);
                      });
}

std::pair<double, double> OffsetRange(const ModelWeights& weights,
                                      const TrainConfig& config) {
  const Tensor& t = weights.Get(kLogQstepName);
  double min_q = std::exp(t[0]);
  for (double v : t.values()) min_q = std::min(min_q, std::exp(v));
  const double r = config.offset_fraction * min_q;
  return {-r, r};
}

LossReport EvaluateRd(const ModelWeights& weights, std::span<const RgbImage> images,
                      double lambda, double qstep_offset, bool cdf97) {
  if (images.empty()) Fail(ErrorCode::kInvalidArgument, "nothing to evaluate");
  ForwardSpec spec;
  spec.transform = cdf97 ? TransformKind::kCdf97 : TransformOf(ModelMode(weights));
  spec.lambda = lambda;
  spec.qstep_offset = qstep_offset;
  std::mt19937_64 unused;
  LossReport sum;
  for (const RgbImage& im : images) {
    const LossReport r = RdForward(weights, {&im, 1}, spec, unused).report;
    sum.bpp += r.bpp;
    sum.l_obj += r.l_obj;
    sum.total += r.total;
  }
  const double n = static_cast<double>(images.size());
  return {sum.bpp / n, sum.l_obj / n, sum.total / n};
}

TrainResult Train(const TrainConfig& config, std::span<const RgbImage> images,
                  const std::function<void(const StepLog&)>& log) {
  ValidateTrainConfig(config);
  std::mt19937_64 data_rng = SeededRng(config.seed, 1);
  std::mt19937_64 noise_rng = SeededRng(config.seed, 2);
  const std::vector<RgbImage> crops =
      ExtractCrops(images, config.crops, config.crop, data_rng);

  TrainResult out;
  out.weights = InitialWeights(config);
  ModelWeights& w = out.weights;
  int global_step = 0;
  auto emit = [&](int stage, double alpha, const LossReport& r) {
    if (log) log({stage, global_step, alpha, r});
    ++global_step;
  };

  if (config.mode == CodecMode::kLossless) {
    out.initial = LosslessForward(w, crops, config.levels).report;
    Optimizer opt(config);
    for (int s = 0; s < config.stage1_steps; ++s) {
      emit(1, 0, LosslessStep(BatchAt(crops, s, config.batch), w, opt, config));
    }
    out.after_stage.push_back(LosslessForward(w, crops, config.levels).report);
    out.stage_weights.push_back(w);
    return out;
  }

  out.initial = EvaluateRd(w, crops, config.lambda);
  {
    Optimizer opt(config);
    for (int s = 0; s < config.stage1_steps; ++s) {
      emit(1, 0, PretrainStep(BatchAt(crops, s, config.batch), w, opt, config));
    }
    out.after_stage.push_back(EvaluateRd(w, crops, config.lambda));
    out.stage_weights.push_back(w);
  }
  {
    Optimizer opt(config);
    for (int s = 0; s < config.stage2_steps; ++s) {
      const double alpha = AlphaAt(config, s, config.stage2_steps);
      emit(2, alpha, SoftStep(BatchAt(crops, s, config.batch), w, opt, config,
                              alpha, noise_rng));
    }
    out.after_stage.push_back(EvaluateRd(w, crops, config.lambda));
    out.stage_weights.push_back(w);
  }
  {
    Optimizer opt(config);
    const auto [lo, hi] = OffsetRange(w, config);
    for (int s = 0; s < config.stage3_steps; ++s) {
      emit(3, 0, HardFinetuneStep(BatchAt(crops, s, config.batch), w, opt, config,
                                  lo, hi, noise_rng));
    }
    out.after_stage.push_back(EvaluateRd(w, crops, config.lambda));
    out.stage_weights.push_back(w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Online optimization

LossReport CodecRdLoss(const RgbImage& image, const RgbImage& reference,
                       const ModelWeights& weights, double qstep_offset) {
  EncodeOptions opt;
  opt.mode = ModelMode(weights);
  if (opt.mode == CodecMode::kLossless) {
    Fail(ErrorCode::kWeightsMismatch, "rate-distortion loss needs a lossy model");
  }
  opt.qstep_offset = qstep_offset;
  const EncodedImage enc = EncodeImage(image, weights, opt);
  const DecodedImage dec = DecodeImage(enc.bytes, weights);
  const double pixels = static_cast<double>(image.width()) * image.height();
  return LossRd(reference, dec.image, enc.bpp * pixels, LambdaOf(weights));
}

RgbImage OnlineOptimize(const RgbImage& image, const ModelWeights& weights,
                        const OnlineOptions& options, OnlineReport* report) {
  if (!(options.lr >= 0) || options.iters < 0) {
    Fail(ErrorCode::kInvalidArgument, "lr and iters must be >= 0");
  }
  OnlineReport rep;
  rep.before = CodecRdLoss(image, image, weights, options.qstep_offset);
  if (options.lr == 0 || options.iters == 0) {
    rep.after = rep.before;
    if (report) *report = rep;
    return image;
  }

  const ModelWeights fw = weights.RoundedToFloat();
  const int levels = LevelsOfLogQsteps(fw);
  const int w = image.width(), h = image.height();
  const int pw = PaddedSize(w, levels), ph = PaddedSize(h, levels);
  const size_t plane = static_cast<size_t>(pw) * ph;
  const std::vector<int32_t> src = PadIndex(w, h, levels);
  const PlanarBatch ref = MakeBatch({&image, 1}, levels);

  ForwardSpec spec;
  spec.transform = TransformOf(ModelMode(fw));
  spec.quant = QuantMode::kSoft;
  spec.alpha = kAlphaMax;
  spec.qstep_offset = options.qstep_offset;
  spec.lambda = LambdaOf(fw);
  std::mt19937_64 rng(options.seed);

  const size_t n = static_cast<size_t>(w) * h;
  std::vector<double> cur(3 * n);
  for (size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) cur[c * n + i] = image.pixels()[3 * i + c];
  }
  for (int it = 0; it < options.iters; ++it) {
    std::vector<double> padded(3 * plane);
    for (int c = 0; c < 3; ++c) {
      for (size_t p = 0; p < plane; ++p) padded[c * plane + p] = cur[c * n + src[p]];
    }
    Tape tape;
    const Tensor x = tape.Watch("x", Tensor({1, 3, ph, pw}, std::move(padded)));
    const Tensor ycc = Reshape(RgbToYCoCg(x), {3, 1, ph, pw});
    const ForwardResult r =
        ForwardPlanes(fw, ycc, ref.rgb, ref.mask, 1, ref.pixels, spec, rng);
    RequireFinite(r.report, "online optimization");
    const Gradients g = Backward(tape, Scale(r.total, ref.pixels));
    const Tensor& gx = g.at("x");
    std::vector<double> step(3 * n, 0.0);
    for (int c = 0; c < 3; ++c) {
      for (size_t p = 0; p < plane; ++p) step[c * n + src[p]] += gx[c * plane + p];
    }
    for (size_t i = 0; i < cur.size(); ++i) {
      if (!std::isfinite(step[i])) {
        Fail(ErrorCode::kNonFinite, "online optimization: non-finite gradient");
      }
      cur[i] -= options.lr * step[i];
    }
  }

  RgbImage candidate(w, h);
  for (size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      candidate.pixels()[3 * i + c] =
          static_cast<uint8_t>(std::clamp(std::round(cur[c * n + i]), 0.0, 255.0));
    }
  }
  rep.after = CodecRdLoss(candidate, image, weights, options.qstep_offset);
  rep.accepted = rep.after.total <= rep.before.total;
  if (report) *report = rep;
  return rep.accepted ? candidate : image;
}

}  // namespace iwv3

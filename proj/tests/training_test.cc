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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "iwv3/codec.h"
#include "iwv3/error.h"
#include "iwv3/quant.h"
#include "iwv3/training.h"
#include "test_util.h"

namespace iwv3 {
namespace {

TrainConfig TinyConfig(CodecMode mode = CodecMode::kAffine) {
  TrainConfig c;
  c.mode = mode;
  c.levels = 2;
  c.pu_channels = 4;
  c.ctx_channels = 4;
  c.dequant = {1, 1, 4};
  c.crop = 16;
  c.crops = 4;
  c.batch = 2;
  c.stage1_steps = c.stage2_steps = c.stage3_steps = 2;
  return c;
}

std::vector<RgbImage> Crops(int n, int size, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<RgbImage> out;
  for (int i = 0; i < n; ++i) out.push_back(testing::SmoothImage(size, size, rng));
  return out;
}

bool SameGroupValues(const ModelWeights& a, const ModelWeights& b, const std::string& group) {
  for (const auto& e : a.entries()) {
    if (ParamGroup(e.name) != group) continue;
    const Tensor& o = b.Get(e.name);
    for (size_t i = 0; i < o.size(); ++i) {
      if (o[i] != e.value[i]) return false;
    }
  }
  return true;
}

TEST(LossTest, FrobeniusExample) {
  PlaneF orig(2, 2), rec(2, 2);
  orig.data() = {3, 4, 0, 0};
  const LossReport raw = LossRd(orig, rec, 8, 1, DistortionScale::kRaw);
  EXPECT_DOUBLE_EQ(raw.l_obj, 5);
  EXPECT_DOUBLE_EQ(raw.bpp, 2);
  EXPECT_DOUBLE_EQ(raw.total, 7);
  const LossReport pp = LossRd(orig, rec, 8, 1);
  EXPECT_DOUBLE_EQ(pp.l_obj, 2.5);
  EXPECT_DOUBLE_EQ(pp.total, 4.5);
  EXPECT_THROW(LossRd(orig, PlaneF(1, 2), 8, 1), Error);
  EXPECT_THROW(LossRd(orig, rec, -1, 1), Error);
}

TEST(LossTest, RgbOverAllComponents) {
  RgbImage a(2, 1), b(2, 1);
  a.pixels() = {3, 0, 0, 0, 4, 0};
  const LossReport r = LossRd(a, b, 4, 0.5);
  EXPECT_DOUBLE_EQ(r.bpp, 2);
  EXPECT_DOUBLE_EQ(r.l_obj, 5 / std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(r.total, 2 + 0.5 * 5 / std::sqrt(2.0));
}

TEST(ConfigTest, FormatParseRoundTrip) {
  TrainConfig c = TinyConfig(CodecMode::kAdditive);
  c.lambda = 0.0123;
  c.seed = 77;
  c.dequant = {3, 1, 6};
  const TrainConfig back = ParseTrainConfig(FormatTrainConfig(c));
  EXPECT_EQ(FormatTrainConfig(back), FormatTrainConfig(c));
  EXPECT_EQ(back.mode, CodecMode::kAdditive);
  EXPECT_EQ(back.dequant.groups, 3);
}

TEST(ConfigTest, CommentsAndBlanks) {
  const TrainConfig c = ParseTrainConfig("# tiny\n\nlambda = 0.5  # trade\n  seed=9\n");
  EXPECT_EQ(c.lambda, 0.5);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.levels, TrainConfig().levels);
}

TEST(ConfigTest, Rejections) {
  for (const char* text : {"bogus = 1", "lambda = abc", "levels = 0", "levels = 9",
                           "crop = 20", "momentum = 1", "alpha_max = 13",
                           "mode = jpeg", "lambda", "stage2_steps = 0"}) {
    try {
      ParseTrainConfig(text);
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument) << text;
    }
  }
}

TEST(ConfigTest, SeedFromEnvironment) {
  unsetenv("IWV3_SEED");
  EXPECT_FALSE(SeedFromEnvironment().has_value());
  setenv("IWV3_SEED", "1234", 1);
  EXPECT_EQ(SeedFromEnvironment(), 1234u);
  setenv("IWV3_SEED", "12x", 1);
  EXPECT_THROW(SeedFromEnvironment(), Error);
  unsetenv("IWV3_SEED");
}

TEST(DataTest, CropsCycleOverLargeImages) {
  std::mt19937_64 rng(1);
  std::vector<RgbImage> images = {testing::RandomImage(8, 8, rng),
                                  testing::RandomImage(40, 30, rng)};
  const std::vector<RgbImage> crops = ExtractCrops(images, 3, 16, rng);
  ASSERT_EQ(crops.size(), 3u);
  EXPECT_EQ(crops[0].width(), 16);
  EXPECT_THROW(ExtractCrops(images, 1, 64, rng), Error);
}

TEST(DataTest, LoadImageDir) {
  const std::vector<RgbImage> imgs = LoadImageDir(testing::DataPath("train"));
  EXPECT_EQ(imgs.size(), 3u);
  EXPECT_THROW(LoadImageDir(testing::DataPath("missing_dir")), Error);
}

TEST(ModelTest, InitialWeightsLayout) {
  const ModelWeights w = InitialWeights(TinyConfig());
  EXPECT_EQ(ModelMode(w), CodecMode::kAffine);
  EXPECT_EQ(LambdaOf(w), TinyConfig().lambda);
  EXPECT_EQ(LevelsOfLogQsteps(w), 2);
  CheckCodecWeights(w, CodecMode::kAffine);
  const ModelWeights lossless = InitialWeights(TinyConfig(CodecMode::kLossless));
  EXPECT_EQ(ModelMode(lossless), CodecMode::kLossless);
  for (const auto& e : lossless.entries()) EXPECT_EQ(ParamGroup(e.name), "ctx");
  EXPECT_EQ(ParamGroup("pu.p1.c1.w"), "pu");
  EXPECT_EQ(ParamGroup(kLambdaName), "meta");
}

TEST(ModelTest, InitIsDeterministic) {
  EXPECT_EQ(SaveWeights(InitialWeights(TinyConfig())), SaveWeights(InitialWeights(TinyConfig())));
  TrainConfig other = TinyConfig();
  other.seed = 2;
  EXPECT_NE(SaveWeights(InitialWeights(TinyConfig())), SaveWeights(InitialWeights(other)));
}

TEST(OptimizerTest, MomentumAndClipping) {
  TrainConfig c;
  c.lr_ctx = 0.1;
  c.momentum = 0.5;
  c.clip_norm = 0;
  Optimizer opt(c);
  ModelWeights w;
  w.Add("ctx.a", Tensor({2}, std::vector<double>{1, 1}));
  w.Add("meta.x", Tensor::Scalar(3));
  const Gradients g = {{"ctx.a", Tensor({2}, std::vector<double>{1, -2})},
                       {"meta.x", Tensor::Scalar(5)}};
  opt.Update(w, g);
  EXPECT_DOUBLE_EQ(w.Get("ctx.a")[0], 0.9);
  EXPECT_DOUBLE_EQ(w.Get("ctx.a")[1], 1.2);
  opt.Update(w, g);
  EXPECT_DOUBLE_EQ(w.Get("ctx.a")[0], 0.9 - 0.1 * 1.5);
  EXPECT_EQ(w.Get("meta.x").item(), 3);

  c.clip_norm = 1;
  c.momentum = 0;
  Optimizer clipped(c);
  ModelWeights v;
  v.Add("ctx.a", Tensor({2}, std::vector<double>{0, 0}));
  clipped.Update(v, {{"ctx.a", Tensor({2}, std::vector<double>{30, 40})}});
  EXPECT_DOUBLE_EQ(v.Get("ctx.a")[0], -0.06);
  EXPECT_DOUBLE_EQ(v.Get("ctx.a")[1], -0.08);
}

TEST(OptimizerTest, NonFiniteGradient) {
  Optimizer opt{TrainConfig{}};
  ModelWeights w;
  w.Add("ctx.a", Tensor::Scalar(1));
  try {
    opt.Update(w, {{"ctx.a", Tensor::Scalar(std::nan(""))}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
}

TEST(OptimizerTest, ZeroLearningRateLeavesWeights) {
  TrainConfig c = TinyConfig();
  c.lr_pu = c.lr_quant = c.lr_ctx = c.lr_dq = 0;
  ModelWeights w = InitialWeights(c);
  const std::vector<uint8_t> before = SaveWeights(w);
  Optimizer opt(c);
  std::mt19937_64 rng(1);
  const auto crops = Crops(2, 16, 1);
  SoftStep(crops, w, opt, c, 2, rng);
  EXPECT_EQ(SaveWeights(w), before);
}

TEST(StepTest, FrozenGroupsStayBitIdentical) {
  const TrainConfig c = TinyConfig();
  const auto crops = Crops(2, 16, 2);
  std::mt19937_64 rng(3);

  ModelWeights w = InitialWeights(c);
  ModelWeights start = w;
  Optimizer o1(c);
  PretrainStep(crops, w, o1, c);
  PretrainStep(crops, w, o1, c);
  EXPECT_TRUE(SameGroupValues(start, w, "pu"));
  EXPECT_TRUE(SameGroupValues(start, w, "quant"));
  EXPECT_FALSE(SameGroupValues(start, w, "ctx"));

  start = w;
  Optimizer o2(c);
  SoftStep(crops, w, o2, c, 2, rng);
  SoftStep(crops, w, o2, c, 2, rng);
  EXPECT_FALSE(SameGroupValues(start, w, "pu"));
  EXPECT_FALSE(SameGroupValues(start, w, "quant"));

  start = w;
  Optimizer o3(c);
  HardFinetuneStep(crops, w, o3, c, -1, 1, rng);
  HardFinetuneStep(crops, w, o3, c, -1, 1, rng);
  EXPECT_TRUE(SameGroupValues(start, w, "pu"));
  EXPECT_TRUE(SameGroupValues(start, w, "quant"));
  EXPECT_TRUE(SameGroupValues(start, w, "meta"));
  EXPECT_FALSE(SameGroupValues(start, w, "ctx"));
  EXPECT_THROW(HardFinetuneStep(crops, w, o3, c, 1, -1, rng), Error);
}

TEST(StepTest, LosslessTrainsContextOnly) {
  const TrainConfig c = TinyConfig(CodecMode::kLossless);
  ModelWeights w = InitialWeights(c);
  const ModelWeights start = w;
  Optimizer opt(c);
  const auto crops = Crops(2, 16, 4);
  const LossReport first = LosslessStep(crops, w, opt, c);
  EXPECT_GT(first.bpp, 0);
  EXPECT_EQ(first.l_obj, 0);
  EXPECT_FALSE(SameGroupValues(start, w, "ctx"));
}

TEST(ForwardTest, EndToEndSoftGradient) {
  TrainConfig c = TinyConfig();
  c.init_stddev = 0.3;
  const ModelWeights w = InitialWeights(c);
  const auto crops = Crops(1, 16, 5);
  ForwardSpec spec;
  spec.transform = TransformKind::kAffine;
  spec.quant = QuantMode::kSoft;
  spec.alpha = 4;
  spec.lambda = c.lambda;

  Tape tape;
  ModelWeights watched;
  for (const auto& e : w.entries()) {
    watched.Add(e.name, ParamGroup(e.name) == "meta" ? e.value : tape.Watch(e.name, e.value));
  }
  std::mt19937_64 rng(11);
  const Gradients g = Backward(tape, RdForward(watched, crops, spec, rng).total);

  auto loss_at = [&](const std::string& name, size_t i, double delta) {
    ModelWeights moved = w;
    moved.Set(name, testing::WithValue(w.Get(name), i, w.Get(name)[i] + delta));
    std::mt19937_64 same(11);
    return RdForward(moved, crops, spec, same).total.item();
  };
  int checked = 0;
  for (const char* name : {"quant.log_qstep", "pu.p1.c1.w", "pu.u2.shift.w",
                           "ctx.hh.f2.b", "ctx.ll.s1.w", "dq.tail.w"}) {
    const Tensor& gv = g.at(name);
    for (size_t i = 0; i < std::min<size_t>(gv.size(), 3); ++i) {
      const double eps = 1e-5;
      const double fd = (loss_at(name, i, eps) - loss_at(name, i, -eps)) / (2 * eps);
      EXPECT_LT(testing::RelError(gv[i], fd, 1e-3), 1e-2) << name << "[" << i << "] "
                                                        << gv[i] << " vs " << fd;
      ++checked;
    }
  }
  EXPECT_GE(checked, 12);
}

TEST(ForwardTest, HardLossTracksCodec) {
  const TrainConfig c = TinyConfig();
  const ModelWeights w = InitialWeights(c).RoundedToFloat();
  std::mt19937_64 rng(6);
  const RgbImage im = testing::SmoothImage(32, 32, rng);
  const LossReport model = EvaluateRd(w, {&im, 1}, c.lambda);
  const LossReport codec = CodecRdLoss(im, im, w);
  // The codec floors every probability at 2^-16; the model does not.
  EXPECT_NEAR(model.bpp, codec.bpp, 0.1 * codec.bpp);
  EXPECT_NEAR(model.l_obj, codec.l_obj, 0.1 * codec.l_obj + 0.5);
}

TEST(TrainTest, SmokeAndDeterminism) {
  const TrainConfig c = TinyConfig();
  const auto images = Crops(2, 24, 7);
  std::vector<StepLog> logs;
  const TrainResult a = Train(c, images, [&](const StepLog& s) { logs.push_back(s); });
  ASSERT_EQ(logs.size(), 6u);
  EXPECT_EQ(logs[0].stage, 1);
  EXPECT_EQ(logs[2].stage, 2);
  EXPECT_EQ(logs[2].alpha, c.alpha_min);
  EXPECT_EQ(logs[3].alpha, c.alpha_max);
  EXPECT_EQ(logs[5].step, 5);
  EXPECT_EQ(a.after_stage.size(), 3u);
  const TrainResult b = Train(c, images);
  EXPECT_EQ(SaveWeights(a.weights), SaveWeights(b.weights));
  EXPECT_EQ(FormatStepLog(logs[0]).substr(0, 5), "0\tinf");
}

TEST(TrainTest, LosslessRunsOneStage) {
  TrainConfig c = TinyConfig(CodecMode::kLossless);
  const TrainResult r = Train(c, Crops(2, 16, 8));
  EXPECT_EQ(r.after_stage.size(), 1u);
  EXPECT_EQ(ModelMode(r.weights), CodecMode::kLossless);
}

TEST(OnlineTest, NeverWorseThanOriginal) {
  const ModelWeights w = InitialWeights(TinyConfig());
  std::mt19937_64 rng(9);
  const RgbImage im = testing::SmoothImage(24, 20, rng);
  OnlineOptions o;
  o.iters = 3;
  o.lr = 1e-2;
  OnlineReport rep;
  const RgbImage out = OnlineOptimize(im, w, o, &rep);
  if (rep.accepted) {
    EXPECT_LE(rep.after.total, rep.before.total);
  } else {
    EXPECT_EQ(out, im);
  }
  EXPECT_LE(CodecRdLoss(out, im, w).total, rep.before.total + 1e-12);
}

TEST(OnlineTest, ZeroIterationsIsIdentity) {
  const ModelWeights w = InitialWeights(TinyConfig());
  std::mt19937_64 rng(10);
  const RgbImage im = testing::SmoothImage(16, 16, rng);
  OnlineOptions o;
  o.iters = 0;
  EXPECT_EQ(OnlineOptimize(im, w, o), im);
  o.lr = -1;
  EXPECT_THROW(OnlineOptimize(im, w, o), Error);
  EXPECT_THROW(CodecRdLoss(im, im, DefaultLosslessWeights()), Error);
}

}  // namespace
}  // namespace iwv3

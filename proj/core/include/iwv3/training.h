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

#ifndef IWV3_TRAINING_H_
#define IWV3_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iwv3/bitstream.h"
#include "iwv3/image.h"
#include "iwv3/lifting.h"
#include "iwv3/postproc.h"
#include "iwv3/tensor.h"
#include "iwv3/weights.h"

namespace iwv3 {

// Name of the scalar holding the rate-distortion tradeoff a model was
// trained for.
inline constexpr const char* kLambdaName = "meta.lambda";

struct TrainConfig {
  CodecMode mode = CodecMode::kAffine;
  double lambda = 0.05;
  int levels = 3;

  // Model sizes.
  int lifting_steps = 2;
  int pu_channels = 8;
  int ctx_channels = 16;
  DequantConfig dequant{1, 1, 8};
  double init_qstep = 8.0;
  double init_stddev = 0.1;

  // Data.
  int crop = 64;
  int crops = 8;
  int batch = 4;

  // Schedule. Lossless training runs stage 1 only.
  int stage1_steps = 200;
  int stage2_steps = 200;
  int stage3_steps = 100;

  // SGD with momentum; learning rate per parameter group.
  double lr_pu = 1e-3;
  double lr_quant = 1e-2;
  double lr_ctx = 1e-2;
  double lr_dq = 1e-3;
  double momentum = 0.9;
  double clip_norm = 1.0;  // Global gradient norm; 0 disables.

  double alpha_min = 2.0;
  double alpha_max = 12.0;
  // Stage-3 QStep offset range as a fraction of the smallest trained
  // QStep.
  double offset_fraction = 0.25;

  uint64_t seed = 1;
};

// Flat "key = value" text; '#' starts a comment. Unknown keys and invalid
// values throw kInvalidArgument.
TrainConfig ParseTrainConfig(std::string_view text);
std::string FormatTrainConfig(const TrainConfig& config);
// Throws kInvalidArgument unless the config is usable.
void ValidateTrainConfig(const TrainConfig& config);
// Value of IWV3_SEED when set.
std::optional<uint64_t> SeedFromEnvironment();

struct LossReport {
  double bpp = 0;
  double l_obj = 0;
  double total = 0;
};

enum class DistortionScale {
  kPerPixel,  // Frobenius norm divided by sqrt(pixel count)
  kRaw,       // Frobenius norm
};

// total = bpp + lambda * l_obj with bpp = rate_bits / (W*H).
LossReport LossRd(const PlaneF& original, const PlaneF& reconstructed,
                  double rate_bits, double lambda,
                  DistortionScale scale = DistortionScale::kPerPixel);
// Over all three RGB components; W*H is the pixel count.
LossReport LossRd(const RgbImage& original, const RgbImage& reconstructed,
                  double rate_bits, double lambda,
                  DistortionScale scale = DistortionScale::kPerPixel);

// All PPM files of a directory, sorted by name. Throws kInvalidArgument
// when there are none.
std::vector<RgbImage> LoadImageDir(const std::filesystem::path& dir);

// `count` size x size crops at random positions, cycling over the images
// large enough to hold one.
std::vector<RgbImage> ExtractCrops(std::span<const RgbImage> images, int count,
                                   int size, std::mt19937_64& rng);

// Fresh model for the config: transform warm-started at CDF 9/7, uniform
// log-QSteps, context nets with a flat output layer, identity post filter.
// Lossless models hold context nets only.
ModelWeights InitialWeights(const TrainConfig& config);

double LambdaOf(const ModelWeights& weights);
// Codec mode a model was built for; kLossless when it has no transform.
CodecMode ModelMode(const ModelWeights& weights);

// Parameter group of a weight name: "pu", "quant", "ctx", "dq" or "meta".
std::string ParamGroup(const std::string& name);

enum class QuantMode { kHard, kSoft };

struct ForwardSpec {
  // kCdf97 ignores the P/U weights; learned kinds use them.
  TransformKind transform = TransformKind::kCdf97;
  QuantMode quant = QuantMode::kHard;
  double alpha = 12.0;  // Soft only.
  double qstep_offset = 0;
  double lambda = 0.05;
};

struct ForwardResult {
  Tensor bits;   // Scalar, total over the batch.
  Tensor l_obj;  // Scalar, mean over the batch.
  Tensor total;
  LossReport report;
};

// Rate-distortion loss of a lossy model on a batch of equally sized RGB
// crops. Crops are coded exactly as the codec would, with soft quantization
// optionally replacing rounding; distortion is measured in RGB after the
// post filter. Recorded when any weight is. Soft mode draws its noise from
// `rng`.
ForwardResult RdForward(const ModelWeights& weights, std::span<const RgbImage> batch,
                        const ForwardSpec& spec, std::mt19937_64& rng);

// Code length of the CDF 5/3 coefficients of a batch under the context
// nets, with `levels` levels.
ForwardResult LosslessForward(const ModelWeights& weights,
                              std::span<const RgbImage> batch, int levels);

// SGD with momentum and global-norm clipping. Only names present in the
// gradients are updated.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& config) : config_(config) {}
  void Update(ModelWeights& weights, const Gradients& grads);
  double LearningRate(const std::string& name) const;

 private:
  TrainConfig config_;
  std::map<std::string, std::vector<double>> velocity_;
};

struct StepLog {
  int stage = 0;
  int step = 0;
  double alpha = 0;
  LossReport loss;
};

// Formats "step\talpha\tbpp\tl_obj\ttotal".
std::string FormatStepLog(const StepLog& log);

// One optimization step of each stage on `batch`. The returned report is
// the loss before the update. Throws kNonFinite on a non-finite loss.
//
// Stage 1: CDF 9/7, fixed QSteps, rounding; context and post filter nets.
LossReport PretrainStep(std::span<const RgbImage> batch, ModelWeights& weights,
                        Optimizer& optimizer, const TrainConfig& config);
// Stage 2: learned transform, soft-to-hard quantization at `alpha`;
// every parameter.
LossReport SoftStep(std::span<const RgbImage> batch, ModelWeights& weights,
                    Optimizer& optimizer, const TrainConfig& config,
                    double alpha, std::mt19937_64& rng);
// Stage 3: learned transform and QSteps frozen, rounding at a QStep offset
// drawn uniformly from [offset_min, offset_max]; context and post filter
// nets.
LossReport HardFinetuneStep(std::span<const RgbImage> batch,
                            ModelWeights& weights, Optimizer& optimizer,
                            const TrainConfig& config, double offset_min,
                            double offset_max, std::mt19937_64& rng);
// Lossless: CDF 5/3 and rate only; context nets.
LossReport LosslessStep(std::span<const RgbImage> batch, ModelWeights& weights,
                        Optimizer& optimizer, const TrainConfig& config);

// Range of stage-3 offsets for trained weights.
std::pair<double, double> OffsetRange(const ModelWeights& weights,
                                      const TrainConfig& config);

// Hard-quantized loss of a lossy model on `images` with the learned
// transform (or CDF 9/7 when `cdf97`), averaged over the images.
LossReport EvaluateRd(const ModelWeights& weights, std::span<const RgbImage> images,
                      double lambda, double qstep_offset = 0, bool cdf97 = false);

struct TrainResult {
  ModelWeights weights;
  LossReport initial;
  std::vector<LossReport> after_stage;  // One per stage run.
  std::vector<ModelWeights> stage_weights;  // Weights after each stage.
};

// Runs the whole schedule on crops of `images`. `log` receives every step.
TrainResult Train(const TrainConfig& config, std::span<const RgbImage> images,
                  const std::function<void(const StepLog&)>& log = {});

struct OnlineOptions {
  double lr = 0.5;
  int iters = 100;
  double qstep_offset = 0;
  uint64_t seed = 1;
};

struct OnlineReport {
  LossReport before;  // Codec loss of the original.
  LossReport after;   // Codec loss of the candidate.
  bool accepted = false;
};

// Codec rate-distortion loss: real encode, decode, distortion against
// `reference`.
LossReport CodecRdLoss(const RgbImage& image, const RgbImage& reference,
                       const ModelWeights& weights, double qstep_offset = 0);

// Gradient descent on the image against the loss with soft-to-hard
// quantization at the maximal alpha. The step is lr times the gradient of
// the loss summed over pixels. The candidate is kept only when its codec
// loss does not exceed the original's.
RgbImage OnlineOptimize(const RgbImage& image, const ModelWeights& weights,
                        const OnlineOptions& options,
                        OnlineReport* report = nullptr);

}  // namespace iwv3

#endif  // IWV3_TRAINING_H_

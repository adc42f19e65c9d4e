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

#include "cli.h"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "iwv3/bitstream.h"
#include "iwv3/codec.h"
#include "iwv3/error.h"
#include "iwv3/image.h"
#include "iwv3/quant.h"
#include "iwv3/subband.h"
#include "iwv3/training.h"
#include "iwv3/weights.h"

namespace iwv3 {
namespace {

int ExitCodeOf(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kShapeMismatch:
      return kExitBadInput;
    case ErrorCode::kWeightsMismatch:
      return kExitWeights;
    case ErrorCode::kIo:
      return kExitIo;
    case ErrorCode::kCorruptStream:
      return kExitCorrupt;
    case ErrorCode::kNonFinite:
      return kExitNonFinite;
    case ErrorCode::kState:
      break;
  }
  return kExitInternal;
}

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double MillisSince(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

ModelWeights LoadWeightsFile(const std::string& path) {
  return LoadWeights(ReadFileBytes(path));
}

std::string LossFields(const std::string& prefix, const LossReport& r) {
  return prefix + "bpp=" + Num(r.bpp) + " " + prefix + "l_obj=" + Num(r.l_obj) +
         " " + prefix + "total=" + Num(r.total);
}

struct EncodeArgs {
  std::string in, out, mode = "lossless", weights;
  std::optional<int> levels;
  double qstep_offset = 0;
  int threads = 1;
};

int Encode(const EncodeArgs& a, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  EncodeOptions opt;
  opt.mode = ParseMode(a.mode);
  opt.qstep_offset = a.qstep_offset;
  opt.threads = a.threads;
  if (a.threads < 1) Fail(ErrorCode::kInvalidArgument, "--threads must be >= 1");
  ModelWeights weights;
  if (!a.weights.empty()) {
    weights = LoadWeightsFile(a.weights);
  } else if (opt.mode == CodecMode::kLossless) {
    weights = DefaultLosslessWeights();
  } else {
    Fail(ErrorCode::kInvalidArgument,
         std::string("--weights is required for ") + ModeName(opt.mode) + " mode");
  }
  if (opt.mode == CodecMode::kLossless) {
    opt.levels = a.levels.value_or(kDefaultLosslessLevels);
  } else {
    CheckCodecWeights(weights, opt.mode);
    if (a.levels && *a.levels != LevelsOfLogQsteps(weights)) {
      Fail(ErrorCode::kWeightsMismatch,
           "weights were trained for " + std::to_string(LevelsOfLogQsteps(weights)) +
               " levels, not " + std::to_string(*a.levels));
    }
  }
  const RgbImage image = ReadPpmFile(a.in);
  const EncodedImage enc = EncodeImage(image, weights, opt);
  WriteFileBytes(a.out, enc.bytes);
  out << "mode=" << ModeName(opt.mode) << " levels=" << enc.stream.header.levels
      << " width=" << image.width() << " height=" << image.height()
      << " bytes=" << enc.bytes.size() << " bpp=" << Num(enc.bpp)
      << " time_ms=" << Num(MillisSince(t0)) << '\n';
  return kExitOk;
}

struct DecodeArgs {
  std::string in, out, weights;
  int threads = 1;
};

int Decode(const DecodeArgs& a, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  if (a.threads < 1) Fail(ErrorCode::kInvalidArgument, "--threads must be >= 1");
  const std::vector<uint8_t> bytes = ReadFileBytes(a.in);
  const StreamHeader header = ParseHeader(bytes);
  ModelWeights weights;
  if (!a.weights.empty()) {
    weights = LoadWeightsFile(a.weights);
  } else if (header.mode == CodecMode::kLossless) {
    weights = DefaultLosslessWeights();
  } else {
    Fail(ErrorCode::kWeightsMismatch,
         std::string("a ") + ModeName(header.mode) + " stream needs --weights");
  }
  const DecodedImage dec = DecodeImage(bytes, weights, a.threads);
  WriteFileBytes(a.out, WritePpm(dec.image));
  out << "mode=" << ModeName(header.mode) << " width=" << dec.image.width()
      << " height=" << dec.image.height() << " time_ms=" << Num(MillisSince(t0))
      << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string config, data, out, log;
};

int Train(const TrainArgs& a, std::ostream& out) {
  TrainConfig config;
  if (!a.config.empty()) {
    const std::vector<uint8_t> text = ReadFileBytes(a.config);
    config = ParseTrainConfig(std::string(text.begin(), text.end()));
  }
  if (const auto seed = SeedFromEnvironment()) config.seed = *seed;
  ValidateTrainConfig(config);
  const std::vector<RgbImage> images = LoadImageDir(a.data);

  const std::string log_path = a.log.empty() ? a.out + ".log" : a.log;
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) Fail(ErrorCode::kIo, "cannot create " + log_path);
  log << "step\talpha\tbpp\tl_obj\ttotal\n";
  const TrainResult result = iwv3::Train(config, images, [&](const StepLog& s) {
    log << FormatStepLog(s) << '\n';
  });
  log.flush();
  if (!log) Fail(ErrorCode::kIo, "write error on " + log_path);
  WriteFileBytes(a.out, SaveWeights(result.weights));
  const LossReport& final_loss =
      result.after_stage.empty() ? result.initial : result.after_stage.back();
  out << "mode=" << ModeName(config.mode) << " seed=" << config.seed << ' '
      << LossFields("initial_", result.initial) << ' ' << LossFields("", final_loss)
      << '\n';
  return kExitOk;
}

struct OptimizeArgs {
  std::string in, out, weights;
  double lr = 0.5;
  int iters = 100;
  double qstep_offset = 0;
  uint64_t seed = 1;
};

int Optimize(const OptimizeArgs& a, std::ostream& out) {
  const ModelWeights weights = LoadWeightsFile(a.weights);
  const RgbImage image = ReadPpmFile(a.in);
  OnlineOptions opt;
  opt.lr = a.lr;
  opt.iters = a.iters;
  opt.qstep_offset = a.qstep_offset;
  opt.seed = a.seed;
  if (const auto seed = SeedFromEnvironment()) opt.seed = *seed;
  OnlineReport report;
  const RgbImage result = OnlineOptimize(image, weights, opt, &report);
  WriteFileBytes(a.out, WritePpm(result));
  out << LossFields("before_", report.before) << ' ' << LossFields("after_", report.after)
      << " accepted=" << (report.accepted ? 1 : 0) << '\n';
  return kExitOk;
}

int Inspect(const std::string& path, std::ostream& out) {
  const StreamHeader h = ParseHeader(ReadFileBytes(path));
  char checksum[24];
  std::snprintf(checksum, sizeof(checksum), "0x%016" PRIx64, h.weights_checksum);
  out << "magic=IWV3\n"
      << "version=" << static_cast<int>(h.version) << '\n'
      << "mode=" << ModeName(h.mode) << '\n'
      << "levels=" << h.levels << '\n'
      << "width=" << h.width << '\n'
      << "height=" << h.height << '\n'
      << "weights_checksum=" << checksum << '\n';
  const auto order = CodingOrder(h.levels);
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < h.subbands_per_channel(); ++k) {
      const SubbandHeader& s = h.at(c, k);
      out << "subband channel=" << c << " index=" << k
          << " name=" << SubbandName(order[k]) << " qstep=" << Num(s.qstep)
          << " min=" << s.min << " max=" << s.max << '\n';
    }
  }
  return kExitOk;
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"iwv3 learned wavelet image codec"};
  app.require_subcommand(1);

  EncodeArgs enc;
  CLI::App* encode = app.add_subcommand("encode", "Compress a PPM image");
  encode->add_option("input", enc.in, "Input PPM")->required();
  encode->add_option("output", enc.out, "Output bitstream")->required();
  encode->add_option("--mode", enc.mode, "lossless, additive or affine")
      ->check(CLI::IsMember({"lossless", "additive", "affine"}));
  encode->add_option("--levels", enc.levels, "Decomposition levels");
  encode->add_option("--weights", enc.weights, "Model weights");
  encode->add_option("--qstep-offset", enc.qstep_offset, "Added to every QStep");
  encode->add_option("--threads", enc.threads, "Channels coded concurrently");

  DecodeArgs dec;
  CLI::App* decode = app.add_subcommand("decode", "Decompress to a PPM image");
  decode->add_option("input", dec.in, "Input bitstream")->required();
  decode->add_option("output", dec.out, "Output PPM")->required();
  decode->add_option("--weights", dec.weights, "Model weights");
  decode->add_option("--threads", dec.threads, "Channels decoded concurrently");

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "Train a model on a directory of PPMs");
  train->add_option("--config", tr.config, "key = value config file");
  train->add_option("--data", tr.data, "Directory of training PPMs")->required();
  train->add_option("--out", tr.out, "Output weights")->required();
  train->add_option("--log", tr.log, "Training log (default: <out>.log)");

  OptimizeArgs op;
  CLI::App* optimize = app.add_subcommand("optimize", "Optimize an image for a model");
  optimize->add_option("input", op.in, "Input PPM")->required();
  optimize->add_option("output", op.out, "Output PPM")->required();
  optimize->add_option("--weights", op.weights, "Model weights")->required();
  optimize->add_option("--lr", op.lr, "Step size");
  optimize->add_option("--iters", op.iters, "Gradient steps");
  optimize->add_option("--qstep-offset", op.qstep_offset, "Added to every QStep");
  optimize->add_option("--seed", op.seed, "Noise seed");

  std::string inspect_path;
  CLI::App* inspect = app.add_subcommand("inspect", "Print a bitstream header");
  inspect->add_option("input", inspect_path, "Bitstream")->required();

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    err << "iwv3: error: " << msg << '\n';
    return kExitBadInput;
  }

  try {
    if (*encode) return Encode(enc, out);
    if (*decode) return Decode(dec, out);
    if (*train) return Train(tr, out);
    if (*optimize) return Optimize(op, out);
    if (*inspect) return Inspect(inspect_path, out);
  } catch (const Error& e) {
    err << "iwv3: error: " << e.what() << '\n';
    return ExitCodeOf(e.code());
  } catch (const std::bad_alloc&) {
    err << "iwv3: error: out of memory\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace iwv3

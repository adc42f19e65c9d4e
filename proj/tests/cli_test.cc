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

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.h"
#include "iwv3/training.h"
#include "iwv3/weights.h"
#include "test_util.h"

namespace iwv3 {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "iwv3");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

int CountLines(const std::string& s) {
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("iwv3_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
    std::mt19937_64 rng(1);
    WritePpmFile(Path("small.ppm"), testing::SmoothImage(20, 14, rng));
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Path(const std::string& name) const { return (dir_ / name).string(); }

  std::string WriteModel(CodecMode mode, int levels, uint64_t seed, const std::string& name) {
    TrainConfig c;
    c.mode = mode;
    c.levels = levels;
    c.pu_channels = 4;
    c.ctx_channels = 4;
    c.dequant = {1, 1, 4};
    c.seed = seed;
    c.crop = 16;
    WriteFileBytes(Path(name), SaveWeights(InitialWeights(c)));
    return Path(name);
  }

  fs::path dir_;
};

TEST_F(CliTest, NoArgumentsIsUsageError) {
  const CliRun r = Cli({});
  EXPECT_EQ(r.code, kExitBadInput);
  EXPECT_EQ(r.err.rfind("iwv3: error: ", 0), 0u);
  EXPECT_EQ(CountLines(r.err), 1);
}

TEST_F(CliTest, HelpSucceeds) {
  const CliRun r = Cli({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("encode"), std::string::npos);
}

TEST_F(CliTest, LosslessRoundTrip) {
  CliRun r = Cli({"encode", Path("small.ppm"), Path("s.iwv3")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("mode=lossless"), std::string::npos);
  EXPECT_NE(r.out.find("bpp="), std::string::npos);
  r = Cli({"decode", Path("s.iwv3"), Path("back.ppm"), "--threads", "3"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(ReadFileBytes(Path("back.ppm")), ReadFileBytes(Path("small.ppm")));
}

TEST_F(CliTest, InspectFieldCount) {
  ASSERT_EQ(Cli({"encode", Path("small.ppm"), Path("s.iwv3"), "--levels", "2"}).code,
            kExitOk);
  const CliRun r = Cli({"inspect", Path("s.iwv3")});
  ASSERT_EQ(r.code, kExitOk);
  EXPECT_EQ(CountLines(r.out), 7 + 3 * (3 * 2 + 1));
  EXPECT_EQ(r.out.rfind("magic=IWV3\n", 0), 0u);
  EXPECT_NE(r.out.find("levels=2\n"), std::string::npos);
  EXPECT_NE(r.out.find("name=LL2"), std::string::npos);
  EXPECT_NE(r.out.find("width=20\n"), std::string::npos);
}

TEST_F(CliTest, LossyRoundTripAndOffsets) {
  const std::string model = WriteModel(CodecMode::kAffine, 2, 1, "m.iwtw");
  CliRun r = Cli({"encode", Path("small.ppm"), Path("a.iwv3"), "--mode", "affine",
               "--weights", model});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  r = Cli({"decode", Path("a.iwv3"), Path("a.ppm"), "--weights", model});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(ReadPpmFile(Path("a.ppm")).width(), 20);
  r = Cli({"encode", Path("small.ppm"), Path("b.iwv3"), "--mode", "affine", "--weights",
           model, "--qstep-offset", "2.5"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(Cli({"inspect", Path("b.iwv3")}).out.find("qstep=10.5"), std::string::npos);
}

TEST_F(CliTest, WeightErrors) {
  const std::string model = WriteModel(CodecMode::kAffine, 2, 1, "m.iwtw");
  const std::string other = WriteModel(CodecMode::kAffine, 2, 2, "o.iwtw");
  EXPECT_EQ(Cli({"encode", Path("small.ppm"), Path("x.iwv3"), "--mode", "affine"}).code,
            kExitBadInput);
  EXPECT_EQ(Cli({"encode", Path("small.ppm"), Path("x.iwv3"), "--mode", "additive",
                 "--weights", model})
                .code,
            kExitWeights);
  EXPECT_EQ(Cli({"encode", Path("small.ppm"), Path("x.iwv3"), "--mode", "affine",
                 "--weights", model, "--levels", "3"})
                .code,
            kExitWeights);
  ASSERT_EQ(Cli({"encode", Path("small.ppm"), Path("a.iwv3"), "--mode", "affine",
                 "--weights", model})
                .code,
            kExitOk);
  EXPECT_EQ(Cli({"decode", Path("a.iwv3"), Path("n.ppm")}).code, kExitWeights);
  const CliRun r = Cli({"decode", Path("a.iwv3"), Path("w.ppm"), "--weights", other});
  EXPECT_EQ(r.code, kExitWeights);
  EXPECT_EQ(CountLines(r.err), 1);
  EXPECT_FALSE(fs::exists(Path("w.ppm")));
}

TEST_F(CliTest, CorruptAndMissingInputs) {
  ASSERT_EQ(Cli({"encode", Path("small.ppm"), Path("s.iwv3")}).code, kExitOk);
  std::vector<uint8_t> bytes = ReadFileBytes(Path("s.iwv3"));
  bytes.resize(bytes.size() - 3);
  WriteFileBytes(Path("cut.iwv3"), bytes);
  EXPECT_EQ(Cli({"decode", Path("cut.iwv3"), Path("c.ppm")}).code, kExitCorrupt);
  EXPECT_FALSE(fs::exists(Path("c.ppm")));
  EXPECT_EQ(Cli({"inspect", Path("small.ppm")}).code, kExitCorrupt);
  EXPECT_EQ(Cli({"decode", Path("nope.iwv3"), Path("c.ppm")}).code, kExitIo);
  EXPECT_EQ(Cli({"encode", Path("s.iwv3"), Path("x.iwv3")}).code, kExitBadInput);
  EXPECT_EQ(Cli({"encode", Path("small.ppm"), Path("x.iwv3"), "--mode", "jpeg"}).code,
            kExitBadInput);
  EXPECT_EQ(Cli({"encode", Path("small.ppm"), Path("x.iwv3"), "--threads", "0"}).code,
            kExitBadInput);
  EXPECT_EQ(Cli({"encode", Path("small.ppm"), Path("no_such_dir/x.iwv3")}).code, kExitIo);
}

TEST_F(CliTest, TrainWritesModelAndLog) {
  fs::create_directories(Path("data"));
  std::mt19937_64 rng(2);
  WritePpmFile(Path("data/a.ppm"), testing::SmoothImage(24, 24, rng));
  std::ofstream(Path("c.cfg")) << "levels = 1\ncrop = 16\ncrops = 2\nbatch = 2\n"
                                  "pu_channels = 2\nctx_channels = 2\ndq_channels = 2\n"
                                  "stage1_steps = 1\nstage2_steps = 1\nstage3_steps = 1\n";
  const CliRun r = Cli({"train", "--config", Path("c.cfg"), "--data", Path("data"), "--out",
                     Path("t.iwtw")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("initial_total="), std::string::npos);
  EXPECT_TRUE(fs::exists(Path("t.iwtw")));
  std::ifstream log(Path("t.iwtw.log"));
  std::string header;
  std::getline(log, header);
  EXPECT_EQ(header, "step\talpha\tbpp\tl_obj\ttotal");
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  EXPECT_EQ(lines, 3);
  EXPECT_EQ(Cli({"encode", Path("small.ppm"), Path("t.iwv3"), "--mode", "affine",
                 "--weights", Path("t.iwtw")})
                .code,
            kExitOk);
  EXPECT_EQ(Cli({"train", "--config", Path("c.cfg"), "--data", Path("empty"), "--out",
                 Path("u.iwtw")})
                .code,
            kExitBadInput);
  std::ofstream(Path("bad.cfg")) << "nonsense = 3\n";
  EXPECT_EQ(Cli({"train", "--config", Path("bad.cfg"), "--data", Path("data"), "--out",
                 Path("u.iwtw")})
                .code,
            kExitBadInput);
}

TEST_F(CliTest, OptimizeReportsBothLosses) {
  const std::string model = WriteModel(CodecMode::kAdditive, 1, 3, "m.iwtw");
  const CliRun r = Cli({"optimize", Path("small.ppm"), Path("o.ppm"), "--weights", model,
                     "--iters", "2", "--lr", "0.01"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("before_total="), std::string::npos);
  EXPECT_NE(r.out.find("after_total="), std::string::npos);
  EXPECT_NE(r.out.find("accepted="), std::string::npos);
  EXPECT_EQ(ReadPpmFile(Path("o.ppm")).width(), 20);
}

}  // namespace
}  // namespace iwv3

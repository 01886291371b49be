#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mcatlas/cli.hpp"
#include "mcatlas/io.hpp"

namespace fs = std::filesystem;

namespace mca {
namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mcatlas");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("mcatlas_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string at(const std::string& s) const { return (dir_ / s).string(); }
  fs::path dir_;
};

TEST_F(Cli, SynthWritesFramesAndIds) {
  const CliResult r = cli({"--seed", "7", "--out-dir", at("seq"), "synth", "--kind", "bending-plane", "--frames", "20",
                     "--points", "800"});
  ASSERT_EQ(r.code, 0) << r.err;
  int ply = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "seq")) ply += e.path().extension() == ".ply";
  EXPECT_EQ(ply, 20);
  const auto ids = read_ids(dir_ / "seq" / "ids.txt");
  ASSERT_EQ(ids.size(), 20u);
  EXPECT_EQ(ids[0].size(), 800u);
}

TEST_F(Cli, TrainWithZeroIterations) {
  ASSERT_EQ(cli({"--out-dir", at("seq"), "synth", "--frames", "3", "--points", "50"}).code, 0);
  const CliResult r = cli({"--out-dir", at("run"), "train", "--sequence", at("seq"), "--preset", "desk", "--iterations", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "run" / "model.ckpt"));
  std::ifstream csv(dir_ / "run" / "loss.csv");
  std::string header, row;
  std::getline(csv, header);
  EXPECT_EQ(header, "iteration,chamfer,metric,total,alpha_mc");
  EXPECT_FALSE(std::getline(csv, row));
}

TEST_F(Cli, EvalWithoutIdsExitsTwoNamingField) {
  ASSERT_EQ(cli({"--out-dir", at("seq"), "synth", "--frames", "3", "--points", "50"}).code, 0);
  ASSERT_EQ(cli({"--out-dir", at("run"), "train", "--sequence", at("seq"), "--preset", "desk", "--iterations", "0"}).code,
            0);
  std::vector<std::string> args{"--out-dir", at("ev"), "eval", "--checkpoint", at("run/model.ckpt"), "--inputs"};
  for (int k = 0; k < 3; ++k) args.push_back(at("seq/frame_00" + std::to_string(k) + ".ply"));
  const CliResult r = cli(args);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("'ids'"), std::string::npos) << r.err;
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"synth", "--bogus"}).code, 1);
  EXPECT_EQ(cli({"train", "--alpha", "-1"}).code, 1);
  EXPECT_EQ(cli({"eval"}).code, 1);
}

TEST_F(Cli, MissingInputIsDataError) {
  EXPECT_EQ(cli({"--out-dir", at("run"), "train", "--inputs", at("nope.ply"), at("nope2.ply"), "--iterations", "0"}).code,
            2);
}

}  // namespace
}  // namespace mca

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(MUGNET_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("mugnet_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, FullPipeline) {
  {
    std::ofstream cfg(path("small.cfg"));
    cfg << "train.epochs = 3\nmodel.backbone.width = 8\nmodel.embed.budgets = 8,4,2\n"
           "model.embed.hidden = 8\nmodel.embed.widths = 8,8,8\nmodel.head.hidden = 8\n";
  }
  auto r = run("synth -o " + path("room.ply") + " --points 3000 --seed 1");
  ASSERT_EQ(r.code, 0) << r.output;
  r = run("cluster -i " + path("room.ply") + " -o " + path("room.json") + " --classes floor,wall,furniture");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("purity"), std::string::npos);
  r = run("train -i " + path("room.json") + " --checkpoint " + path("m.ckpt") + " -c " + path("small.cfg") +
          " -o " + path("history.csv"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(path("history.csv")));
  r = run("infer -i " + path("room.json") + " --checkpoint " + path("m.ckpt") + " -o " + path("pred.ply"));
  ASSERT_EQ(r.code, 0) << r.output;
  r = run("eval -i " + path("pred.ply") + " --truth " + path("room.ply") + " --classes 3 -o " + path("report.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("mIoU"), std::string::npos);
  r = run("bench -i " + path("room.json") + " --checkpoint " + path("m.ckpt") + " --batch-sizes 1,2 --repetitions 1 -o " +
          path("bench.csv"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(path("bench.csv")));
}

TEST_F(Cli, EvalOfIdenticalFilesIsPerfect) {
  ASSERT_EQ(run("synth -o " + path("a.xyz") + " --points 500").code, 0);
  const auto r = run("eval -i " + path("a.xyz") + " --truth " + path("a.xyz"));
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("100.0"), std::string::npos);
}

TEST_F(Cli, MissingCheckpointNamesPath) {
  ASSERT_EQ(run("synth -o " + path("a.xyz") + " --points 500").code, 0);
  ASSERT_EQ(run("cluster -i " + path("a.xyz") + " -o " + path("a.json")).code, 0);
  const auto r = run("infer -i " + path("a.json") + " --checkpoint " + path("absent.ckpt") + " -o " + path("p.xyz"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("absent.ckpt"), std::string::npos);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("synth --bogus").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  {
    std::ofstream cfg(path("bad.cfg"));
    cfg << "train.speed = 3\n";
  }
  ASSERT_EQ(run("synth -o " + path("a.xyz") + " --points 500").code, 0);
  ASSERT_EQ(run("cluster -i " + path("a.xyz") + " -o " + path("a.json")).code, 0);
  const auto r = run("train -i " + path("a.json") + " --checkpoint " + path("m.ckpt") + " -c " + path("bad.cfg"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("train.speed"), std::string::npos);
}

TEST_F(Cli, MalformedInputIsDataError) {
  {
    std::ofstream bad(path("bad.xyz"));
    bad << "1 2 3 0\n1 2 oops 0\n";
  }
  const auto r = run("cluster -i " + path("bad.xyz") + " -o " + path("b.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("line 2"), std::string::npos);
}

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "boxal/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;  // stdout and stderr together
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("boxal_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    boxal::write_text_file(dir_ / "c.json", R"({
  "dataset": {"num_images": 300, "seed": 0},
  "initial_images": 30,
  "budgets": [60, 60],
  "seeds": [4],
  "eval_images": 100
})");
  }
  void TearDown() override { fs::remove_all(dir_); }

  Outcome run(const std::string& args) const {
    const fs::path log = dir_ / "log.txt";
    const std::string cmd = std::string(BOXAL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = boxal::read_text_file(log);
    return o;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, RunTwiceGivesIdenticalOutputs) {
  ASSERT_EQ(run("run --config " + path("c.json") + " --out " + path("a")).code, 0);
  ASSERT_EQ(run("run --config " + path("c.json") + " --out " + path("b")).code, 0);
  for (const std::string f : {"balanced_tspl_seed4.csv", "balanced_tspl_seed4_classes.csv",
                              "balanced_tspl_seed4_cycle2.ckpt.json"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
    EXPECT_EQ(boxal::read_text_file(dir_ / "a" / f), boxal::read_text_file(dir_ / "b" / f)) << f;
  }
}

TEST_F(Cli, FlagsOverrideConfig) {
  ASSERT_EQ(run("run --config " + path("c.json") + " --seed 9 --strategy uncertainty --out " + path("o")).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "o" / "uncertainty_tspl_seed9.csv"));
  EXPECT_FALSE(fs::exists(dir_ / "o" / "uncertainty_tspl_seed4.csv"));
}

TEST_F(Cli, CycleResumesToTheSameReport) {
  ASSERT_EQ(run("run --config " + path("c.json") + " --out " + path("full")).code, 0);
  ASSERT_EQ(run("run --config " + path("c.json") + " --out " + path("part")).code, 0);
  fs::remove(dir_ / "part" / "balanced_tspl_seed4_cycle2.ckpt.json");
  const auto o = run("cycle --config " + path("c.json") + " --out " + path("part") + " --checkpoint " +
                     path("part/balanced_tspl_seed4_cycle1.ckpt.json"));
  ASSERT_EQ(o.code, 0) << o.out;
  EXPECT_EQ(boxal::read_text_file(dir_ / "part" / "balanced_tspl_seed4_cycle2.ckpt.json"),
            boxal::read_text_file(dir_ / "full" / "balanced_tspl_seed4_cycle2.ckpt.json"));
  const std::string full = boxal::read_text_file(dir_ / "full" / "balanced_tspl_seed4.csv");
  const std::string resumed = boxal::read_text_file(dir_ / "part" / "balanced_tspl_seed4_cycle2.csv");
  const std::string last_row = resumed.substr(resumed.find('\n') + 1);
  EXPECT_NE(full.find(last_row), std::string::npos);
}

TEST_F(Cli, CycleRejectsForeignConfig) {
  ASSERT_EQ(run("run --config " + path("c.json") + " --out " + path("a")).code, 0);
  const auto o = run("cycle --config " + path("c.json") + " --strategy random --checkpoint " +
                     path("a/balanced_tspl_seed4_cycle1.ckpt.json") + " --out " + path("a"));
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.out.find("config hash"), std::string::npos) << o.out;
}

TEST_F(Cli, ScoreEmitsOneRowPerDetection) {
  boxal::write_text_file(dir_ / "d.json", R"({"num_classes": 2, "images": [{"image_id": 1,
    "detections": [{"bbox": [10, 10, 40, 40], "scores": [0.9, 0.1]},
                   {"bbox": [100, 100, 20, 20], "scores": [0.4, 0.6]}],
    "augmentations": [[{"bbox": [11, 10, 40, 40], "scores": [0.8, 0.2]}]]}]})");
  const auto o = run("score --detections " + path("d.json") + " --out " + path("s.csv"));
  ASSERT_EQ(o.code, 0) << o.out;
  const std::string csv = boxal::read_text_file(dir_ / "s.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.rfind("image_id,det_index,label,", 0), 0u);
}

TEST_F(Cli, GenAndReport) {
  ASSERT_EQ(run("gen --config " + path("c.json") + " --out " + path("g.json")).code, 0);
  EXPECT_EQ(boxal::load_coco(dir_ / "g.json").images.size(), 300u);
  ASSERT_EQ(run("run --config " + path("c.json") + " --out " + path("a")).code, 0);
  ASSERT_EQ(run("report " + path("a/balanced_tspl_seed4.csv") + " --out " + path("sum.csv")).code, 0);
  EXPECT_EQ(boxal::read_text_file(dir_ / "sum.csv").rfind("strategy,cycle,metric,n,median,q1,q3\n", 0), 0u);
}

TEST_F(Cli, MissingConfigExitsTwoWithPath) {
  const auto o = run("run --config " + path("absent.json"));
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.out.find(path("absent.json")), std::string::npos) << o.out;
}

TEST_F(Cli, MalformedInputsExitTwo) {
  boxal::write_text_file(dir_ / "bad.json", "{\"beta\": }");
  EXPECT_EQ(run("run --config " + path("bad.json")).code, 2);
  boxal::write_text_file(dir_ / "bad.json", "{\"beta\": 7}");
  EXPECT_EQ(run("run --config " + path("bad.json")).code, 2);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("run --no-such-flag").code, 1);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("cycle").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

#ifndef VMIC_CLI_PATH
#error "VMIC_CLI_PATH must point at the built CLI"
#endif

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("vmic_cli_" + std::to_string(::getpid()) + "_" +
                                       ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  Outcome run(const std::string& args) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string("\"") + VMIC_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  // small tone scene rendered to dir/video.rvid
  void synth() {
    std::ofstream(dir / "scene.json") << R"({
      "width": 32, "height": 32, "frame_rate": "2200/1", "duration": 0.3, "noise_sigma": 0.5,
      "texture": {"kind": "noise"},
      "motion": [{"region": [0, 0, 32, 32], "series": {"tones": [{"frequency_hz": 440, "amplitude_x": 0.05}]}}]
    })";
    const auto r = run("synth \"" + (dir / "scene.json").string() + "\" --output-dir \"" + dir.string() + "\"");
    ASSERT_EQ(r.code, 0) << r.err;
    ASSERT_TRUE(fs::exists(dir / "video.rvid"));
  }

  static nlohmann::json error_of(const Outcome& r) {
    const auto line = r.err.substr(0, r.err.find('\n'));
    return nlohmann::json::parse(line).at("error");
  }

  fs::path dir;
};

}  // namespace

TEST_F(Cli, SynthThenExtractWritesOutputs) {
  synth();
  const auto out = dir / "out";
  const auto r = run("extract \"" + (dir / "video.rvid").string() + "\" --top-fraction 0.5 --output-dir \"" +
                     out.string() + "\"");
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"audio.wav", "scores.csv", "spectrogram.csv", "spectrogram.png", "run.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const auto wav = slurp(out / "audio.wav");
  EXPECT_EQ(wav.substr(0, 4), "RIFF");
  EXPECT_NE(wav.find("ICMT"), std::string::npos);
  const auto side = nlohmann::json::parse(slurp(out / "run.json"));
  EXPECT_EQ(side["command"], "extract");
  EXPECT_FALSE(side["silent"].get<bool>());
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_EQ(summary["blocks_total"], 9);
  EXPECT_EQ(summary["blocks_selected"], 5);  // round(0.5 * 9)
}

TEST_F(Cli, WorkersDoNotChangeAudio) {
  synth();
  const auto video = (dir / "video.rvid").string();
  ASSERT_EQ(run("extract \"" + video + "\" --workers 1 --output-dir \"" + (dir / "a").string() + "\"").code, 0);
  ASSERT_EQ(run("extract \"" + video + "\" --workers 3 --output-dir \"" + (dir / "b").string() + "\"").code, 0);
  EXPECT_EQ(slurp(dir / "a" / "audio.wav"), slurp(dir / "b" / "audio.wav"));
}

TEST_F(Cli, BadArgumentsExitTwo) {
  auto r = run("extract --no-such-flag x.rvid");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_of(r)["code"], "cli.arguments");

  synth();
  r = run("extract \"" + (dir / "video.rvid").string() + "\" --block-size 12 --output-dir \"" + dir.string() + "\"");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_of(r)["kind"], "validation");
  EXPECT_EQ(error_of(r)["code"], "config.block_size");

  std::ofstream(dir / "typo.json") << R"({"blocksize": 8})";
  r = run("extract \"" + (dir / "video.rvid").string() + "\" --config \"" + (dir / "typo.json").string() + "\"");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_of(r)["code"], "config.unknown_key");
}

TEST_F(Cli, CorruptInputExitsThree) {
  synth();
  const auto full = slurp(dir / "video.rvid");
  std::ofstream(dir / "cut.rvid", std::ios::binary) << full.substr(0, full.size() - 100);
  auto r = run("extract \"" + (dir / "cut.rvid").string() + "\" --output-dir \"" + dir.string() + "\"");
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(error_of(r)["kind"], "data");
  EXPECT_EQ(error_of(r)["code"], "rvid.truncated");
  EXPECT_FALSE(fs::exists(dir / "audio.wav"));

  std::ofstream(dir / "junk.rvid", std::ios::binary) << "not a video at all, just text padding it out";
  r = run("extract \"" + (dir / "junk.rvid").string() + "\"");
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(error_of(r)["kind"], "data");

  r = run("extract \"" + (dir / "missing.rvid").string() + "\"");
  EXPECT_EQ(r.code, 3);
}

TEST_F(Cli, MetricsOnSelfIsPerfect) {
  synth();
  ASSERT_EQ(run("extract \"" + (dir / "video.rvid").string() + "\" --output-dir \"" + dir.string() + "\"").code, 0);
  const auto wav = (dir / "audio.wav").string();
  const auto r = run("metrics \"" + wav + "\" \"" + wav + "\" --output-dir \"" + dir.string() + "\"");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("seg_snr"), std::string::npos);
}

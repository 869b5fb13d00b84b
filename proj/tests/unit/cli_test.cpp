#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "support/temp_dir.hpp"
#include "tavg/app.hpp"
#include "tavg/errors.hpp"
#include "tavg/synth.hpp"

using namespace tavg;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result tavg_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tavg");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = app::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const char* kSmokeConfig =
    "# smoke run\n"
    "iterations = 10\n"
    "batch_size = 4\n"
    "image_size = 16\n"
    "encoder_layers = 8:15:4, 8:15:4, 16:15:4\n"
    "g_base_channels = 16\n"
    "d_base_channels = 4\n"
    "d_gru_channels = 4\n";

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

void write_sine_wav(const fs::path& p, double seconds, int rate) {
  media::PcmAudio pcm;
  pcm.sample_rate = rate;
  pcm.channels = 1;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  for (std::size_t i = 0; i < n; ++i) {
    pcm.interleaved.push_back(static_cast<std::int16_t>(8000 * std::sin(2 * M_PI * 220.0 * i / rate)));
  }
  media::write_wav(p, pcm);
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

std::size_t count_files(const fs::path& dir) {
  if (!fs::exists(dir)) return 0;
  return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator()));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// One synthetic clip and smoke config shared by the suite.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new test::TempDir();
    const auto& d = *dir_;
    ASSERT_EQ(tavg_cli({"synth-clip", "--out", (d / "clip.avi").string()}).code, 0);
    write_text(d / "smoke.cfg", kSmokeConfig);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path path(const std::string& name) { return *dir_ / name; }

  static test::TempDir* dir_;
};

test::TempDir* Cli::dir_ = nullptr;

}  // namespace

TEST_F(Cli, BuildDatasetCounts) {
  auto r = tavg_cli({"build-dataset", "--video", path("clip.avi").string(), "--out", path("ds_t").string(),
                     "--mode", "triplet", "--annotations", path("clip.avi.faces").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "30 samples written, 0 excluded\n");

  r = tavg_cli({"build-dataset", "--video", path("clip.avi").string(), "--out", path("ds_b").string(), "--mode",
                "baseline", "--annotations", path("clip.avi.faces").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("3 samples written", 0), 0u) << r.out;
}

TEST_F(Cli, BuildDatasetMissingAnnotationsNamesFlag) {
  const auto r = tavg_cli({"build-dataset", "--video", path("clip.avi").string(), "--out", path("x").string()});
  EXPECT_EQ(r.code, app::kUsage);
  EXPECT_NE(r.err.find("--annotations"), std::string::npos) << r.err;
}

TEST_F(Cli, BuildDatasetMissingVideoIsDataError) {
  const auto r = tavg_cli({"build-dataset", "--video", path("nope.avi").string(), "--out", path("x").string(),
                           "--annotations", path("clip.avi.faces").string()});
  EXPECT_EQ(r.code, app::kDataFailure);
  EXPECT_NE(r.err.find("nope.avi"), std::string::npos) << r.err;
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(tavg_cli({}).code, app::kUsage);
  EXPECT_EQ(tavg_cli({"frobnicate"}).code, app::kUsage);
  EXPECT_EQ(tavg_cli({"train", "--data", "x"}).code, app::kUsage);
  EXPECT_EQ(tavg_cli({"--help"}).code, app::kOk);
}

TEST_F(Cli, TrainWritesCheckpointAndLosses) {
  tavg_cli({"build-dataset", "--video", path("clip.avi").string(), "--out", path("tr_ds").string(),
            "--annotations", path("clip.avi.faces").string()});
  const auto ckpt = path("tr/model.ckpt");
  const auto r = tavg_cli({"train", "--data", path("tr_ds").string(), "--config", path("smoke.cfg").string(),
                           "--out", ckpt.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(ckpt));
  EXPECT_EQ(count_lines(path("tr/losses.tsv")), 11u);
  EXPECT_EQ(train::load_checkpoint(ckpt).model.config.mode, train::ModelMode::with_gru);
}

TEST_F(Cli, NoGruFlagRecordsMode) {
  tavg_cli({"build-dataset", "--video", path("clip.avi").string(), "--out", path("ng_ds").string(),
            "--annotations", path("clip.avi.faces").string()});
  const auto ckpt = path("ng/model.ckpt");
  const auto r = tavg_cli({"train", "--data", path("ng_ds").string(), "--config", path("smoke.cfg").string(),
                           "--out", ckpt.string(), "--no-gru"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(train::load_checkpoint(ckpt).model.config.mode, train::ModelMode::no_gru);
}

TEST_F(Cli, BadConfigKeyIsReported) {
  write_text(path("bad.cfg"), std::string(kSmokeConfig) + "learning_rate = 3\n");
  const auto r = tavg_cli({"train", "--data", path("whatever").string(), "--config", path("bad.cfg").string(),
                           "--out", path("bad.ckpt").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;
}

TEST_F(Cli, SeedFromEnvironment) {
  ::unsetenv("TAVG_SEED");
  EXPECT_FALSE(app::seed_from_env().has_value());
  ::setenv("TAVG_SEED", "77", 1);
  EXPECT_EQ(app::seed_from_env(), 77u);
  ::setenv("TAVG_SEED", "7x", 1);
  EXPECT_THROW(app::seed_from_env(), ConfigError);
  ::unsetenv("TAVG_SEED");
}

TEST_F(Cli, EndToEndRoundTripIsIdempotent) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::string> reports;
  std::vector<std::string> pngs;
  for (int run = 0; run < 2; ++run) {
    const auto d = path("e2e" + std::to_string(run));
    const auto clip = (d / "clip.avi").string();
    ASSERT_EQ(tavg_cli({"synth-clip", "--out", clip}).code, 0);
    auto r = tavg_cli({"build-dataset", "--video", clip, "--out", (d / "ds").string(), "--annotations",
                       clip + ".faces"});
    ASSERT_EQ(r.code, 0) << r.err;
    r = tavg_cli({"train", "--data", (d / "ds").string(), "--config", path("smoke.cfg").string(), "--out",
                  (d / "with.ckpt").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    r = tavg_cli({"train", "--data", (d / "ds").string(), "--config", path("smoke.cfg").string(), "--out",
                  (d / "no.ckpt").string(), "--no-gru", "--losses", (d / "no_losses.tsv").string()});
    ASSERT_EQ(r.code, 0) << r.err;

    write_sine_wav(d / "half.wav", 0.5, 44100);
    r = tavg_cli({"generate", "--ckpt", (d / "with.ckpt").string(), "--audio", (d / "half.wav").string(), "--out",
                  (d / "frames").string(), "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_files(d / "frames"), 15u);
    pngs.push_back(slurp(d / "frames" / "frame_00014.png"));

    r = tavg_cli({"evaluate", "--ckpts", "with_gru=" + (d / "with.ckpt").string() + ",no_gru=" +
                                             (d / "no.ckpt").string(),
                  "--data", (d / "ds").string(), "--report", (d / "report.tsv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_lines(d / "report.tsv"), 3u);
    reports.push_back(slurp(d / "report.tsv"));
    EXPECT_EQ(slurp(d / "with.ckpt"), slurp(path("e2e0") / "with.ckpt"));
  }
  EXPECT_EQ(reports[0], reports[1]);
  EXPECT_EQ(pngs[0], pngs[1]);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::minutes(5));
}

TEST_F(Cli, GenerateShortAudioWarns) {
  tavg_cli({"build-dataset", "--video", path("clip.avi").string(), "--out", path("sh_ds").string(),
            "--annotations", path("clip.avi.faces").string()});
  ASSERT_EQ(tavg_cli({"train", "--data", path("sh_ds").string(), "--config", path("smoke.cfg").string(), "--out",
                      path("sh.ckpt").string()})
                .code,
            0);
  write_sine_wav(path("short.wav"), 0.05, 16000);
  const auto r = tavg_cli({"generate", "--ckpt", path("sh.ckpt").string(), "--audio", path("short.wav").string(),
                           "--out", path("sh_frames").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_EQ(count_files(path("sh_frames")), 0u);
}

TEST_F(Cli, EvaluateErrors) {
  auto r = tavg_cli({"evaluate", "--ckpts", "", "--data", path("ds_t").string(), "--report", path("r.tsv").string()});
  EXPECT_EQ(r.code, app::kUsage);
  r = tavg_cli({"evaluate", "--ckpts", "with_gru=" + path("missing.ckpt").string(), "--data",
                path("ds_t").string(), "--report", path("r.tsv").string()});
  EXPECT_NE(r.code, 0);
  r = tavg_cli({"evaluate", "--ckpts", "nonsense", "--data", path("ds_t").string(), "--report",
                path("r.tsv").string()});
  EXPECT_EQ(r.code, app::kUsage);
}

TEST_F(Cli, HaarDetectorNeedsCascadeFlag) {
  const auto r = tavg_cli({"build-dataset", "--video", path("clip.avi").string(), "--out", path("h").string(),
                           "--detector", "haar"});
  EXPECT_EQ(r.code, app::kUsage);
  EXPECT_NE(r.err.find("--cascade"), std::string::npos) << r.err;
}

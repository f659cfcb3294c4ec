#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "pcenet/cli.hpp"
#include "pcenet/image_io.hpp"
#include "pcenet/synthetic.hpp"
#include "pcenet/training.hpp"
#include "test_util.hpp"

namespace pcenet {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pcenet");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> tree_contents(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    files[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return files;
}

void write_corpus(const fs::path& dir, int count, int side) {
  fs::create_directories(dir);
  for (const auto& s : synthetic::synthetic_corpus(count, side, 3)) image_io::save_image(s.clean, dir / (s.id + ".png"));
}

TEST(Cli, HelpExitsZeroForEverySubcommand) {
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  for (const char* sub : {"degrade", "train", "enhance", "evaluate", "wfqa", "pyramid"}) {
    const Outcome o = run_cli({sub, "--help"});
    EXPECT_EQ(o.code, 0) << sub;
    EXPECT_NE(o.out.find("--"), std::string::npos) << sub;
  }
}

TEST(Cli, UnknownSubcommandOrFlagIsUsageError) {
  const Outcome a = run_cli({"sharpen"});
  EXPECT_EQ(a.code, 2);
  EXPECT_EQ(a.err.rfind("error[usage]:", 0), 0u);
  EXPECT_EQ(run_cli({"wfqa", "--labels", "x.csv", "--bogus"}).code, 2);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"pyramid"}).code, 2);
}

TEST(Cli, RuntimeFailureIsExitOneWithSingleErrorLine) {
  const Outcome o = run_cli({"wfqa", "--labels", "/nonexistent/labels.csv"});
  EXPECT_EQ(o.code, 1);
  EXPECT_EQ(o.err.rfind("error[io]:", 0), 0u);
  EXPECT_EQ(std::count(o.err.begin(), o.err.end(), '\n'), 1);
}

TEST(Cli, WfqaPrintsScores) {
  TempDir dir("cli");
  std::ofstream(dir / "labels.csv") << "id,label\na,Good\nb,Usable\nc,Reject\n";
  const Outcome o = run_cli({"wfqa", "--labels", (dir / "labels.csv").string()});
  EXPECT_EQ(o.code, 0);
  EXPECT_EQ(o.out, "fiqa,wfqa\n0.3333333333,1\n");
}

TEST(Cli, DegradeTwiceWithSameSeedIsByteIdentical) {
  TempDir dir("cli");
  write_corpus(dir / "clean", 2, 64);
  for (const char* out : {"a", "b"}) {
    const Outcome o = run_cli({"degrade", "--input", (dir / "clean").string(), "--out", (dir / out).string(),
                               "--seq-len", "2", "--seed", "7", "--side", "64"});
    ASSERT_EQ(o.code, 0) << o.err;
  }
  const auto a = tree_contents(dir / "a");
  EXPECT_EQ(a.size(), 5u);  // 2 images x 2 variants + recipes.jsonl
  EXPECT_TRUE(a.count("synth_000_k1.png"));
  EXPECT_TRUE(a.count("recipes.jsonl"));
  EXPECT_EQ(a, tree_contents(dir / "b"));

  run_cli({"degrade", "--input", (dir / "clean").string(), "--out", (dir / "c").string(), "--seq-len", "2", "--seed",
           "8", "--side", "64"});
  EXPECT_NE(a, tree_contents(dir / "c"));
}

TEST(Cli, DegradeWithEverythingDisabledIsConfigError) {
  TempDir dir("cli");
  write_corpus(dir / "clean", 1, 32);
  const Outcome o = run_cli({"degrade", "--input", (dir / "clean").string(), "--out", (dir / "o").string(), "--side",
                             "32", "--no-blur", "--no-artifact", "--no-transmission"});
  EXPECT_EQ(o.code, 1);
  EXPECT_EQ(o.err.rfind("error[config]:", 0), 0u);
}

TEST(Cli, PyramidWritesLevelsAndManifest) {
  TempDir dir("cli");
  image_io::save_image(synthetic::synthetic_fundus(256, 1), dir / "x.png");
  const Outcome o = run_cli({"pyramid", "--input", (dir / "x.png").string(), "--levels", "4", "--out",
                             (dir / "levels").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  for (int l = 0; l <= 4; ++l) {
    const fs::path p = dir / "levels" / ("level_" + std::to_string(l) + ".png");
    ASSERT_TRUE(fs::exists(p));
    EXPECT_EQ(image_io::decode_file(p).width(), 256 >> l);
  }
  std::ifstream manifest(dir / "levels" / "manifest.txt");
  std::string line;
  int lines = 0;
  while (std::getline(manifest, line)) ++lines;
  EXPECT_EQ(lines, 5);
}

TEST(Cli, EnhanceMirrorsInputNames) {
  TempDir dir("cli");
  write_corpus(dir / "in", 3, 32);
  training::TrainConfig cfg;
  cfg.side = 32;
  cfg.L = 2;
  cfg.base_channels = 4;
  cfg.channel_cap = 8;
  training::Trainer(cfg, {}).save_checkpoint(dir / "m.ckpt");
  const Outcome o = run_cli({"enhance", "--checkpoint", (dir / "m.ckpt").string(), "--input", (dir / "in").string(),
                             "--out", (dir / "out").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  for (const char* name : {"synth_000.png", "synth_001.png", "synth_002.png"}) {
    ASSERT_TRUE(fs::exists(dir / "out" / name)) << name;
    EXPECT_EQ(image_io::decode_file(dir / "out" / name).width(), 32);
  }
  EXPECT_EQ(tree_contents(dir / "out").size(), 3u);
}

TEST(Cli, TrainWritesCheckpointAndMetrics) {
  TempDir dir("cli");
  write_corpus(dir / "data", 2, 32);
  const Outcome o = run_cli({"train", "--data", (dir / "data").string(), "--out", (dir / "run").string(), "--epochs",
                             "2", "--decay-start", "1", "--batch-size", "2", "--side", "32", "--levels", "2",
                             "--base-channels", "4", "--channel-cap", "8", "--seed", "3"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(fs::exists(dir / "run" / training::kFinalCheckpointName));
  EXPECT_TRUE(fs::exists(dir / "run" / training::kMetricsLogName));
}

TEST(Cli, ConfigFileSuppliesValuesAndFlagsOverride) {
  TempDir dir("cli");
  write_corpus(dir / "clean", 1, 64);
  std::ofstream(dir / "degrade.cfg") << "# synthesis settings\nseq_len = 3\nside = 32\nseed = 7\n";
  const std::string cfg = (dir / "degrade.cfg").string();
  ASSERT_EQ(run_cli({"degrade", "--config", cfg, "--input", (dir / "clean").string(), "--out",
                     (dir / "from_cfg").string()})
                .code,
            0);
  const auto from_cfg = tree_contents(dir / "from_cfg");
  EXPECT_EQ(from_cfg.size(), 4u);
  EXPECT_EQ(image_io::decode_file(dir / "from_cfg" / "synth_000_k2.png").width(), 32);

  ASSERT_EQ(run_cli({"degrade", "--config", cfg, "--input", (dir / "clean").string(), "--out",
                     (dir / "override").string(), "--seq-len", "1"})
                .code,
            0);
  EXPECT_EQ(tree_contents(dir / "override").size(), 2u);

  ASSERT_EQ(run_cli({"degrade", "--input", (dir / "clean").string(), "--out", (dir / "flags").string(), "--seq-len",
                     "3", "--side", "32", "--seed", "7"})
                .code,
            0);
  EXPECT_EQ(from_cfg, tree_contents(dir / "flags"));
}

TEST(Cli, UnknownConfigKeyIsUsageErrorAndMissingConfigIsRuntimeError) {
  TempDir dir("cli");
  std::ofstream(dir / "bad.cfg") << "colour = blue\n";
  EXPECT_EQ(run_cli({"wfqa", "--config", (dir / "bad.cfg").string(), "--labels", "x"}).code, 2);
  EXPECT_EQ(run_cli({"wfqa", "--config", (dir / "none.cfg").string(), "--labels", "x"}).code, 1);
}

}  // namespace
}  // namespace pcenet

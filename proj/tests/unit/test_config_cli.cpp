#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "eqgan/cli.hpp"
#include "eqgan/config.hpp"
#include "eqgan/errors.hpp"
#include "fixtures.hpp"

using namespace eqgan;
using eqgan::testing::TempDir;
namespace fs = std::filesystem;

TEST(Config, Defaults) {
  const RunConfig c = parse_config_text("");
  EXPECT_EQ(c.batch_size, 8);
  EXPECT_EQ(c.k, 3);
  EXPECT_EQ(c.iterations, 100000);
  EXPECT_DOUBLE_EQ(c.lr, 1e-4);
  EXPECT_DOUBLE_EQ(c.weights.cls_g, 1.0);
  EXPECT_DOUBLE_EQ(c.weights.rec_g, 0.5);
  EXPECT_DOUBLE_EQ(c.weights.con_g, 1.0);
  EXPECT_DOUBLE_EQ(c.weights.cls_d, 1.0);
  EXPECT_EQ(c.channel_plan, (std::array<int64_t, 5>{32, 64, 128, 256, 512}));
  EXPECT_TRUE(c.texture_skips && c.structure_skips && c.consistent_equalization);
  EXPECT_EQ(c.unseen_split_first, 1);
  EXPECT_EQ(c.unseen_split_second, 3);
}

TEST(Config, TextAndOverrides) {
  const RunConfig c = parse_config_text(
      "# comment\nbatch_size = 4\n  k=5  \nchannel_plan = 8, 16, 32, 32, 64\ntexture_skips = off\n",
      {{"k", "7"}, {"lambda_rec", "2.5"}});
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_EQ(c.k, 7);
  EXPECT_DOUBLE_EQ(c.weights.rec_g, 2.5);
  EXPECT_EQ(c.channel_plan, (std::array<int64_t, 5>{8, 16, 32, 32, 64}));
  EXPECT_FALSE(c.texture_skips);
}

TEST(Config, UnknownKeyListsValidKeys) {
  try {
    parse_config_text("batchsize = 4\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("batchsize"), std::string::npos);
    EXPECT_NE(msg.find("batch_size"), std::string::npos);
  }
}

TEST(Config, InvalidValues) {
  EXPECT_THROW(parse_config_text("k = three\n"), ConfigError);
  EXPECT_THROW(parse_config_text("k = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("batch_size\n"), ConfigError);
  EXPECT_THROW(parse_config_text("channel_plan = 8,16,32\n"), ConfigError);
  EXPECT_THROW(parse_config_text("texture_skips = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config_text("lambda_rec = -1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("beta1 = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("/nonexistent/eqgan.cfg"), IoError);
}

TEST(Config, SerialisationRoundTrips) {
  RunConfig c;
  c.data_root = "/data/flowers";
  c.batch_size = 3;
  c.lr = 2.5e-4;
  c.weights.con_g = 0.125;
  c.consistent_equalization = false;
  c.channel_plan = {8, 16, 32, 32, 64};
  c.fid_embedder = "inception.pt";
  const RunConfig back = parse_config_text(serialize_config(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(config_hash(back), config_hash(c));
  RunConfig d = c;
  d.seed = 1;
  EXPECT_NE(config_hash(d), config_hash(c));
  for (const auto& key : config_keys()) {
    EXPECT_EQ(get_config_value(back, key), get_config_value(c, key)) << key;
  }
}

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = eqgan::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> tiny_run_args(const fs::path& data, const fs::path& run) {
  return {"--data-root", data.string(), "--total-categories", "5", "--seen-count", "3",
          "--unseen-count", "2", "--images-per-category", "8", "--image-size", "32",
          "--channel-plan", "8,16,32,32,64", "--disc-channel-plan", "8,16,32,32,64",
          "--batch-size", "2", "--eval-k", "2", "--output-dir", run.string()};
}

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"fly"}).code, 2);
  EXPECT_EQ(run_cli({"train", "--batchsize", "4"}).code, 2);
  const auto bad_k = run_cli({"train", "--k", "1"});
  EXPECT_EQ(bad_k.code, 3);
  EXPECT_NE(bad_k.err.find("k must be at least 2"), std::string::npos);

  TempDir dir("cli");
  std::ofstream(dir.path() / "bad.cfg") << "batchsize = 4\n";
  const auto bad_file = run_cli({"train", "--config", (dir.path() / "bad.cfg").string()});
  EXPECT_EQ(bad_file.code, 3);
  EXPECT_NE(bad_file.err.find("valid keys"), std::string::npos);
  EXPECT_EQ(run_cli({"eval", "--checkpoint", (dir.path() / "nothing").string()}).code, 1);
}

TEST(Cli, EndToEnd) {
  TempDir dir("cli");
  const fs::path data = dir.path() / "data", run = dir.path() / "run";
  ASSERT_EQ(run_cli({"make-synthetic", "--out", data.string(), "--categories", "5",
                 "--images-per-category", "8", "--image-size", "32"}).code, 0);
  EXPECT_TRUE(fs::exists(data / "manifest.json"));

  auto train = std::vector<std::string>{"train", "--quiet", "--iterations", "2"};
  for (const auto& a : tiny_run_args(data, run)) train.push_back(a);
  const auto t = run_cli(train);
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(run / "manifest.json"));
  EXPECT_TRUE(fs::exists(run / "loss_log.csv"));
  EXPECT_TRUE(fs::exists(run / "checkpoints" / "iter_0000002" / "generator.pt"));

  const auto e = run_cli({"eval", "--checkpoint", run.string(), "--per-category", "2", "--out",
                      (dir.path() / "eval").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_TRUE(fs::exists(dir.path() / "eval" / "eval.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "eval" / "split_unseen.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "eval" / "manifest.json"));

  const auto img0 = (data / "cat_000" / "img_0000.png").string();
  const auto img1 = (data / "cat_000" / "img_0001.png").string();
  const auto g = run_cli({"generate", "--checkpoint", run.string(), "--images", img0, img1, "--count",
                      "3", "--out", (dir.path() / "gen").string()});
  ASSERT_EQ(g.code, 0) << g.err;
  EXPECT_TRUE(fs::exists(dir.path() / "gen" / "gen_0002.png"));
  EXPECT_TRUE(fs::exists(dir.path() / "gen" / "manifest.json"));

  const auto f = run_cli({"dump-features", "--checkpoint", run.string(), "--images", img0, "--out",
                      (dir.path() / "maps").string()});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_TRUE(fs::exists(dir.path() / "maps" / "image0_B4.png"));

  const auto s = run_cli({"sweep", "--run", "2=" + run.string(), "--run",
                      "5=" + (dir.path() / "absent").string(), "--out",
                      (dir.path() / "sweep").string(), "--eval-per-category", "2",
                      "--shots", "2,5"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NE(s.out.find("K=5 fid=gap"), std::string::npos);
  EXPECT_EQ(s.out.find("K=3"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir.path() / "sweep" / "sweep.svg"));
}

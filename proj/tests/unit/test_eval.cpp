#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "eqgan/errors.hpp"
#include "eqgan/eval.hpp"
#include "fixtures.hpp"

using namespace eqgan;
using eqgan::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct EvalFixture {
  TempDir dir{"eval"};
  RunConfig cfg;
  std::shared_ptr<const Dataset> ds;
  Generator gen{nullptr};
  EvalFixture() {
    SyntheticOptions o;
    o.categories = 5;
    o.images_per_category = 8;
    o.image_size = 32;
    cfg = eqgan::testing::small_config(dir.path(), o, 3);
    ds = eqgan::testing::load_shared(cfg);
    torch::manual_seed(0);
    gen = Generator(cfg.generator_config());
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::pair<int, int> png_size(const fs::path& p) {
  const auto bytes = slurp(p);
  auto be32 = [&](size_t at) {
    int v = 0;
    for (size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes.at(at + i));
    return v;
  };
  return {be32(16), be32(20)};
}

std::vector<std::vector<std::string>> csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> out;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    out.push_back(cells);
  }
  return out;
}

}  // namespace

TEST(EvalGeneration, WritesReportWhoseMeansMatchTheRows) {
  EvalFixture s;
  const metrics::ConvEmbedder emb(0);
  EvalOptions o;
  o.per_category = 4;
  o.k = 2;
  o.grid_images = 4;
  o.output_dir = s.dir.path() / "eval";
  const auto splits = split_unseen(*s.ds, {1, 3}, 0);
  const auto report = eval_generation(s.gen, *s.ds, splits, emb, emb, o);
  ASSERT_EQ(report.categories.size(), 2u);

  const auto rows = csv(o.output_dir / "eval.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0][2], "fid");
  double fid_sum = 0.0, lpips_sum = 0.0;
  for (size_t i = 1; i < rows.size(); ++i) {
    fid_sum += std::stod(rows[i][2]);
    lpips_sum += std::stod(rows[i][3]);
    EXPECT_EQ(rows[i][4], "2");
    EXPECT_EQ(rows[i][5], "6");
  }
  EXPECT_NEAR(fid_sum / 2, report.fid, 1e-6 * std::max(1.0, report.fid));
  EXPECT_NEAR(lpips_sum / 2, report.lpips, 1e-6);
  EXPECT_TRUE(fs::exists(o.output_dir / "metrics.json"));
  for (const auto& c : report.categories) {
    EXPECT_TRUE(fs::exists(o.output_dir / "grids" / (c.name + ".png")));
    EXPECT_GE(c.fid, 0.0);
    EXPECT_GT(c.lpips, 0.0);
  }
}

TEST(EvalGeneration, SameSeedSameScores) {
  EvalFixture s;
  const metrics::ConvEmbedder emb(0);
  EvalOptions o;
  o.per_category = 3;
  o.k = 2;
  const auto splits = split_unseen(*s.ds, {1, 3}, 0);
  const auto a = eval_generation(s.gen, *s.ds, splits, emb, emb, o);
  const auto b = eval_generation(s.gen, *s.ds, splits, emb, emb, o);
  EXPECT_EQ(a.fid, b.fid);
  EXPECT_EQ(a.lpips, b.lpips);
}

TEST(EvalGeneration, Errors) {
  EvalFixture s;
  const metrics::ConvEmbedder emb(0);
  EvalOptions o;
  o.k = 2;
  auto splits = split_unseen(*s.ds, {1, 3}, 0);
  o.per_category = 1;
  EXPECT_THROW(eval_generation(s.gen, *s.ds, splits, emb, emb, o), ValidationError);
  o.per_category = 4;
  auto overlapping = splits;
  overlapping[0].second.push_back(overlapping[0].first[0]);
  EXPECT_THROW(eval_generation(s.gen, *s.ds, overlapping, emb, emb, o), ValidationError);
  o.k = 3;
  EXPECT_THROW(eval_generation(s.gen, *s.ds, splits, emb, emb, o), ValidationError);
  o.k = 2;
  EXPECT_THROW(eval_generation(s.gen, *s.ds, {}, emb, emb, o), ValidationError);
}

TEST(GenerateForCategory, ShapeAndRange) {
  EvalFixture s;
  Rng rng(0);
  const int64_t id = s.ds->unseen()[0];
  const auto x = generate_for_category(s.gen, *s.ds, id, {0, 1, 2, 3}, 5, 3, rng, 2);
  EXPECT_EQ(x.sizes(), (std::vector<int64_t>{5, 3, 32, 32}));
  EXPECT_LE(x.abs().max().item<double>(), 1.0);
}

TEST(ShotSweep, MissingCheckpointsBecomeGaps) {
  TempDir dir("sweep");
  fs::create_directories(dir.path() / "k3");
  fs::create_directories(dir.path() / "k7");
  const std::map<int64_t, fs::path> ckpts{
      {3, dir.path() / "k3"}, {5, dir.path() / "absent"}, {7, dir.path() / "k7"}};
  std::vector<int64_t> called;
  const auto rows = shot_sweep(ckpts, kDefaultShots, [&](const fs::path&, int64_t k) {
    called.push_back(k);
    MetricReport r;
    r.fid = 10.0 * static_cast<double>(k);
    r.lpips = 0.1;
    return r;
  });
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(called, (std::vector<int64_t>{3, 7}));
  EXPECT_FALSE(rows[0].fid);
  EXPECT_EQ(*rows[1].fid, 30.0);
  EXPECT_FALSE(rows[2].fid);
  EXPECT_EQ(*rows[3].fid, 70.0);

  write_sweep_csv(dir.path() / "sweep.csv", rows);
  const auto table = csv(dir.path() / "sweep.csv");
  ASSERT_EQ(table.size(), 6u);
  EXPECT_EQ(table[0], (std::vector<std::string>{"k", "fid", "lpips", "checkpoint"}));
  EXPECT_EQ(table[1][0], "2");
  EXPECT_EQ(table[1][1], "");
  EXPECT_EQ(table[2][1], "30");

  write_sweep_svg(dir.path() / "sweep.svg", rows);
  const auto svg = slurp(dir.path() / "sweep.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(FeatureMaps, OneHeatmapPerBlockAtNativeResolution) {
  EvalFixture s;
  const auto images = s.ds->images(0, {0});
  const auto out = s.dir.path() / "maps";
  const auto files = dump_feature_maps(s.gen, images, out);
  ASSERT_EQ(files.size(), 5u);
  torch::NoGradGuard ng;
  const auto pyramid = s.gen->encode(images);
  for (size_t b = 0; b < 5; ++b) {
    EXPECT_EQ(files[b].filename(), "image0_B" + std::to_string(b) + ".png");
    const auto [w, h] = png_size(files[b]);
    EXPECT_EQ(h, pyramid.levels[b].size(2));
    EXPECT_EQ(w, pyramid.levels[b].size(3));
  }
  const auto again = dump_feature_maps(s.gen, images, s.dir.path() / "maps2");
  for (size_t b = 0; b < 5; ++b) EXPECT_EQ(slurp(files[b]), slurp(again[b]));
}

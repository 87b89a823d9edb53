#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>

#include "eqgan/errors.hpp"
#include "eqgan/image_io.hpp"
#include "fixtures.hpp"

using namespace eqgan;
using eqgan::testing::TempDir;

namespace {

struct SmallData {
  TempDir dir{"data"};
  DatasetSpec spec;
  SmallData(int64_t categories = 6, int64_t images = 12, int64_t seen = 4) {
    SyntheticOptions o;
    o.categories = categories;
    o.images_per_category = images;
    o.image_size = 32;
    make_synthetic_dataset(dir.path(), o);
    spec = {dir.path(), categories, seen, categories - seen, images, 32};
  }
};

std::set<int64_t> as_set(const std::vector<int64_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(DatasetSpec, StandardSplits) {
  const auto flower = DatasetSpec::flower("x");
  EXPECT_EQ(flower.total_categories, 102);
  EXPECT_EQ(flower.seen_count, 85);
  EXPECT_EQ(flower.unseen_count, 17);
  EXPECT_EQ(flower.images_per_category, 40);
  const auto animals = DatasetSpec::animal_faces("x");
  EXPECT_EQ(animals.unseen_count, 30);
  EXPECT_EQ(animals.images_per_category, 100);
  const auto faces = DatasetSpec::vgg_face("x");
  EXPECT_EQ(faces.total_categories, 2354);
  EXPECT_EQ(faces.seen_count, 1802);
  EXPECT_EQ(faces.unseen_count, 552);
  EXPECT_EQ(flower.image_size, 128);
}

TEST(DatasetSpec, CountsMustAddUp) {
  DatasetSpec s{"x", 10, 7, 4, 20, 32};
  EXPECT_THROW(s.validate(), ValidationError);
  s.unseen_count = 3;
  EXPECT_NO_THROW(s.validate());
}

TEST(LoadDataset, SplitsCategoriesDisjointly) {
  SmallData data;
  for (uint64_t seed : {0ull, 1ull, 2ull, 99ull}) {
    const auto ds = load_dataset(data.spec, seed);
    EXPECT_EQ(ds.seen().size(), 4u);
    EXPECT_EQ(ds.unseen().size(), 2u);
    std::set<int64_t> all = as_set(ds.seen());
    for (int64_t id : ds.unseen()) EXPECT_TRUE(all.insert(id).second);
    EXPECT_EQ(all.size(), 6u);
  }
}

TEST(LoadDataset, CategoryIdsFollowSortedNames) {
  SmallData data;
  const auto ds = load_dataset(data.spec, 0);
  for (size_t i = 0; i < ds.categories().size(); ++i) {
    EXPECT_EQ(ds.categories()[i].id, static_cast<int64_t>(i));
    if (i) EXPECT_LT(ds.categories()[i - 1].name, ds.categories()[i].name);
  }
}

TEST(LoadDataset, SeedDeterminesTheSplit) {
  SmallData data;
  EXPECT_EQ(load_dataset(data.spec, 5).seen(), load_dataset(data.spec, 5).seen());
  bool differs = false;
  for (uint64_t s = 1; s < 10 && !differs; ++s) differs = load_dataset(data.spec, 0).seen() != load_dataset(data.spec, s).seen();
  EXPECT_TRUE(differs);
}

TEST(LoadDataset, PixelsAreNormalised) {
  SmallData data;
  const auto ds = load_dataset(data.spec, 0);
  const auto x = ds.images(0);
  EXPECT_EQ(x.sizes(), (std::vector<int64_t>{12, 3, 32, 32}));
  EXPECT_GE(x.min().item<double>(), -1.0);
  EXPECT_LE(x.max().item<double>(), 1.0);
}

TEST(LoadDataset, Errors) {
  DatasetSpec missing{"/nonexistent/eqgan", 2, 1, 1, 1, 32};
  EXPECT_THROW(load_dataset(missing, 0), IoError);

  SmallData data;
  auto too_many = data.spec;
  too_many.images_per_category = 13;
  try {
    load_dataset(too_many, 0);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("cat_"), std::string::npos);
  }
  auto wrong_count = data.spec;
  wrong_count.total_categories = 7;
  wrong_count.seen_count = 5;
  EXPECT_THROW(load_dataset(wrong_count, 0), ValidationError);
}

TEST(LoadDataset, FlowerSplitOnSyntheticImages) {
  TempDir dir("flower");
  SyntheticOptions o;
  o.categories = 102;
  o.images_per_category = 40;
  o.image_size = 32;
  make_synthetic_dataset(dir.path(), o);
  auto spec = DatasetSpec::flower(dir.path());
  spec.image_size = 32;
  const auto ds = load_dataset(spec, 0);
  EXPECT_EQ(ds.seen().size(), 85u);
  EXPECT_EQ(ds.unseen().size(), 17u);
  const auto split = split_unseen(ds, {}, 0);
  ASSERT_EQ(split.size(), 17u);
  EXPECT_EQ(split[0].first.size() + split[0].second.size(), 40u);
  const auto cls = classification_splits(ds, ClassificationCounts::flower(), 0);
  EXPECT_EQ(cls[0].train.size(), 10u);
  EXPECT_EQ(cls[0].val.size(), 15u);
  EXPECT_EQ(cls[0].test.size(), 15u);
}

TEST(ImageIo, NormaliseRoundTripIsExact) {
  const auto values = torch::arange(256, torch::kInt64).to(torch::kUInt8);
  EXPECT_TRUE(torch::equal(image_io::denormalize(image_io::normalize(values)), values));
  const auto n = image_io::normalize(values);
  EXPECT_DOUBLE_EQ(n.min().item<double>(), -1.0);
  EXPECT_DOUBLE_EQ(n.max().item<double>(), 1.0);
}

TEST(ImageIo, PngRoundTrip) {
  TempDir dir("png");
  const auto img = torch::randint(0, 256, {3, 8, 8}, torch::kInt64).to(torch::kUInt8);
  image_io::write_rgb(dir.path() / "a.png", img);
  EXPECT_TRUE(torch::equal(image_io::read_rgb(dir.path() / "a.png", 8), img));
  EXPECT_TRUE(image_io::is_image_file("x.JPG"));
  EXPECT_FALSE(image_io::is_image_file("x.txt"));
}

TEST(SampleTask, DrawsKDistinctImagesFromOneCategory) {
  SmallData data;
  const auto ds = load_dataset(data.spec, 0);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto task = sample_task(ds, Partition::seen, 3, rng);
    EXPECT_EQ(task.shots(), 3);
    EXPECT_EQ(as_set(task.image_indices).size(), 3u);
    EXPECT_TRUE(as_set(ds.seen()).count(task.label));
    EXPECT_TRUE(torch::equal(task.images, ds.images(task.label, task.image_indices)));
  }
}

TEST(SampleTask, Errors) {
  SmallData data;
  const auto ds = load_dataset(data.spec, 0);
  Rng rng(1);
  EXPECT_THROW(sample_task(ds, Partition::seen, 1, rng), SamplingError);
  EXPECT_THROW(sample_task(ds, Partition::seen, 13, rng), SamplingError);
  EXPECT_THROW(sample_task_from(ds, 0, {0, 1}, 3, rng), SamplingError);
}

TEST(SampleTask, DeterministicUnderAFixedRngState) {
  SmallData data;
  const auto ds = load_dataset(data.spec, 0);
  Rng a(42), b(42);
  for (int i = 0; i < 5; ++i) {
    const auto x = sample_task(ds, Partition::unseen, 4, a);
    const auto y = sample_task(ds, Partition::unseen, 4, b);
    EXPECT_EQ(x.label, y.label);
    EXPECT_EQ(x.image_indices, y.image_indices);
  }
}

TEST(SampleTask, CategoriesAreDrawnUniformly) {
  SmallData data;
  const auto ds = load_dataset(data.spec, 0);
  Rng rng(3);
  std::map<int64_t, int> counts;
  const int draws = 4000;
  for (int i = 0; i < draws; ++i) ++counts[sample_task(ds, Partition::seen, 2, rng).label];
  ASSERT_EQ(counts.size(), 4u);
  double chi2 = 0.0;
  for (const auto& [label, n] : counts) {
    const double expected = draws / 4.0;
    chi2 += (n - expected) * (n - expected) / expected;
  }
  // 3 degrees of freedom; 16.27 is the 0.999 quantile.
  EXPECT_LT(chi2, 16.27);
}

TEST(SplitUnseen, IsAPartition) {
  SmallData data(6, 12, 4);
  const auto ds = load_dataset(data.spec, 0);
  const auto splits = split_unseen(ds, {1, 3}, 7);
  ASSERT_EQ(splits.size(), 2u);
  for (const auto& s : splits) {
    EXPECT_EQ(s.first.size(), 3u);
    EXPECT_EQ(s.second.size(), 9u);
    auto all = as_set(s.first);
    for (int64_t i : s.second) EXPECT_TRUE(all.insert(i).second);
    EXPECT_EQ(all.size(), 12u);
  }
  EXPECT_THROW(split_unseen(ds, {0, 1}, 0), ValidationError);
  EXPECT_THROW(split_unseen(ds, {1, 100}, 0), ValidationError);
}

TEST(ClassificationSplits, ExactCountsAndDisjoint) {
  SmallData data(6, 12, 4);
  const auto ds = load_dataset(data.spec, 0);
  const auto splits = classification_splits(ds, {3, 4, 5}, 0);
  for (const auto& s : splits) {
    EXPECT_EQ(s.train.size(), 3u);
    EXPECT_EQ(s.val.size(), 4u);
    EXPECT_EQ(s.test.size(), 5u);
    auto all = as_set(s.train);
    for (int64_t i : s.val) EXPECT_TRUE(all.insert(i).second);
    for (int64_t i : s.test) EXPECT_TRUE(all.insert(i).second);
  }
  EXPECT_THROW(classification_splits(ds, {5, 5, 5}, 0), ValidationError);
}

TEST(SplitManifest, CsvLayout) {
  SmallData data(6, 12, 4);
  const auto ds = load_dataset(data.spec, 0);
  TempDir out("manifest");
  write_split_manifest(out.path() / "split.csv", ds, split_unseen(ds, {1, 3}, 0), "conditioning", "reference");
  std::ifstream in(out.path() / "split.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "category,image,partition");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 24);
}

TEST(Synthetic, SameSeedSameFiles) {
  TempDir a("syn_a"), b("syn_b");
  SyntheticOptions o;
  o.categories = 2;
  o.images_per_category = 3;
  o.image_size = 32;
  o.style = SyntheticStyle::separable;
  make_synthetic_dataset(a.path(), o);
  make_synthetic_dataset(b.path(), o);
  const auto x = image_io::read_rgb(a.path() / "cat_001" / "img_0002.png", 32);
  const auto y = image_io::read_rgb(b.path() / "cat_001" / "img_0002.png", 32);
  EXPECT_TRUE(torch::equal(x, y));
  EXPECT_THROW(parse_synthetic_style("plaid"), ValidationError);
}

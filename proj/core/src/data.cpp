#include "eqgan/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "eqgan/errors.hpp"
#include "eqgan/image_io.hpp"

namespace fs = std::filesystem;

namespace eqgan {

void DatasetSpec::validate() const {
  if (total_categories <= 0 || seen_count <= 0 || unseen_count < 0) {
    throw ValidationError("dataset spec: category counts must be positive");
  }
  if (seen_count + unseen_count != total_categories) {
    throw ValidationError("dataset spec: seen_count (" + std::to_string(seen_count) +
                          ") + unseen_count (" + std::to_string(unseen_count) +
                          ") != total_categories (" + std::to_string(total_categories) + ")");
  }
  if (images_per_category <= 0) {
    throw ValidationError("dataset spec: images_per_category must be positive");
  }
  if (image_size <= 0) throw ValidationError("dataset spec: image_size must be positive");
}

DatasetSpec DatasetSpec::flower(fs::path root) { return {std::move(root), 102, 85, 17, 40, 128}; }

DatasetSpec DatasetSpec::animal_faces(fs::path root) {
  return {std::move(root), 149, 119, 30, 100, 128};
}

DatasetSpec DatasetSpec::vgg_face(fs::path root) {
  return {std::move(root), 2354, 1802, 552, 100, 128};
}

Dataset::Dataset(DatasetSpec spec, std::vector<Category> categories, std::vector<int64_t> seen,
                 std::vector<int64_t> unseen)
    : spec_(std::move(spec)),
      categories_(std::move(categories)),
      seen_(std::move(seen)),
      unseen_(std::move(unseen)),
      seen_rank_(categories_.size(), -1) {
  for (size_t i = 0; i < seen_.size(); ++i) seen_rank_.at(seen_[i]) = static_cast<int64_t>(i);
  for (int64_t id : unseen_) {
    if (seen_rank_.at(id) >= 0) throw ValidationError("seen and unseen categories overlap");
  }
}

const Category& Dataset::category(int64_t id) const {
  if (id < 0 || id >= static_cast<int64_t>(categories_.size())) {
    throw ValidationError("category id out of range: " + std::to_string(id));
  }
  return categories_[id];
}

int64_t Dataset::seen_class_index(int64_t category_id) const {
  category(category_id);
  const int64_t rank = seen_rank_[category_id];
  if (rank < 0) {
    throw ValidationError("category " + categories_[category_id].name + " is not a seen category");
  }
  return rank;
}

torch::Tensor Dataset::images(int64_t category_id) const {
  return image_io::normalize(category(category_id).pixels);
}

torch::Tensor Dataset::images(int64_t category_id, const std::vector<int64_t>& indices) const {
  const auto& pixels = category(category_id).pixels;
  auto index = torch::tensor(indices, torch::kLong);
  return image_io::normalize(pixels.index_select(0, index));
}

Dataset load_dataset(const DatasetSpec& spec, uint64_t seed) {
  spec.validate();
  if (!fs::is_directory(spec.root_path)) {
    throw IoError("dataset root does not exist: " + spec.root_path.string());
  }

  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(spec.root_path)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  if (static_cast<int64_t>(dirs.size()) != spec.total_categories) {
    throw ValidationError("dataset root " + spec.root_path.string() + " has " +
                          std::to_string(dirs.size()) + " category directories, expected " +
                          std::to_string(spec.total_categories));
  }

  std::vector<Category> categories;
  categories.reserve(dirs.size());
  for (size_t id = 0; id < dirs.size(); ++id) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dirs[id])) {
      if (entry.is_regular_file() && image_io::is_image_file(entry.path())) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    const std::string name = dirs[id].filename().string();
    if (static_cast<int64_t>(files.size()) < spec.images_per_category) {
      throw ValidationError("category '" + name + "' has " + std::to_string(files.size()) +
                            " images, expected at least " +
                            std::to_string(spec.images_per_category));
    }
    files.resize(spec.images_per_category);

    Category category;
    category.name = name;
    category.id = static_cast<int64_t>(id);
    std::vector<torch::Tensor> decoded;
    decoded.reserve(files.size());
    for (const auto& file : files) {
      decoded.push_back(image_io::read_rgb(file, spec.image_size));
      category.files.push_back(file.filename().string());
    }
    category.pixels = torch::stack(decoded);
    categories.push_back(std::move(category));
  }

  std::vector<int64_t> order(categories.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int64_t> seen(order.begin(), order.begin() + spec.seen_count);
  std::vector<int64_t> unseen(order.begin() + spec.seen_count, order.end());
  std::sort(seen.begin(), seen.end());
  std::sort(unseen.begin(), unseen.end());
  return Dataset(spec, std::move(categories), std::move(seen), std::move(unseen));
}

namespace {

std::vector<int64_t> draw_without_replacement(std::vector<int64_t> pool, int64_t k, Rng& rng) {
  // Partial Fisher-Yates: the first k slots end up uniformly drawn.
  for (int64_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<int64_t> pick(i, static_cast<int64_t>(pool.size()) - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

ImageBatch sample_task_from(const Dataset& dataset, int64_t category_id,
                            const std::vector<int64_t>& pool, int64_t k, Rng& rng) {
  if (k < 2) throw SamplingError("a task needs K >= 2 images, got K=" + std::to_string(k));
  if (k > static_cast<int64_t>(pool.size())) {
    throw SamplingError("K=" + std::to_string(k) + " exceeds the " +
                        std::to_string(pool.size()) + " images available in category " +
                        dataset.category(category_id).name);
  }
  ImageBatch batch;
  batch.label = category_id;
  batch.image_indices = draw_without_replacement(pool, k, rng);
  batch.images = dataset.images(category_id, batch.image_indices);
  return batch;
}

ImageBatch sample_task(const Dataset& dataset, Partition partition, int64_t k, Rng& rng) {
  if (k < 2) throw SamplingError("a task needs K >= 2 images, got K=" + std::to_string(k));
  const auto& ids = dataset.partition(partition);
  if (ids.empty()) throw SamplingError("cannot sample from an empty partition");
  std::uniform_int_distribution<size_t> pick(0, ids.size() - 1);
  const int64_t category_id = ids[pick(rng)];
  std::vector<int64_t> pool(dataset.category(category_id).pixels.size(0));
  std::iota(pool.begin(), pool.end(), 0);
  return sample_task_from(dataset, category_id, pool, k, rng);
}

std::pair<int64_t, int64_t> SplitRatio::apply(int64_t n) const {
  if (first < 0 || second < 0 || first + second == 0) {
    throw ValidationError("split ratio parts must be non-negative and not both zero");
  }
  const int64_t a = n * first / (first + second);
  const int64_t b = n - a;
  if (a <= 0 || b <= 0) {
    throw ValidationError("split ratio " + std::to_string(first) + ":" + std::to_string(second) +
                          " leaves an empty part for " + std::to_string(n) + " images");
  }
  return {a, b};
}

namespace {

std::vector<int64_t> shuffled_indices(int64_t n, Rng& rng) {
  std::vector<int64_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace

std::vector<CategorySplit> split_unseen(const Dataset& dataset, const SplitRatio& ratio,
                                        uint64_t seed) {
  Rng rng(seed);
  std::vector<CategorySplit> splits;
  for (int64_t id : dataset.unseen()) {
    const int64_t n = dataset.category(id).pixels.size(0);
    const int64_t a = ratio.apply(n).first;
    auto idx = shuffled_indices(n, rng);
    CategorySplit split;
    split.category_id = id;
    split.first.assign(idx.begin(), idx.begin() + a);
    split.second.assign(idx.begin() + a, idx.end());
    std::sort(split.first.begin(), split.first.end());
    std::sort(split.second.begin(), split.second.end());
    splits.push_back(std::move(split));
  }
  return splits;
}

std::vector<ClassificationSplit> classification_splits(const Dataset& dataset,
                                                       const ClassificationCounts& counts,
                                                       uint64_t seed) {
  if (counts.train <= 0 || counts.val < 0 || counts.test <= 0) {
    throw ValidationError("classification split counts must be positive");
  }
  const int64_t needed = counts.train + counts.val + counts.test;
  Rng rng(seed);
  std::vector<ClassificationSplit> splits;
  for (int64_t id : dataset.unseen()) {
    const int64_t n = dataset.category(id).pixels.size(0);
    if (needed > n) {
      throw ValidationError("classification split " + std::to_string(counts.train) + ":" +
                            std::to_string(counts.val) + ":" + std::to_string(counts.test) +
                            " needs " + std::to_string(needed) + " images but category " +
                            dataset.category(id).name + " has " + std::to_string(n));
    }
    auto idx = shuffled_indices(n, rng);
    ClassificationSplit split;
    split.category_id = id;
    auto it = idx.begin();
    split.train.assign(it, it + counts.train);
    it += counts.train;
    split.val.assign(it, it + counts.val);
    it += counts.val;
    split.test.assign(it, it + counts.test);
    splits.push_back(std::move(split));
  }
  return splits;
}

namespace {

std::ofstream open_csv(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "category,image,partition\n";
  return out;
}

void write_rows(std::ofstream& out, const Category& category, const std::vector<int64_t>& idx,
                const std::string& partition) {
  for (int64_t i : idx) out << category.name << ',' << category.files.at(i) << ',' << partition << '\n';
}

}  // namespace

void write_split_manifest(const fs::path& path, const Dataset& dataset,
                          const std::vector<CategorySplit>& splits, const std::string& first_name,
                          const std::string& second_name) {
  auto out = open_csv(path);
  for (const auto& split : splits) {
    const auto& category = dataset.category(split.category_id);
    write_rows(out, category, split.first, first_name);
    write_rows(out, category, split.second, second_name);
  }
}

void write_split_manifest(const fs::path& path, const Dataset& dataset,
                          const std::vector<ClassificationSplit>& splits) {
  auto out = open_csv(path);
  for (const auto& split : splits) {
    const auto& category = dataset.category(split.category_id);
    write_rows(out, category, split.train, "train");
    write_rows(out, category, split.val, "val");
    write_rows(out, category, split.test, "test");
  }
}

}  // namespace eqgan

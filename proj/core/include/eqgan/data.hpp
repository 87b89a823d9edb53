#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace eqgan {

/// Deterministic generator used for every sampling decision (tasks, fusion weights, splits).
using Rng = std::mt19937_64;

struct DatasetSpec {
  std::filesystem::path root_path;
  int64_t total_categories = 0;
  int64_t seen_count = 0;
  int64_t unseen_count = 0;
  int64_t images_per_category = 0;
  int64_t image_size = 128;

  /// Throws ValidationError when the counts are inconsistent.
  void validate() const;

  // Standard category splits of the Flower, Animal Faces and VGGFace benchmarks.
  static DatasetSpec flower(std::filesystem::path root);
  static DatasetSpec animal_faces(std::filesystem::path root);
  static DatasetSpec vgg_face(std::filesystem::path root);
};

enum class Partition { seen, unseen };

/// K same-category images, the unit of an episodic task.
struct ImageBatch {
  torch::Tensor images;  // K x 3 x H x W, float in [-1,1]
  int64_t label = -1;    // category id
  std::vector<int64_t> image_indices;  // positions within the category

  int64_t shots() const { return images.defined() ? images.size(0) : 0; }
};

struct Category {
  std::string name;
  int64_t id = -1;
  std::vector<std::string> files;
  torch::Tensor pixels;  // N x 3 x S x S, uint8
};

/// In-memory dataset. Immutable after load, so concurrent readers are safe.
class Dataset {
 public:
  Dataset(DatasetSpec spec, std::vector<Category> categories, std::vector<int64_t> seen,
          std::vector<int64_t> unseen);

  const DatasetSpec& spec() const { return spec_; }
  const std::vector<Category>& categories() const { return categories_; }
  const Category& category(int64_t id) const;

  const std::vector<int64_t>& seen() const { return seen_; }
  const std::vector<int64_t>& unseen() const { return unseen_; }
  const std::vector<int64_t>& partition(Partition p) const {
    return p == Partition::seen ? seen_ : unseen_;
  }

  /// Dense index of a seen category in [0, seen_count), used as the classifier target.
  int64_t seen_class_index(int64_t category_id) const;

  /// Normalised float images of a category, optionally restricted to `indices`.
  torch::Tensor images(int64_t category_id) const;
  torch::Tensor images(int64_t category_id, const std::vector<int64_t>& indices) const;

 private:
  DatasetSpec spec_;
  std::vector<Category> categories_;
  std::vector<int64_t> seen_;
  std::vector<int64_t> unseen_;
  std::vector<int64_t> seen_rank_;
};

/// Loads root/<category>/<image> with a seeded shuffle of sorted category names deciding
/// which categories are seen. Category id = rank of the sorted directory name.
Dataset load_dataset(const DatasetSpec& spec, uint64_t seed);

/// Draws one category uniformly from `partition` and K distinct images from it.
ImageBatch sample_task(const Dataset& dataset, Partition partition, int64_t k, Rng& rng);

/// Same, restricted to a pool of allowed image indices for the chosen category.
ImageBatch sample_task_from(const Dataset& dataset, int64_t category_id,
                            const std::vector<int64_t>& pool, int64_t k, Rng& rng);

/// Integer ratio a:b. `apply(n)` returns the two part sizes summing to n.
struct SplitRatio {
  int64_t first = 1;
  int64_t second = 3;
  std::pair<int64_t, int64_t> apply(int64_t n) const;
};

/// Per-category image index lists.
struct CategorySplit {
  int64_t category_id = -1;
  std::vector<int64_t> first;
  std::vector<int64_t> second;
};

/// Conditioning (C_u1) / reference (C_u2) split of every unseen category.
std::vector<CategorySplit> split_unseen(const Dataset& dataset, const SplitRatio& ratio,
                                        uint64_t seed);

struct ClassificationCounts {
  int64_t train = 0;
  int64_t val = 0;
  int64_t test = 0;
  static ClassificationCounts flower() { return {10, 15, 15}; }
  static ClassificationCounts animal_faces() { return {30, 35, 35}; }
  static ClassificationCounts vgg_face() { return {30, 35, 35}; }
};

struct ClassificationSplit {
  int64_t category_id = -1;
  std::vector<int64_t> train;
  std::vector<int64_t> val;
  std::vector<int64_t> test;
};

std::vector<ClassificationSplit> classification_splits(const Dataset& dataset,
                                                       const ClassificationCounts& counts,
                                                       uint64_t seed);

/// CSV manifest with header `category,image,partition`.
void write_split_manifest(const std::filesystem::path& path, const Dataset& dataset,
                          const std::vector<CategorySplit>& splits,
                          const std::string& first_name, const std::string& second_name);
void write_split_manifest(const std::filesystem::path& path, const Dataset& dataset,
                          const std::vector<ClassificationSplit>& splits);

}  // namespace eqgan

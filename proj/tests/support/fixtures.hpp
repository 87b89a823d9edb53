#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>

#include <unistd.h>

#include "eqgan/config.hpp"
#include "eqgan/data.hpp"
#include "eqgan/synthetic.hpp"

namespace eqgan::testing {

/// Directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "eqgan") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Writes a synthetic dataset and returns a config pointing at it with a small network.
inline RunConfig small_config(const std::filesystem::path& root, const SyntheticOptions& synthetic,
                              int64_t seen) {
  make_synthetic_dataset(root / "data", synthetic);
  RunConfig c;
  c.data_root = (root / "data").string();
  c.total_categories = synthetic.categories;
  c.seen_count = seen;
  c.unseen_count = synthetic.categories - seen;
  c.images_per_category = synthetic.images_per_category;
  c.image_size = synthetic.image_size;
  c.channel_plan = {8, 16, 32, 32, 64};
  c.disc_channel_plan = {8, 16, 32, 32, 64};
  c.output_dir = (root / "run").string();
  c.batch_size = 4;
  c.log_interval = 1;
  c.checkpoint_interval = 1000;
  return c;
}

inline std::shared_ptr<const Dataset> load_shared(const RunConfig& config) {
  return std::make_shared<const Dataset>(load_dataset(config.dataset_spec(), config.split_seed));
}

}  // namespace eqgan::testing

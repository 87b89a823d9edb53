#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "eqgan/data.hpp"
#include "eqgan/discriminator.hpp"
#include "eqgan/generator.hpp"
#include "eqgan/losses.hpp"

namespace eqgan {

/// Everything a run needs. Serialised as flat `key = value` lines.
struct RunConfig {
  // Dataset
  std::string data_root;
  int64_t total_categories = 0;
  int64_t seen_count = 0;
  int64_t unseen_count = 0;
  int64_t images_per_category = 0;
  int64_t image_size = 128;
  uint64_t split_seed = 0;

  // Model
  std::array<int64_t, 5> channel_plan{32, 64, 128, 256, 512};
  std::array<int64_t, 5> disc_channel_plan{32, 64, 128, 256, 512};

  // Optimisation
  int64_t iterations = 100000;
  int64_t batch_size = 8;
  int64_t k = 3;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  losses::LossWeights weights;

  // Ablations: texture skips (TS), structure skips (SS), consistent equalization loss (CE)
  bool texture_skips = true;
  bool structure_skips = true;
  bool consistent_equalization = true;

  uint64_t seed = 0;
  int64_t checkpoint_interval = 5000;
  int64_t log_interval = 100;
  std::string output_dir;  // empty: $EQGAN_OUTPUT_ROOT/<run_name>
  std::string run_name = "eqgan";

  // Evaluation protocol
  int64_t eval_per_category = 128;
  int64_t eval_k = 3;
  int64_t unseen_split_first = 1;  // C_u1 : C_u2
  int64_t unseen_split_second = 3;
  uint64_t eval_seed = 0;
  std::string fid_embedder;    // empty: built-in; otherwise a TorchScript file
  std::string lpips_embedder;  // empty: built-in; otherwise a TorchScript file

  // Classification augmentation
  int64_t cls_train = 10;
  int64_t cls_val = 15;
  int64_t cls_test = 15;
  int64_t augment_per_category = 30;
  int64_t classifier_epochs = 30;
  int64_t classifier_pretrain_epochs = 5;
  int64_t classifier_width = 16;
  int64_t classifier_blocks = 1;
  double classifier_lr = 1e-3;

  /// Throws ConfigError on any inconsistent value.
  void validate() const;

  DatasetSpec dataset_spec() const;
  GeneratorConfig generator_config() const;
  DiscriminatorConfig discriminator_config(int64_t num_classes) const;
  std::filesystem::path resolved_output_dir() const;

  bool operator==(const RunConfig&) const;
};

/// Names of every accepted key, in serialisation order.
const std::vector<std::string>& config_keys();

/// Sets one key from text. Throws ConfigError for unknown keys or unparsable values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Parses `key = value` text ('#' starts a comment); overrides are applied afterwards.
RunConfig parse_config_text(const std::string& text, const ConfigOverrides& overrides = {});
RunConfig parse_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

std::string serialize_config(const RunConfig& config);

/// FNV-1a of the serialised config, hex encoded.
std::string config_hash(const RunConfig& config);

/// Version string written into manifests.
std::string code_version();

}  // namespace eqgan

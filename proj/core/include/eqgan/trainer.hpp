#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "eqgan/config.hpp"
#include "eqgan/data.hpp"
#include "eqgan/discriminator.hpp"
#include "eqgan/generator.hpp"

namespace eqgan {

/// Constant `base_lr` for the first half of training, then linear decay to 0 at
/// `total_iterations`. Throws ValidationError outside [0, total_iterations].
double lr_at(int64_t iteration, int64_t total_iterations, double base_lr = 1e-4);

struct StepMetrics {
  int64_t iteration = 0;  // 1-based index of the completed step
  double lr = 0.0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double d_adv = 0.0;
  double d_cls = 0.0;
  double g_adv = 0.0;
  double g_cls = 0.0;
  double g_rec = 0.0;
  double g_con = 0.0;  // 0 when the consistent equalization term is disabled
  double grad_norm_d = 0.0;
  double grad_norm_g = 0.0;
};

/// CSV header shared by the loss log writer and readers.
std::string loss_log_header();
std::string loss_log_row(const StepMetrics& m);

/// Training state: both networks, their Adam optimisers, the sampling RNG and the iteration
/// counter. One logical thread drives it.
class Trainer {
 public:
  Trainer(RunConfig config, std::shared_ptr<const Dataset> dataset);

  /// Restores a checkpoint written by save_checkpoint. The dataset must match the manifest's.
  static Trainer resume(const std::filesystem::path& checkpoint,
                        std::shared_ptr<const Dataset> dataset);

  /// One discriminator update on real images and detached fakes, then one generator update
  /// with the discriminator frozen.
  StepMetrics step();

  /// Writes the checkpoint atomically (temp directory, then rename).
  void save_checkpoint(const std::filesystem::path& dir) const;

  /// FNV-1a over every parameter and buffer of both networks.
  std::string parameter_hash() const;

  int64_t iteration() const { return iteration_; }
  const RunConfig& config() const { return config_; }
  const Dataset& dataset() const { return *dataset_; }
  Generator& generator() { return generator_; }
  Discriminator& discriminator() { return discriminator_; }

 private:
  void build();
  [[noreturn]] void diverged(const StepMetrics& m) const;

  RunConfig config_;
  std::shared_ptr<const Dataset> dataset_;
  Generator generator_{nullptr};
  Discriminator discriminator_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  Rng rng_;
  int64_t iteration_ = 0;
};

struct TrainOptions {
  std::optional<std::filesystem::path> resume_from;
  /// Stop early after this many total iterations (simulates an interrupted run).
  std::optional<int64_t> stop_after;
  bool write_files = true;
  bool verbose = false;
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path loss_log;
  std::vector<StepMetrics> history;  // steps run by this call
  std::string parameter_hash;
  int64_t iterations = 0;
};

/// Full training loop: periodic checkpoints, CSV loss log, run manifest.
TrainResult train(const RunConfig& config, std::shared_ptr<const Dataset> dataset,
                  const TrainOptions& options = {});

/// Path recorded in <run>/checkpoints/LATEST.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

/// Loaded generator plus the config it was trained with.
struct LoadedGenerator {
  RunConfig config;
  Generator generator{nullptr};
  int64_t iteration = 0;
  std::string parameter_hash;
};

LoadedGenerator load_generator(const std::filesystem::path& checkpoint);

/// Config stored in a checkpoint manifest, without loading any weights.
RunConfig checkpoint_config(const std::filesystem::path& checkpoint);

/// Writes <dir>/manifest.json with the resolved config, seed and code version.
void write_run_manifest(const std::filesystem::path& dir, const RunConfig& config,
                        const std::string& command);

}  // namespace eqgan

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "eqgan/config.hpp"
#include "eqgan/data.hpp"
#include "eqgan/generator.hpp"
#include "eqgan/metrics.hpp"

namespace eqgan {

struct EvalOptions {
  int64_t per_category = 128;
  int64_t k = 3;
  uint64_t seed = 0;
  std::filesystem::path output_dir;  // empty: nothing written
  int64_t grid_images = 32;
  int64_t lpips_max_pairs = 0;  // 0: exhaustive pairing
  int64_t batch = 16;

  static EvalOptions from(const RunConfig& config);
};

struct CategoryScore {
  int64_t category_id = -1;
  std::string name;
  double fid = 0.0;
  double lpips = 0.0;
  int64_t conditioning_images = 0;
  int64_t reference_images = 0;
};

struct MetricReport {
  std::vector<CategoryScore> categories;
  double fid = 0.0;    // unweighted mean over categories
  double lpips = 0.0;  // unweighted mean over categories
  std::string checkpoint_hash;
  int64_t k = 0;
  int64_t per_category = 0;
  uint64_t seed = 0;
  std::string fid_embedder;
  std::string lpips_embedder;

  /// `category,name,fid,lpips,conditioning_images,reference_images`, one row per category.
  void write_csv(const std::filesystem::path& path) const;
  /// Aggregates and run metadata.
  void write_json(const std::filesystem::path& path) const;
};

/// Generates `per_category` images for every split category from K-image conditions drawn
/// out of `first` (C_u1), scores FID against `second` (C_u2) and diversity over the generated
/// set. Throws ValidationError if per_category < 2, a split overlaps, or a pool is too small.
MetricReport eval_generation(Generator& generator, const Dataset& dataset,
                             const std::vector<CategorySplit>& splits,
                             const metrics::Embedder& fid_embedder,
                             const metrics::Embedder& lpips_embedder, const EvalOptions& options);

/// Loads the checkpoint, loads the dataset described by `config`, splits its unseen
/// categories and runs eval_generation with embedders chosen by `config`.
MetricReport eval_checkpoint(const std::filesystem::path& checkpoint, const RunConfig& config,
                             const EvalOptions& options);

/// Generates `count` images for one category from tasks drawn out of `pool`.
torch::Tensor generate_for_category(Generator& generator, const Dataset& dataset,
                                    int64_t category_id, const std::vector<int64_t>& pool,
                                    int64_t count, int64_t k, Rng& rng, int64_t batch = 16);

struct SweepRow {
  int64_t k = 0;
  std::optional<double> fid;  // empty: no checkpoint for this K
  std::optional<double> lpips;
  std::string checkpoint;
};

inline const std::vector<int64_t> kDefaultShots{2, 3, 5, 7, 9};

using SweepEvaluator = std::function<MetricReport(const std::filesystem::path&, int64_t k)>;

/// One row per K; a K without an existing checkpoint becomes a gap.
std::vector<SweepRow> shot_sweep(const std::map<int64_t, std::filesystem::path>& checkpoints,
                                 const std::vector<int64_t>& shots, const SweepEvaluator& evaluate);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
/// Line plot of FID against K; gaps break the line.
void write_sweep_svg(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

/// Channel-mean heatmap of every encoder block (B0-B4) for every image, at native resolution.
/// Files are `<prefix><n>_B<b>.png`.
std::vector<std::filesystem::path> dump_feature_maps(Generator& generator,
                                                     const torch::Tensor& images,
                                                     const std::filesystem::path& out_dir,
                                                     const std::string& prefix = "image");

}  // namespace eqgan

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "eqgan/data.hpp"

namespace eqgan::fusion {

/// Norm floor used by the cosine similarity.
inline constexpr double kSimilarityEps = 1e-8;

/// Mixing weights, base selection and (after a fusion pass) the matched reference positions.
///
/// References are the images k != base_index in ascending order; `match_indices[r]` holds, for
/// every flat base position i in [0, grid_h * grid_w), the flat reference position whose channel
/// vector was most similar.
struct FusionPlan {
  std::vector<double> alpha;
  int64_t base_index = 0;
  std::vector<std::vector<int64_t>> match_indices;
  int64_t grid_h = 0;
  int64_t grid_w = 0;

  int64_t shots() const { return static_cast<int64_t>(alpha.size()); }
  std::vector<int64_t> reference_indices() const;
  bool has_matches() const { return !match_indices.empty(); }

  /// Throws ValidationError unless alpha lies on the simplex and base_index is valid for K.
  void validate(int64_t k) const;
  /// Validates match_indices against the current grid.
  void validate_matches() const;

  /// Debug record for test replay.
  std::string to_json() const;
  static FusionPlan from_json(const std::string& text);

  bool operator==(const FusionPlan&) const = default;
};

/// alpha ~ Dirichlet(1, ..., 1), base uniform over [0, K).
FusionPlan sample_plan(int64_t k, Rng& rng);

/// Plan with all weight on `base`.
FusionPlan one_hot_plan(int64_t k, int64_t base);

/// (h*w x h*w) cosine similarity between the channel vectors of two (c x h x w) maps;
/// entry (i, j) compares base position i with reference position j.
torch::Tensor similarity_map(const torch::Tensor& base, const torch::Tensor& ref);

/// For every reference, argmax_j similarity(base_i, ref_j) with ties going to the lowest j.
std::vector<std::vector<int64_t>> match_positions(const torch::Tensor& features, int64_t base_index);

/// Fused (c x h x w) map for fixed matches. Differentiable w.r.t. `features`; the matched
/// indices are constants.
torch::Tensor fuse_with_matches(const torch::Tensor& features, const FusionPlan& plan);

struct LocalFuseResult {
  torch::Tensor fused;  // c x h x w
  FusionPlan plan;      // input plan with match_indices and grid filled in
};

/// Local fusion of K (K x c x h x w) features around the plan's base feature.
LocalFuseResult local_fuse(const torch::Tensor& features, const FusionPlan& plan);

/// local_fuse over B tasks packed as (B*K x c x h x w); returns (B x c x h x w).
torch::Tensor local_fuse_batch(const torch::Tensor& features, std::vector<FusionPlan>& plans);

/// Encoder outputs E_1..E_5, shallow to deep.
struct FeaturePyramid {
  std::vector<torch::Tensor> levels;
  /// Throws ValidationError unless there are 5 rank-4 levels sharing a leading dim with
  /// strictly decreasing spatial size.
  void validate() const;
};

struct BranchFeatures {
  torch::Tensor texture;    // K x c_te x h_te x w_te, from levels 1-3
  torch::Tensor structure;  // K x c_st x h_st x w_st, from levels 4-5
};

struct EqualizedFeatures {
  torch::Tensor f_eq;                    // B x c_eq x h_eq x w_eq
  std::vector<torch::Tensor> per_level;  // 5 tensors matching encoder level dims
};

/// Spatial and channel layout shared by the generator and the fusion module.
struct ScalePlan {
  std::array<int64_t, 5> channels{};
  std::array<int64_t, 5> level_sizes{};  // encoder output sizes, image_size / 2^(i+1)
  int64_t texture_channels = 0;
  int64_t structure_channels = 0;
  int64_t equalized_channels = 0;
  int64_t texture_size = 0;    // encoder block-3 scale
  int64_t structure_size = 0;  // encoder block-4 scale
  int64_t equalized_size = 0;  // decoder block-3 scale (image_size / 4)

  static ScalePlan from(const std::array<int64_t, 5>& channels, int64_t image_size);
};

/// ConvDown_i (levels 1-3) and ConvUp_i (levels 4-5) summed into the two branches.
class ReorganizeImpl : public torch::nn::Module {
 public:
  explicit ReorganizeImpl(const ScalePlan& plan);
  BranchFeatures forward(const FeaturePyramid& pyramid);
  torch::Tensor texture(const FeaturePyramid& pyramid);
  torch::Tensor structure(const FeaturePyramid& pyramid);

 private:
  ScalePlan plan_;
  std::array<torch::nn::Sequential, 3> down_;
  std::array<torch::nn::Sequential, 2> up_;
};
TORCH_MODULE(Reorganize);

enum class PaddingMode { zeros, reflect };

struct MultiScaleOptions {
  int64_t channels = 0;
  int64_t height = 0;  // branch spatial dims the module will see
  int64_t width = 0;
  PaddingMode padding = PaddingMode::zeros;
  double leaky_slope = 0.2;
  std::array<int64_t, 3> kernels{3, 5, 7};
  int64_t depth = 5;  // convolutions per stream
};

/// Three parallel same-kernel streams, concatenated and projected back by a 1x1 convolution.
/// Spatial size is preserved. Throws ConfigError when the padding plan cannot cover a kernel at
/// the configured spatial size.
class MultiScaleImpl : public torch::nn::Module {
 public:
  explicit MultiScaleImpl(const MultiScaleOptions& options);
  torch::Tensor forward(const torch::Tensor& x);
  const MultiScaleOptions& options() const { return options_; }

 private:
  MultiScaleOptions options_;
  std::vector<torch::nn::Sequential> streams_;
  torch::nn::Conv2d project_{nullptr};
};
TORCH_MODULE(MultiScale);

struct SemanticFuseResult {
  torch::Tensor texture;    // c_te x h x w (or B x ... for the batched form)
  torch::Tensor structure;  // c_st x h x w
  FusionPlan texture_plan;
  FusionPlan structure_plan;
};

/// Multi-scale representation of each branch followed by local fusion with the shared plan.
SemanticFuseResult semantic_fuse(MultiScale& texture_streams, MultiScale& structure_streams,
                                 const BranchFeatures& branches, const FusionPlan& plan);

/// Concatenates resampled fused texture/structure, projects to F_eq, then produces per-level
/// skip tensors (nearest resampling + 1x1 projection).
class EqualizerImpl : public torch::nn::Module {
 public:
  explicit EqualizerImpl(const ScalePlan& plan);
  EqualizedFeatures forward(const torch::Tensor& texture, const torch::Tensor& structure);
  torch::Tensor equalize(const torch::Tensor& texture, const torch::Tensor& structure);
  std::vector<torch::Tensor> per_level(const torch::Tensor& f_eq);

 private:
  ScalePlan plan_;
  torch::nn::Conv2d project_{nullptr};
  std::vector<torch::nn::Conv2d> level_projections_;
};
TORCH_MODULE(Equalizer);

}  // namespace eqgan::fusion

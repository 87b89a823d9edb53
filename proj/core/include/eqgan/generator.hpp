#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "eqgan/data.hpp"
#include "eqgan/fusion.hpp"

namespace eqgan {

struct GeneratorConfig {
  std::array<int64_t, 5> channel_plan{32, 64, 128, 256, 512};
  int64_t image_size = 128;
  double leaky_slope = 0.2;
  /// Ablation switches: when false, the fused texture (resp. structure) branch is zeroed before
  /// equalization.
  bool texture_skips = true;
  bool structure_skips = true;
  fusion::PaddingMode multi_scale_padding = fusion::PaddingMode::zeros;

  /// Throws ConfigError for sizes not divisible by 2^5 or non-positive widths.
  void validate() const;
  fusion::ScalePlan scale_plan() const;
  bool equalization_active() const { return texture_skips || structure_skips; }
};

struct GeneratorOutput {
  torch::Tensor images;                // B x 3 x S x S, in [-1, 1]
  torch::Tensor decoder_intermediate;  // F_H3: B x c_2 x S/4 x S/4
  std::vector<fusion::FusionPlan> plans;  // bottleneck fusion, one per task (replayed by L_rec)
  std::vector<fusion::FusionPlan> texture_plans;
  std::vector<fusion::FusionPlan> structure_plans;
  fusion::EqualizedFeatures equalized;
};

/// F_H3 of a completed forward pass. Throws UsageError on a default-constructed output.
torch::Tensor decoder_intermediate(const GeneratorOutput& output);

/// Debug switches for probing the skip wiring.
struct GenerateOptions {
  bool zero_encoder_skips = false;
  bool zero_equalized_skips = false;
};

/// Encoder-decoder generator: five stride-2 encoder blocks, local fusion of the deepest
/// features as the bottleneck, texture/structure equalization fusion, and five upsampling
/// decoder blocks whose skip inputs are [H_i, E_i(x_base) + EqBlock_i].
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig config);

  /// (N x 3 x S x S) -> five-level pyramid.
  fusion::FeaturePyramid encode(const torch::Tensor& images);

  /// tasks: (B x K x 3 x S x S); one plan per task.
  GeneratorOutput generate(const torch::Tensor& tasks, const std::vector<fusion::FusionPlan>& plans,
                           const GenerateOptions& options = {});
  GeneratorOutput generate(const ImageBatch& batch, const fusion::FusionPlan& plan);

  const GeneratorConfig& config() const { return config_; }

 private:
  GeneratorConfig config_;
  fusion::ScalePlan scale_;
  std::vector<torch::nn::Sequential> encoder_;
  std::vector<torch::nn::Sequential> decoder_;
  fusion::Reorganize reorganize_{nullptr};
  fusion::MultiScale texture_streams_{nullptr};
  fusion::MultiScale structure_streams_{nullptr};
  fusion::Equalizer equalizer_{nullptr};
};
TORCH_MODULE(Generator);

}  // namespace eqgan

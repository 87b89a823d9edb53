#pragma once

#include <array>
#include <cstdint>

#include <torch/torch.h>

namespace eqgan {

/// Conv2d whose weight is divided by its largest singular value, estimated by one power
/// iteration per training-mode forward. `weight_orig` is the trained parameter.
class SpectralConv2dImpl : public torch::nn::Module {
 public:
  SpectralConv2dImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride, int64_t padding);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor normalized_weight();

 private:
  int64_t stride_;
  int64_t padding_;
  torch::Tensor weight_orig_;
  torch::Tensor bias_;
  torch::Tensor u_;
  torch::Tensor v_;
};
TORCH_MODULE(SpectralConv2d);

class SpectralLinearImpl : public torch::nn::Module {
 public:
  SpectralLinearImpl(int64_t in, int64_t out);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor normalized_weight();

 private:
  torch::Tensor weight_orig_;
  torch::Tensor bias_;
  torch::Tensor u_;
  torch::Tensor v_;
};
TORCH_MODULE(SpectralLinear);

struct DiscriminatorConfig {
  std::array<int64_t, 5> channel_plan{32, 64, 128, 256, 512};
  int64_t image_size = 128;
  int64_t num_classes = 1;
  double leaky_slope = 0.2;

  void validate() const;
};

struct DiscriminatorOutput {
  torch::Tensor realness;      // N
  torch::Tensor class_logits;  // N x num_classes, unnormalised
};

/// Five stride-2 spectrally normalised conv blocks, global sum pooling, realness and
/// auxiliary-classifier heads.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig config);
  DiscriminatorOutput forward(const torch::Tensor& images);
  const DiscriminatorConfig& config() const { return config_; }

 private:
  DiscriminatorConfig config_;
  std::vector<SpectralConv2d> blocks_;
  SpectralLinear realness_{nullptr};
  SpectralLinear classifier_{nullptr};
};
TORCH_MODULE(Discriminator);

}  // namespace eqgan

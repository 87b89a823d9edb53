#include "eqgan/discriminator.hpp"

#include <cmath>

#include "eqgan/errors.hpp"

namespace F = torch::nn::functional;

namespace eqgan {

namespace {

torch::Tensor unit(const torch::Tensor& v) {
  return F::normalize(v, F::NormalizeFuncOptions().dim(0).eps(1e-12));
}

// One power-iteration step (training only), then W / sigma with sigma = u^T W v.
torch::Tensor spectral_normalize(const torch::Tensor& weight, torch::Tensor& u, torch::Tensor& v,
                                 bool training) {
  const auto mat = weight.reshape({weight.size(0), -1});
  if (training) {
    torch::NoGradGuard no_grad;
    v.copy_(unit(torch::mv(mat.detach().t(), u)));
    u.copy_(unit(torch::mv(mat.detach(), v)));
  }
  // Clones keep the autograd graph valid when a later forward updates the buffers in place.
  const auto sigma = torch::dot(u.clone(), torch::mv(mat, v.clone()));
  return weight / sigma;
}

void init_uniform(torch::Tensor& weight, torch::Tensor& bias, int64_t fan_in) {
  torch::NoGradGuard no_grad;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  torch::nn::init::kaiming_uniform_(weight, std::sqrt(5.0));
  bias.uniform_(-bound, bound);
}

}  // namespace

SpectralConv2dImpl::SpectralConv2dImpl(int64_t in, int64_t out, int64_t kernel, int64_t stride,
                                       int64_t padding)
    : stride_(stride), padding_(padding) {
  weight_orig_ = register_parameter("weight_orig", torch::empty({out, in, kernel, kernel}));
  bias_ = register_parameter("bias", torch::empty({out}));
  init_uniform(weight_orig_, bias_, in * kernel * kernel);
  u_ = register_buffer("u", unit(torch::randn({out})));
  v_ = register_buffer("v", unit(torch::randn({in * kernel * kernel})));
}

torch::Tensor SpectralConv2dImpl::normalized_weight() {
  return spectral_normalize(weight_orig_, u_, v_, is_training());
}

torch::Tensor SpectralConv2dImpl::forward(const torch::Tensor& x) {
  return F::conv2d(x, normalized_weight(),
                   F::Conv2dFuncOptions().bias(bias_).stride(stride_).padding(padding_));
}

SpectralLinearImpl::SpectralLinearImpl(int64_t in, int64_t out) {
  weight_orig_ = register_parameter("weight_orig", torch::empty({out, in}));
  bias_ = register_parameter("bias", torch::empty({out}));
  init_uniform(weight_orig_, bias_, in);
  u_ = register_buffer("u", unit(torch::randn({out})));
  v_ = register_buffer("v", unit(torch::randn({in})));
}

torch::Tensor SpectralLinearImpl::normalized_weight() {
  return spectral_normalize(weight_orig_, u_, v_, is_training());
}

torch::Tensor SpectralLinearImpl::forward(const torch::Tensor& x) {
  return F::linear(x, normalized_weight(), bias_);
}

void DiscriminatorConfig::validate() const {
  if (image_size <= 0 || image_size % 32 != 0) {
    throw ConfigError("discriminator image size must be a positive multiple of 32");
  }
  if (num_classes <= 0) throw ConfigError("discriminator needs at least one class");
  for (int64_t c : channel_plan) {
    if (c <= 0) throw ConfigError("discriminator channel plan entries must be positive");
  }
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig config) : config_(config) {
  config_.validate();
  int64_t in = 3;
  for (int i = 0; i < 5; ++i) {
    blocks_.push_back(register_module("block" + std::to_string(i + 1),
                                      SpectralConv2d(in, config_.channel_plan[i], 4, 2, 1)));
    in = config_.channel_plan[i];
  }
  realness_ = register_module("realness", SpectralLinear(in, 1));
  classifier_ = register_module("classifier", SpectralLinear(in, config_.num_classes));
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw ValidationError("discriminator expects N x 3 x H x W images");
  }
  if (images.size(2) != config_.image_size || images.size(3) != config_.image_size) {
    throw ValidationError("discriminator was built for " + std::to_string(config_.image_size) +
                          "x" + std::to_string(config_.image_size) + " images");
  }
  auto x = images;
  for (auto& block : blocks_) {
    x = F::leaky_relu(block->forward(x), F::LeakyReLUFuncOptions().negative_slope(config_.leaky_slope));
  }
  const auto pooled = x.sum({2, 3});
  return {realness_->forward(pooled).squeeze(1), classifier_->forward(pooled)};
}

}  // namespace eqgan

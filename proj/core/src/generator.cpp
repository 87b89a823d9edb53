#include "eqgan/generator.hpp"

#include "eqgan/errors.hpp"

namespace nn = torch::nn;

namespace eqgan {

void GeneratorConfig::validate() const {
  if (image_size <= 0 || image_size % 32 != 0) {
    throw ConfigError("image size " + std::to_string(image_size) +
                      " is not divisible by 2^5 (five stride-2 blocks)");
  }
  for (int64_t c : channel_plan) {
    if (c <= 0) throw ConfigError("channel plan entries must be positive");
  }
}

fusion::ScalePlan GeneratorConfig::scale_plan() const {
  return fusion::ScalePlan::from(channel_plan, image_size);
}

torch::Tensor decoder_intermediate(const GeneratorOutput& output) {
  if (!output.decoder_intermediate.defined()) {
    throw UsageError("decoder intermediate requested before a forward pass");
  }
  return output.decoder_intermediate;
}

namespace {

nn::LeakyReLU leaky(double slope) {
  return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(slope));
}

nn::Sequential down_block(int64_t in, int64_t out, double slope) {
  return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(2).padding(1).bias(false)),
                        nn::BatchNorm2d(out), leaky(slope));
}

nn::Sequential up_block(int64_t in, int64_t out, double slope) {
  return nn::Sequential(
      nn::Upsample(nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(
          torch::kNearest)),
      nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).bias(false)), nn::BatchNorm2d(out),
      leaky(slope));
}

}  // namespace

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(config) {
  config_.validate();
  scale_ = config_.scale_plan();
  const auto& ch = config_.channel_plan;
  const double slope = config_.leaky_slope;

  int64_t in = 3;
  for (int i = 0; i < 5; ++i) {
    encoder_.push_back(register_module("enc" + std::to_string(i + 1), down_block(in, ch[i], slope)));
    in = ch[i];
  }

  // Decoder block d consumes the previous output concatenated with the level-(5-d) skip.
  decoder_.push_back(register_module("dec1", up_block(ch[4], ch[3], slope)));
  decoder_.push_back(register_module("dec2", up_block(2 * ch[3], ch[2], slope)));
  decoder_.push_back(register_module("dec3", up_block(2 * ch[2], ch[1], slope)));
  decoder_.push_back(register_module("dec4", up_block(2 * ch[1], ch[0], slope)));
  auto last = up_block(2 * ch[0], ch[0], slope);
  last->push_back(nn::Conv2d(nn::Conv2dOptions(ch[0], 3, 3).padding(1)));
  last->push_back(nn::Tanh());
  decoder_.push_back(register_module("dec5", last));

  reorganize_ = register_module("reorganize", fusion::Reorganize(scale_));
  texture_streams_ = register_module(
      "texture_streams",
      fusion::MultiScale(fusion::MultiScaleOptions{scale_.texture_channels, scale_.texture_size,
                                                   scale_.texture_size,
                                                   config_.multi_scale_padding, slope}));
  structure_streams_ = register_module(
      "structure_streams",
      fusion::MultiScale(fusion::MultiScaleOptions{scale_.structure_channels,
                                                   scale_.structure_size, scale_.structure_size,
                                                   config_.multi_scale_padding, slope}));
  equalizer_ = register_module("equalizer", fusion::Equalizer(scale_));
}

fusion::FeaturePyramid GeneratorImpl::encode(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw ValidationError("encode expects N x 3 x H x W images");
  }
  if (images.size(2) % 32 != 0 || images.size(3) % 32 != 0) {
    throw ConfigError("image size " + std::to_string(images.size(2)) + "x" +
                      std::to_string(images.size(3)) + " is not divisible by 2^5");
  }
  if (images.size(2) != config_.image_size || images.size(3) != config_.image_size) {
    throw ValidationError("input is " + std::to_string(images.size(2)) + "x" +
                          std::to_string(images.size(3)) + ", generator was built for " +
                          std::to_string(config_.image_size));
  }
  fusion::FeaturePyramid pyramid;
  auto x = images;
  for (auto& block : encoder_) {
    x = block->forward(x);
    pyramid.levels.push_back(x);
  }
  return pyramid;
}

GeneratorOutput GeneratorImpl::generate(const torch::Tensor& tasks,
                                        const std::vector<fusion::FusionPlan>& plans,
                                        const GenerateOptions& options) {
  if (tasks.dim() != 5) throw ValidationError("generate expects B x K x 3 x H x W tasks");
  const int64_t batch = tasks.size(0);
  const int64_t k = tasks.size(1);
  if (static_cast<int64_t>(plans.size()) != batch) {
    throw ValidationError("generate needs one fusion plan per task");
  }
  for (const auto& plan : plans) plan.validate(k);

  auto pyramid = encode(tasks.flatten(0, 1));

  std::vector<int64_t> base_rows;
  for (int64_t b = 0; b < batch; ++b) base_rows.push_back(b * k + plans[b].base_index);
  const auto base_index = torch::tensor(base_rows, torch::kLong);

  GeneratorOutput out;
  out.plans = plans;
  auto bottleneck = fusion::local_fuse_batch(pyramid.levels[4], out.plans);

  // Texture/structure fusion. A disabled branch contributes zeros to F_eq.
  torch::Tensor texture;
  torch::Tensor structure;
  if (config_.texture_skips) {
    out.texture_plans = plans;
    texture = fusion::local_fuse_batch(texture_streams_->forward(reorganize_->texture(pyramid)),
                                       out.texture_plans);
  } else {
    texture = torch::zeros({batch, scale_.texture_channels, scale_.texture_size,
                            scale_.texture_size},
                           tasks.options());
  }
  if (config_.structure_skips) {
    out.structure_plans = plans;
    structure = fusion::local_fuse_batch(
        structure_streams_->forward(reorganize_->structure(pyramid)), out.structure_plans);
  } else {
    structure = torch::zeros({batch, scale_.structure_channels, scale_.structure_size,
                              scale_.structure_size},
                             tasks.options());
  }
  out.equalized = equalizer_->forward(texture, structure);

  const bool use_eq = config_.equalization_active() && !options.zero_equalized_skips;
  auto skip = [&](int level) {
    auto base = pyramid.levels[level].index_select(0, base_index);
    if (options.zero_encoder_skips) base = torch::zeros_like(base);
    return use_eq ? base + out.equalized.per_level[level] : base;
  };

  auto h = use_eq ? bottleneck + out.equalized.per_level[4] : bottleneck;
  h = decoder_[0]->forward(h);
  h = decoder_[1]->forward(torch::cat({h, skip(3)}, 1));
  h = decoder_[2]->forward(torch::cat({h, skip(2)}, 1));
  out.decoder_intermediate = h;
  h = decoder_[3]->forward(torch::cat({h, skip(1)}, 1));
  out.images = decoder_[4]->forward(torch::cat({h, skip(0)}, 1));
  return out;
}

GeneratorOutput GeneratorImpl::generate(const ImageBatch& batch, const fusion::FusionPlan& plan) {
  return generate(batch.images.unsqueeze(0), {plan});
}

}  // namespace eqgan

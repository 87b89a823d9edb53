#include "eqgan/fusion.hpp"

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "eqgan/errors.hpp"

namespace F = torch::nn::functional;

namespace eqgan::fusion {

std::vector<int64_t> FusionPlan::reference_indices() const {
  std::vector<int64_t> refs;
  for (int64_t k = 0; k < shots(); ++k) {
    if (k != base_index) refs.push_back(k);
  }
  return refs;
}

void FusionPlan::validate(int64_t k) const {
  if (k < 2) throw ValidationError("local fusion needs K >= 2 features");
  if (shots() != k) {
    throw ValidationError("fusion plan has " + std::to_string(shots()) + " weights for K=" +
                          std::to_string(k));
  }
  if (base_index < 0 || base_index >= k) {
    throw ValidationError("fusion plan base index " + std::to_string(base_index) +
                          " out of range for K=" + std::to_string(k));
  }
  double sum = 0.0;
  for (double a : alpha) {
    if (!std::isfinite(a) || a < 0.0) throw ValidationError("fusion weights must be non-negative");
    sum += a;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ValidationError("fusion weights must sum to 1, got " + std::to_string(sum));
  }
}

void FusionPlan::validate_matches() const {
  if (!has_matches()) throw UsageError("fusion plan carries no match indices");
  const int64_t positions = grid_h * grid_w;
  if (static_cast<int64_t>(match_indices.size()) != shots() - 1) {
    throw ValidationError("fusion plan needs one match list per reference");
  }
  for (const auto& matches : match_indices) {
    if (static_cast<int64_t>(matches.size()) != positions) {
      throw ValidationError("match list length does not equal grid size");
    }
    for (int64_t j : matches) {
      if (j < 0 || j >= positions) throw ValidationError("match index outside the feature grid");
    }
  }
}

std::string FusionPlan::to_json() const {
  nlohmann::json j;
  j["alpha"] = alpha;
  j["base_index"] = base_index;
  j["grid"] = {grid_h, grid_w};
  j["match_indices"] = match_indices;
  return j.dump();
}

FusionPlan FusionPlan::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  FusionPlan plan;
  plan.alpha = j.at("alpha").get<std::vector<double>>();
  plan.base_index = j.at("base_index").get<int64_t>();
  plan.grid_h = j.at("grid").at(0).get<int64_t>();
  plan.grid_w = j.at("grid").at(1).get<int64_t>();
  plan.match_indices = j.at("match_indices").get<std::vector<std::vector<int64_t>>>();
  return plan;
}

FusionPlan sample_plan(int64_t k, Rng& rng) {
  if (k < 2) throw SamplingError("fusion plan needs K >= 2");
  // Normalised unit-rate exponentials are uniform on the simplex.
  std::exponential_distribution<double> unit_exp(1.0);
  FusionPlan plan;
  plan.alpha.resize(k);
  double sum = 0.0;
  for (auto& a : plan.alpha) {
    a = unit_exp(rng);
    sum += a;
  }
  for (auto& a : plan.alpha) a /= sum;
  std::uniform_int_distribution<int64_t> pick(0, k - 1);
  plan.base_index = pick(rng);
  return plan;
}

FusionPlan one_hot_plan(int64_t k, int64_t base) {
  FusionPlan plan;
  plan.alpha.assign(k, 0.0);
  plan.alpha.at(base) = 1.0;
  plan.base_index = base;
  return plan;
}

namespace {

torch::Tensor unit_columns(const torch::Tensor& map) {
  auto flat = map.reshape({map.size(0), -1});
  return flat / flat.norm(2, 0, true).clamp_min(kSimilarityEps);
}

void check_feature_stack(const torch::Tensor& features) {
  if (features.dim() != 4) {
    throw ValidationError("local fusion expects a K x c x h x w feature stack");
  }
}

}  // namespace

torch::Tensor similarity_map(const torch::Tensor& base, const torch::Tensor& ref) {
  if (base.dim() != 3 || base.sizes() != ref.sizes()) {
    throw ValidationError("similarity_map expects two c x h x w maps of identical shape");
  }
  return unit_columns(base).t().matmul(unit_columns(ref));
}

std::vector<std::vector<int64_t>> match_positions(const torch::Tensor& features,
                                                  int64_t base_index) {
  check_feature_stack(features);
  torch::NoGradGuard no_grad;
  const auto detached = features.detach();
  const auto base = unit_columns(detached[base_index]);
  std::vector<std::vector<int64_t>> matches;
  for (int64_t k = 0; k < features.size(0); ++k) {
    if (k == base_index) continue;
    // argmax returns the first maximal index, which gives the lowest-index tie break.
    auto best = base.t().matmul(unit_columns(detached[k])).argmax(1).contiguous();
    const auto* p = best.data_ptr<int64_t>();
    matches.emplace_back(p, p + best.numel());
  }
  return matches;
}

torch::Tensor fuse_with_matches(const torch::Tensor& features, const FusionPlan& plan) {
  check_feature_stack(features);
  plan.validate(features.size(0));
  plan.validate_matches();
  if (plan.grid_h != features.size(2) || plan.grid_w != features.size(3)) {
    throw ValidationError("fusion plan grid does not match the feature map");
  }
  const int64_t c = features.size(1);
  const auto base = features[plan.base_index].reshape({c, -1});
  // base + sum_r alpha_r (ref_r(j*) - base)
  auto fused = base;
  const auto refs = plan.reference_indices();
  for (size_t r = 0; r < refs.size(); ++r) {
    const double weight = plan.alpha[refs[r]];
    if (weight == 0.0) continue;
    auto index = torch::tensor(plan.match_indices[r], torch::kLong);
    auto gathered = features[refs[r]].reshape({c, -1}).index_select(1, index);
    fused = fused + weight * (gathered - base);
  }
  return fused.reshape({c, features.size(2), features.size(3)});
}

LocalFuseResult local_fuse(const torch::Tensor& features, const FusionPlan& plan) {
  check_feature_stack(features);
  plan.validate(features.size(0));
  LocalFuseResult result;
  result.plan = plan;
  result.plan.grid_h = features.size(2);
  result.plan.grid_w = features.size(3);
  result.plan.match_indices = match_positions(features, plan.base_index);
  result.fused = fuse_with_matches(features, result.plan);
  return result;
}

torch::Tensor local_fuse_batch(const torch::Tensor& features, std::vector<FusionPlan>& plans) {
  check_feature_stack(features);
  const int64_t tasks = static_cast<int64_t>(plans.size());
  if (tasks == 0 || features.size(0) % tasks != 0) {
    throw ValidationError("feature batch is not a whole number of tasks");
  }
  const int64_t k = features.size(0) / tasks;
  std::vector<torch::Tensor> fused;
  fused.reserve(tasks);
  for (int64_t b = 0; b < tasks; ++b) {
    auto result = local_fuse(features.narrow(0, b * k, k), plans[b]);
    plans[b] = std::move(result.plan);
    fused.push_back(result.fused);
  }
  return torch::stack(fused);
}

void FeaturePyramid::validate() const {
  if (levels.size() != 5) {
    throw ValidationError("feature pyramid must have exactly 5 levels, got " +
                          std::to_string(levels.size()));
  }
  for (size_t i = 0; i < levels.size(); ++i) {
    const auto& level = levels[i];
    if (!level.defined() || level.dim() != 4) {
      throw ValidationError("pyramid level " + std::to_string(i + 1) + " is not rank-4");
    }
    if (level.size(0) != levels[0].size(0)) {
      throw ValidationError("pyramid levels disagree on the leading dimension");
    }
    if (i > 0 && (level.size(2) >= levels[i - 1].size(2) || level.size(3) >= levels[i - 1].size(3))) {
      throw ValidationError("pyramid spatial size must strictly decrease with depth");
    }
  }
}

ScalePlan ScalePlan::from(const std::array<int64_t, 5>& channels, int64_t image_size) {
  ScalePlan plan;
  plan.channels = channels;
  for (int i = 0; i < 5; ++i) plan.level_sizes[i] = image_size >> (i + 1);
  plan.texture_channels = channels[2];
  plan.structure_channels = channels[3];
  plan.equalized_channels = channels[1];
  plan.texture_size = plan.level_sizes[2];
  plan.structure_size = plan.level_sizes[3];
  plan.equalized_size = image_size / 4;
  return plan;
}

namespace {

// Learned resampling by an integer power-of-two factor; factor 1 is a 3x3 convolution.
torch::nn::Sequential resample_conv(int64_t in, int64_t out, int64_t from_size, int64_t to_size) {
  torch::nn::Sequential seq;
  if (from_size == to_size) {
    seq->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)));
  } else if (from_size > to_size) {
    const int64_t factor = from_size / to_size;
    seq->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, factor).stride(factor)));
  } else {
    const int64_t factor = to_size / from_size;
    seq->push_back(torch::nn::ConvTranspose2d(
        torch::nn::ConvTranspose2dOptions(in, out, factor).stride(factor)));
  }
  return seq;
}

}  // namespace

ReorganizeImpl::ReorganizeImpl(const ScalePlan& plan) : plan_(plan) {
  for (int i = 0; i < 3; ++i) {
    down_[i] = register_module("conv_down" + std::to_string(i + 1),
                               resample_conv(plan.channels[i], plan.texture_channels,
                                             plan.level_sizes[i], plan.texture_size));
  }
  for (int i = 0; i < 2; ++i) {
    up_[i] = register_module("conv_up" + std::to_string(i + 4),
                             resample_conv(plan.channels[i + 3], plan.structure_channels,
                                           plan.level_sizes[i + 3], plan.structure_size));
  }
}

torch::Tensor ReorganizeImpl::texture(const FeaturePyramid& pyramid) {
  pyramid.validate();
  auto sum = down_[0]->forward(pyramid.levels[0]);
  for (int i = 1; i < 3; ++i) {
    auto term = down_[i]->forward(pyramid.levels[i]);
    TORCH_INTERNAL_ASSERT(term.sizes() == sum.sizes(), "texture terms disagree in shape");
    sum = sum + term;
  }
  return sum;
}

torch::Tensor ReorganizeImpl::structure(const FeaturePyramid& pyramid) {
  pyramid.validate();
  auto sum = up_[0]->forward(pyramid.levels[3]);
  auto term = up_[1]->forward(pyramid.levels[4]);
  TORCH_INTERNAL_ASSERT(term.sizes() == sum.sizes(), "structure terms disagree in shape");
  return sum + term;
}

BranchFeatures ReorganizeImpl::forward(const FeaturePyramid& pyramid) {
  return {texture(pyramid), structure(pyramid)};
}

MultiScaleImpl::MultiScaleImpl(const MultiScaleOptions& options) : options_(options) {
  if (options.channels <= 0) throw ConfigError("multi-scale block needs a positive channel count");
  if (options.depth <= 0) throw ConfigError("multi-scale streams need at least one convolution");
  for (int64_t kernel : options.kernels) {
    if (kernel % 2 == 0) throw ConfigError("multi-scale kernels must be odd");
    const int64_t pad = kernel / 2;
    if (options.padding == PaddingMode::reflect &&
        (pad >= options.height || pad >= options.width)) {
      throw ConfigError("reflect padding of " + std::to_string(pad) + " cannot cover a " +
                        std::to_string(kernel) + "x" + std::to_string(kernel) + " kernel on a " +
                        std::to_string(options.height) + "x" + std::to_string(options.width) +
                        " branch");
    }
  }
  torch::nn::detail::conv_padding_mode_t mode = torch::kZeros;
  if (options.padding == PaddingMode::reflect) mode = torch::kReflect;
  for (size_t s = 0; s < options.kernels.size(); ++s) {
    const int64_t kernel = options.kernels[s];
    torch::nn::Sequential stream;
    for (int64_t d = 0; d < options.depth; ++d) {
      stream->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(options.channels,
                                                                   options.channels, kernel)
                                              .padding(kernel / 2)
                                              .padding_mode(mode)));
      stream->push_back(
          torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(options.leaky_slope)));
    }
    streams_.push_back(register_module("stream" + std::to_string(kernel), stream));
  }
  project_ = register_module(
      "project",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(
          options.channels * static_cast<int64_t>(options.kernels.size()), options.channels, 1)));
}

torch::Tensor MultiScaleImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != options_.channels) {
    throw ValidationError("multi-scale block expects N x " + std::to_string(options_.channels) +
                          " x h x w input");
  }
  std::vector<torch::Tensor> outs;
  outs.reserve(streams_.size());
  for (auto& stream : streams_) outs.push_back(stream->forward(x));
  return project_->forward(torch::cat(outs, 1));
}

SemanticFuseResult semantic_fuse(MultiScale& texture_streams, MultiScale& structure_streams,
                                 const BranchFeatures& branches, const FusionPlan& plan) {
  auto texture = local_fuse(texture_streams->forward(branches.texture), plan);
  auto structure = local_fuse(structure_streams->forward(branches.structure), plan);
  return {texture.fused, structure.fused, std::move(texture.plan), std::move(structure.plan)};
}

EqualizerImpl::EqualizerImpl(const ScalePlan& plan) : plan_(plan) {
  project_ = register_module(
      "project", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                     plan.texture_channels + plan.structure_channels, plan.equalized_channels, 1)));
  for (int i = 0; i < 5; ++i) {
    level_projections_.push_back(register_module(
        "level" + std::to_string(i + 1),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(plan.equalized_channels, plan.channels[i], 1))));
  }
}

namespace {

torch::Tensor nearest(const torch::Tensor& x, int64_t size) {
  if (x.size(2) == size && x.size(3) == size) return x;
  return F::interpolate(
      x, F::InterpolateFuncOptions().size(std::vector<int64_t>{size, size}).mode(torch::kNearest));
}

torch::Tensor as_batch(const torch::Tensor& x) {
  if (x.dim() == 3) return x.unsqueeze(0);
  if (x.dim() == 4) return x;
  throw ValidationError("equalize expects rank-3 or rank-4 branch features");
}

}  // namespace

torch::Tensor EqualizerImpl::equalize(const torch::Tensor& texture, const torch::Tensor& structure) {
  auto te = as_batch(texture);
  auto st = as_batch(structure);
  if (te.size(1) != plan_.texture_channels || st.size(1) != plan_.structure_channels ||
      te.size(0) != st.size(0)) {
    throw ValidationError("equalize: branch channel counts do not match the scale plan");
  }
  auto joined = torch::cat({nearest(te, plan_.equalized_size), nearest(st, plan_.equalized_size)}, 1);
  return project_->forward(joined);
}

std::vector<torch::Tensor> EqualizerImpl::per_level(const torch::Tensor& f_eq) {
  std::vector<torch::Tensor> levels;
  levels.reserve(5);
  for (int i = 0; i < 5; ++i) {
    levels.push_back(level_projections_[i]->forward(nearest(f_eq, plan_.level_sizes[i])));
  }
  return levels;
}

EqualizedFeatures EqualizerImpl::forward(const torch::Tensor& texture,
                                         const torch::Tensor& structure) {
  EqualizedFeatures out;
  out.f_eq = equalize(texture, structure);
  out.per_level = per_level(out.f_eq);
  return out;
}

}  // namespace eqgan::fusion

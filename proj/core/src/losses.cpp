#include "eqgan/losses.hpp"

#include <cmath>

#include "eqgan/errors.hpp"

namespace eqgan::losses {

void LossWeights::validate() const {
  for (double w : {cls_g, rec_g, con_g, cls_d}) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ValidationError("loss weights must be finite and non-negative");
    }
  }
}

torch::Tensor consistent_equalization_loss(const torch::Tensor& f_eq, const torch::Tensor& f_h3) {
  if (f_eq.sizes() != f_h3.sizes()) {
    throw ValidationError("consistent equalization loss needs identically shaped tensors");
  }
  return (f_eq - f_h3).abs().mean();
}

namespace {

// Flat source pixel for every target pixel when cell `c` is replaced by reference cell
// matches[c], keeping the offset within the cell.
torch::Tensor pixel_sources(const std::vector<int64_t>& matches, int64_t grid_h, int64_t grid_w,
                            int64_t height, int64_t width) {
  const int64_t cell_h = height / grid_h;
  const int64_t cell_w = width / grid_w;
  const auto ys = torch::arange(height, torch::kLong);
  const auto xs = torch::arange(width, torch::kLong);
  const auto cells = (ys.div(cell_h, "floor").unsqueeze(1) * grid_w + xs.div(cell_w, "floor").unsqueeze(0));
  const auto matched = torch::tensor(matches, torch::kLong).index({cells});
  const auto src_y = matched.div(grid_w, "floor") * cell_h + ys.remainder(cell_h).unsqueeze(1);
  const auto src_x = matched.remainder(grid_w) * cell_w + xs.remainder(cell_w).unsqueeze(0);
  return (src_y * width + src_x).flatten();
}

}  // namespace

torch::Tensor replay_fusion(const torch::Tensor& images, const fusion::FusionPlan& plan) {
  if (images.dim() != 4) throw ValidationError("replay_fusion expects K x C x H x W images");
  plan.validate(images.size(0));
  plan.validate_matches();
  const int64_t channels = images.size(1);
  const int64_t height = images.size(2);
  const int64_t width = images.size(3);
  if (height % plan.grid_h != 0 || width % plan.grid_w != 0) {
    throw ValidationError("image size is not a multiple of the fusion grid");
  }
  const auto base = images[plan.base_index].reshape({channels, -1});
  auto target = base;
  const auto refs = plan.reference_indices();
  for (size_t r = 0; r < refs.size(); ++r) {
    const double weight = plan.alpha[refs[r]];
    if (weight == 0.0) continue;
    const auto src = pixel_sources(plan.match_indices[r], plan.grid_h, plan.grid_w, height, width);
    const auto gathered = images[refs[r]].reshape({channels, -1}).index_select(1, src);
    target = target + weight * (gathered - base);
  }
  return target.reshape({channels, height, width});
}

torch::Tensor local_reconstruction_loss(const torch::Tensor& generated, const torch::Tensor& images,
                                        const fusion::FusionPlan& plan) {
  if (!plan.has_matches()) {
    throw UsageError("local reconstruction loss needs a fusion plan with match indices");
  }
  const auto target = replay_fusion(images, plan);
  if (generated.sizes() != target.sizes()) {
    throw ValidationError("generated image and replayed target differ in shape");
  }
  return (generated - target).abs().mean();
}

torch::Tensor local_reconstruction_loss(const torch::Tensor& generated, const torch::Tensor& tasks,
                                        const std::vector<fusion::FusionPlan>& plans) {
  if (generated.dim() != 4 || tasks.dim() != 5 || generated.size(0) != tasks.size(0) ||
      static_cast<int64_t>(plans.size()) != tasks.size(0)) {
    throw ValidationError("batched reconstruction loss: batch sizes disagree");
  }
  std::vector<torch::Tensor> targets;
  targets.reserve(plans.size());
  for (size_t b = 0; b < plans.size(); ++b) {
    if (!plans[b].has_matches()) {
      throw UsageError("local reconstruction loss needs a fusion plan with match indices");
    }
    targets.push_back(replay_fusion(tasks[static_cast<int64_t>(b)], plans[b]));
  }
  return (generated - torch::stack(targets)).abs().mean();
}

torch::Tensor hinge_d_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  return torch::relu(1.0 - real_scores).mean() + torch::relu(1.0 + fake_scores).mean();
}

torch::Tensor hinge_g_loss(const torch::Tensor& fake_scores) { return -fake_scores.mean(); }

torch::Tensor classification_loss(const torch::Tensor& logits, const torch::Tensor& labels) {
  auto l = logits.dim() == 1 ? logits.unsqueeze(0) : logits;
  auto y = labels.dim() == 0 ? labels.unsqueeze(0) : labels;
  if (l.dim() != 2 || y.dim() != 1 || y.size(0) != l.size(0)) {
    throw ValidationError("classification loss expects N x C logits and N labels");
  }
  y = y.to(torch::kLong);
  if (y.numel() > 0 && (y.min().item<int64_t>() < 0 || y.max().item<int64_t>() >= l.size(1))) {
    throw ValidationError("class label outside [0, " + std::to_string(l.size(1)) + ")");
  }
  return -torch::log_softmax(l, 1).gather(1, y.unsqueeze(1)).mean();
}

torch::Tensor total_g_loss(const GeneratorLossParts& parts, const LossWeights& weights) {
  weights.validate();
  auto total = parts.adv + weights.cls_g * parts.cls + weights.rec_g * parts.rec;
  if (parts.con.defined()) total = total + weights.con_g * parts.con;
  return total;
}

torch::Tensor total_d_loss(const DiscriminatorLossParts& parts, const LossWeights& weights) {
  weights.validate();
  return parts.adv + weights.cls_d * parts.cls;
}

}  // namespace eqgan::losses

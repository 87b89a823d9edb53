#pragma once

#include <vector>

#include <torch/torch.h>

#include "eqgan/fusion.hpp"

namespace eqgan::losses {

struct LossWeights {
  double cls_g = 1.0;
  double rec_g = 0.5;
  double con_g = 1.0;
  double cls_d = 1.0;

  /// Throws ValidationError on negative or non-finite weights.
  void validate() const;
};

/// Mean absolute difference between F_eq and F_H3.
torch::Tensor consistent_equalization_loss(const torch::Tensor& f_eq, const torch::Tensor& f_h3);

/// Image-resolution replay of a feature-level fusion: each feature cell maps to the pixel block
/// it covers, and matched cells copy the corresponding reference block. images: K x C x H x W.
torch::Tensor replay_fusion(const torch::Tensor& images, const fusion::FusionPlan& plan);

/// Mean |generated - replay_fusion(images, plan)|. generated: C x H x W.
torch::Tensor local_reconstruction_loss(const torch::Tensor& generated, const torch::Tensor& images,
                                        const fusion::FusionPlan& plan);

/// Batched form averaged over tasks. generated: B x C x H x W; tasks: B x K x C x H x W.
torch::Tensor local_reconstruction_loss(const torch::Tensor& generated, const torch::Tensor& tasks,
                                        const std::vector<fusion::FusionPlan>& plans);

/// mean(max(0, 1 - D(x))) + mean(max(0, 1 + D(x_hat))).
torch::Tensor hinge_d_loss(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);

/// -mean(D(x_hat)).
torch::Tensor hinge_g_loss(const torch::Tensor& fake_scores);

/// Mean softmax cross-entropy. logits: N x C (or C), labels: N (or scalar).
torch::Tensor classification_loss(const torch::Tensor& logits, const torch::Tensor& labels);

struct GeneratorLossParts {
  torch::Tensor adv;
  torch::Tensor cls;
  torch::Tensor rec;
  torch::Tensor con;  // undefined when the consistent equalization term is disabled
};

struct DiscriminatorLossParts {
  torch::Tensor adv;
  torch::Tensor cls;
};

torch::Tensor total_g_loss(const GeneratorLossParts& parts, const LossWeights& weights);
torch::Tensor total_d_loss(const DiscriminatorLossParts& parts, const LossWeights& weights);

}  // namespace eqgan::losses

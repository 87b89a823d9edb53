#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "eqgan/config.hpp"
#include "eqgan/data.hpp"
#include "eqgan/generator.hpp"

namespace eqgan {

struct ClassifierConfig {
  int64_t num_classes = 2;
  int64_t width = 16;           // channels of the first stage; doubled per stage
  int64_t blocks_per_stage = 1;
  int64_t stages = 4;

  /// Residual network with 4 stages of 2 basic blocks at width 64.
  static ClassifierConfig resnet18(int64_t num_classes) { return {num_classes, 64, 2, 4}; }
  void validate() const;
};

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int64_t in, int64_t out, int64_t stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
  torch::nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(BasicBlock);

class ResNetImpl : public torch::nn::Module {
 public:
  explicit ResNetImpl(ClassifierConfig config);
  torch::Tensor features(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x);
  /// Fresh linear head for a new label set, drawn from the global torch generator.
  void reset_head(int64_t num_classes);
  int64_t feature_dim() const { return feature_dim_; }

 private:
  ClassifierConfig config_;
  int64_t feature_dim_ = 0;
  torch::nn::Sequential body_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(ResNet);

struct ClassifierTraining {
  int64_t epochs = 30;
  int64_t pretrain_epochs = 5;
  int64_t batch_size = 32;
  double lr = 1e-3;
  int64_t width = 16;
  int64_t blocks_per_stage = 1;
  int64_t augment_per_category = 30;  // generated images added per category
  int64_t k = 3;                      // shots used to condition the generator
  uint64_t seed = 0;

  static ClassifierTraining from(const RunConfig& config);
};

/// Augmented images per category: 30 for Flower, 50 for the other benchmarks.
int64_t default_augment_count(const std::string& dataset_name);

struct AugmentResult {
  double base_accuracy = 0.0;       // top-1 on D_test, in [0, 1]
  double augmented_accuracy = 0.0;
  double base_val_accuracy = 0.0;
  double augmented_val_accuracy = 0.0;
  int64_t generated_images = 0;
};

/// Top-1 accuracy of `model` in eval mode.
double top1_accuracy(ResNet& model, const torch::Tensor& images, const torch::Tensor& labels,
                     int64_t batch = 64);

/// Pretrains a residual classifier on the seen categories, then fine-tunes two copies on the
/// unseen categories' D_train: one as is ("Base"), one with generated images added. Each keeps
/// the epoch with the best D_val accuracy and is scored on D_test.
AugmentResult augment_classification(Generator& generator, const Dataset& dataset,
                                     const std::vector<ClassificationSplit>& splits,
                                     const ClassifierTraining& options);

}  // namespace eqgan

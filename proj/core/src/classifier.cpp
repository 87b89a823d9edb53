#include "eqgan/classifier.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "eqgan/errors.hpp"
#include "eqgan/eval.hpp"

namespace eqgan {

void ClassifierConfig::validate() const {
  if (num_classes < 1) throw ConfigError("classifier needs at least one class");
  if (width < 1 || blocks_per_stage < 1 || stages < 1) {
    throw ConfigError("classifier width, blocks and stages must be positive");
  }
}

BasicBlockImpl::BasicBlockImpl(int64_t in, int64_t out, int64_t stride) {
  namespace nn = torch::nn;
  conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)));
  bn1_ = register_module("bn1", nn::BatchNorm2d(out));
  conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1).bias(false)));
  bn2_ = register_module("bn2", nn::BatchNorm2d(out));
  shortcut_ = nn::Sequential();
  if (stride != 1 || in != out) {
    shortcut_->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)));
    shortcut_->push_back(nn::BatchNorm2d(out));
  }
  register_module("shortcut", shortcut_);
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(bn1_(conv1_(x)));
  y = bn2_(conv2_(y));
  return torch::relu(y + (shortcut_->is_empty() ? x : shortcut_->forward(x)));
}

ResNetImpl::ResNetImpl(ClassifierConfig config) : config_(config) {
  config_.validate();
  namespace nn = torch::nn;
  body_ = nn::Sequential();
  body_->push_back(nn::Conv2d(nn::Conv2dOptions(3, config_.width, 3).padding(1).bias(false)));
  body_->push_back(nn::BatchNorm2d(config_.width));
  body_->push_back(nn::ReLU());
  int64_t in = config_.width;
  for (int64_t s = 0; s < config_.stages; ++s) {
    const int64_t out = config_.width << s;
    for (int64_t b = 0; b < config_.blocks_per_stage; ++b) {
      body_->push_back(BasicBlock(in, out, (s > 0 && b == 0) ? 2 : 1));
      in = out;
    }
  }
  feature_dim_ = in;
  register_module("body", body_);
  head_ = register_module("head", nn::Linear(feature_dim_, config_.num_classes));
}

torch::Tensor ResNetImpl::features(const torch::Tensor& x) {
  return body_->forward(x).mean({2, 3});
}

torch::Tensor ResNetImpl::forward(const torch::Tensor& x) { return head_(features(x)); }

void ResNetImpl::reset_head(int64_t num_classes) {
  config_.num_classes = num_classes;
  head_ = replace_module("head", torch::nn::Linear(feature_dim_, num_classes));
}

ClassifierTraining ClassifierTraining::from(const RunConfig& config) {
  ClassifierTraining t;
  t.epochs = config.classifier_epochs;
  t.pretrain_epochs = config.classifier_pretrain_epochs;
  t.lr = config.classifier_lr;
  t.width = config.classifier_width;
  t.blocks_per_stage = config.classifier_blocks;
  t.augment_per_category = config.augment_per_category;
  t.k = config.eval_k;
  t.seed = config.seed;
  return t;
}

int64_t default_augment_count(const std::string& dataset_name) {
  std::string lower = dataset_name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower.find("flower") != std::string::npos ? 30 : 50;
}

double top1_accuracy(ResNet& model, const torch::Tensor& images, const torch::Tensor& labels,
                     int64_t batch) {
  if (images.size(0) == 0) return 0.0;
  torch::NoGradGuard no_grad;
  model->eval();
  int64_t correct = 0;
  for (int64_t i = 0; i < images.size(0); i += batch) {
    const int64_t end = std::min(i + batch, images.size(0));
    const auto pred = model->forward(images.slice(0, i, end)).argmax(1);
    correct += pred.eq(labels.slice(0, i, end)).sum().item<int64_t>();
  }
  return static_cast<double>(correct) / static_cast<double>(images.size(0));
}

namespace {

using Snapshot = std::vector<torch::Tensor>;

Snapshot snapshot(torch::nn::Module& m) {
  Snapshot s;
  for (const auto& p : m.parameters()) s.push_back(p.detach().clone());
  for (const auto& b : m.buffers()) s.push_back(b.detach().clone());
  return s;
}

void restore(torch::nn::Module& m, const Snapshot& s) {
  torch::NoGradGuard no_grad;
  size_t i = 0;
  for (auto& p : m.parameters()) p.copy_(s.at(i++));
  for (auto& b : m.buffers()) b.copy_(s.at(i++));
}

void run_epochs(ResNet& model, const torch::Tensor& images, const torch::Tensor& labels,
                int64_t epochs, const ClassifierTraining& options, Rng& rng,
                const std::function<void()>& after_epoch) {
  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(options.lr));
  std::vector<int64_t> order(static_cast<size_t>(images.size(0)));
  for (int64_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto perm = torch::tensor(order, torch::kLong);
    model->train();
    for (int64_t i = 0; i < images.size(0); i += options.batch_size) {
      const auto idx = perm.slice(0, i, std::min(i + options.batch_size, images.size(0)));
      if (idx.size(0) < 2) continue;  // batch norm needs two samples
      opt.zero_grad();
      const auto loss = torch::nn::functional::cross_entropy(model->forward(images.index_select(0, idx)),
                                                             labels.index_select(0, idx));
      loss.backward();
      opt.step();
    }
    if (after_epoch) after_epoch();
  }
}

struct Labeled {
  torch::Tensor images;
  torch::Tensor labels;
};

Labeled gather(const Dataset& dataset, const std::vector<ClassificationSplit>& splits,
               std::vector<int64_t> ClassificationSplit::*member) {
  std::vector<torch::Tensor> images;
  std::vector<int64_t> labels;
  for (size_t c = 0; c < splits.size(); ++c) {
    const auto& indices = splits[c].*member;
    if (indices.empty()) continue;
    images.push_back(dataset.images(splits[c].category_id, indices));
    labels.insert(labels.end(), indices.size(), static_cast<int64_t>(c));
  }
  if (images.empty()) return {torch::empty({0, 3, 1, 1}), torch::empty({0}, torch::kLong)};
  return {torch::cat(images, 0), torch::tensor(labels, torch::kLong)};
}

struct FineTuned {
  double val = 0.0;
  double test = 0.0;
};

FineTuned fine_tune(ResNet& model, const Labeled& train, const Labeled& val, const Labeled& test,
                    const ClassifierTraining& options) {
  Rng rng(options.seed + 2);
  double best_val = -1.0;
  Snapshot best;
  run_epochs(model, train.images, train.labels, options.epochs, options, rng, [&] {
    const double acc = val.images.size(0) > 0 ? top1_accuracy(model, val.images, val.labels) : 0.0;
    if (val.images.size(0) == 0 || acc > best_val) {
      best_val = acc;
      best = snapshot(*model);
    }
  });
  restore(*model, best);
  return {best_val, top1_accuracy(model, test.images, test.labels)};
}

}  // namespace

AugmentResult augment_classification(Generator& generator, const Dataset& dataset,
                                     const std::vector<ClassificationSplit>& splits,
                                     const ClassifierTraining& options) {
  if (splits.empty()) throw ValidationError("no categories to classify");
  if (options.epochs < 1) throw ConfigError("classifier epochs must be positive");

  // Pretraining on the seen categories.
  torch::manual_seed(options.seed);
  const auto seen_count = static_cast<int64_t>(dataset.seen().size());
  ResNet model(ClassifierConfig{std::max<int64_t>(seen_count, 1), options.width,
                                options.blocks_per_stage, 4});
  if (options.pretrain_epochs > 0 && seen_count > 0) {
    std::vector<torch::Tensor> images;
    std::vector<int64_t> labels;
    for (int64_t id : dataset.seen()) {
      auto x = dataset.images(id);
      labels.insert(labels.end(), static_cast<size_t>(x.size(0)), dataset.seen_class_index(id));
      images.push_back(std::move(x));
    }
    Rng rng(options.seed + 1);
    run_epochs(model, torch::cat(images, 0), torch::tensor(labels, torch::kLong),
               options.pretrain_epochs, options, rng, {});
  }

  const auto train = gather(dataset, splits, &ClassificationSplit::train);
  const auto val = gather(dataset, splits, &ClassificationSplit::val);
  const auto test = gather(dataset, splits, &ClassificationSplit::test);
  const auto num_classes = static_cast<int64_t>(splits.size());

  AugmentResult result;
  torch::manual_seed(options.seed + 3);
  model->reset_head(num_classes);
  const Snapshot initial = snapshot(*model);
  const auto base = fine_tune(model, train, val, test, options);
  result.base_val_accuracy = base.val;
  result.base_accuracy = base.test;

  // Generated images conditioned on each category's D_train.
  Labeled augmented = train;
  if (options.augment_per_category > 0) {
    generator->eval();
    Rng rng(options.seed + 4);
    std::vector<torch::Tensor> images{train.images};
    std::vector<torch::Tensor> labels{train.labels};
    for (size_t c = 0; c < splits.size(); ++c) {
      const auto& pool = splits[c].train;
      const int64_t k = std::min<int64_t>(options.k, static_cast<int64_t>(pool.size()));
      if (k < 2) throw ValidationError("augmentation needs at least 2 training images per category");
      images.push_back(generate_for_category(generator, dataset, splits[c].category_id, pool,
                                             options.augment_per_category, k, rng));
      labels.push_back(torch::full({options.augment_per_category}, static_cast<int64_t>(c), torch::kLong));
      result.generated_images += options.augment_per_category;
    }
    augmented = {torch::cat(images, 0), torch::cat(labels, 0)};
  }
  restore(*model, initial);
  const auto aug = fine_tune(model, augmented, val, test, options);
  result.augmented_val_accuracy = aug.val;
  result.augmented_accuracy = aug.test;
  return result;
}

}  // namespace eqgan

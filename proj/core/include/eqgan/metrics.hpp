#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <torch/script.h>
#include <torch/torch.h>

namespace eqgan::metrics {

/// Feature extractor shared by FID and the perceptual diversity score.
class Embedder {
 public:
  virtual ~Embedder() = default;

  /// Feature maps (N x C_l x H_l x W_l) of every tapped layer for images in [-1, 1].
  virtual std::vector<torch::Tensor> layers(const torch::Tensor& images) const = 0;

  /// N x D embedding: spatial means of all layers, concatenated.
  virtual torch::Tensor embed(const torch::Tensor& images) const;

  virtual std::string name() const = 0;
};

/// Random, frozen convolutional network drawn from its own seeded generator. Offline and
/// bit-reproducible; its numbers are only comparable with themselves.
class ConvEmbedder final : public Embedder {
 public:
  explicit ConvEmbedder(uint64_t seed = 0, std::vector<int64_t> widths = {16, 32, 64},
                        int64_t input_size = 64);

  std::vector<torch::Tensor> layers(const torch::Tensor& images) const override;
  std::string name() const override;

 private:
  uint64_t seed_;
  int64_t input_size_;
  std::vector<torch::Tensor> weights_;
};

/// TorchScript module whose forward maps N x 3 x H x W in [-1, 1] to either an N x D
/// embedding or a tuple/list of feature maps.
class ScriptEmbedder final : public Embedder {
 public:
  explicit ScriptEmbedder(const std::filesystem::path& path);

  std::vector<torch::Tensor> layers(const torch::Tensor& images) const override;
  torch::Tensor embed(const torch::Tensor& images) const override;
  std::string name() const override;

 private:
  std::filesystem::path path_;
  std::shared_ptr<torch::jit::Module> module_;
};

/// Empty spec selects the built-in embedder, anything else is a TorchScript path.
std::unique_ptr<Embedder> make_embedder(const std::string& spec, uint64_t seed = 0);

struct FidResult {
  double value = 0.0;
  double jitter = 0.0;  // diagonal ε added to stabilise the square root, 0 if none
};

/// Fréchet distance between Gaussian fits of two N x D embedding sets (double precision).
/// Throws ValidationError for fewer than 2 rows per set or mismatched dimensions.
FidResult fid_detailed(const torch::Tensor& a, const torch::Tensor& b);
double fid(const torch::Tensor& a, const torch::Tensor& b);

/// Embeds both image sets in batches and compares them.
double fid_images(const Embedder& embedder, const torch::Tensor& a, const torch::Tensor& b,
                  int64_t batch = 64);

/// Pairs (i < j) over n items: all n(n-1)/2 when max_pairs is 0 or large enough, otherwise a
/// seeded sample without replacement. Sorted.
std::vector<std::pair<int64_t, int64_t>> sample_pairs(int64_t n, int64_t max_pairs,
                                                      uint64_t seed);

/// Perceptual distance per pair of row-aligned image batches: unit-normalised channel
/// vectors, squared difference summed over channels, averaged over space, summed over layers.
torch::Tensor perceptual_distance(const Embedder& embedder, const torch::Tensor& x,
                                  const torch::Tensor& y);

struct DiversityOptions {
  int64_t max_pairs = 0;  // 0: exhaustive
  uint64_t seed = 0;
  int64_t batch = 64;
};

/// Mean pairwise perceptual distance; needs at least 2 images.
double lpips_diversity(const Embedder& embedder, const torch::Tensor& images,
                       const DiversityOptions& options = {});

}  // namespace eqgan::metrics

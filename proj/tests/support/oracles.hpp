#pragma once

// Reference implementations written as plain loops over std::vector<double>. They share no
// code with the library beyond reading module weights.

#include <cstdint>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "eqgan/fusion.hpp"

namespace eqgan::testing {

using Vec = std::vector<double>;

Vec to_vec(const torch::Tensor& t);
double max_abs_diff(const Vec& a, const Vec& b);

/// (h*w x h*w) cosine similarity of channel vectors, norms floored at 1e-8.
Vec brute_similarity(const Vec& base, const Vec& ref, int64_t c, int64_t h, int64_t w);

struct BruteFuse {
  Vec fused;
  std::vector<std::vector<int64_t>> matches;
};

/// features: K x c x h x w. fused(i) = alpha_base * base(i) + sum_r alpha_r * ref_r(j*).
BruteFuse brute_local_fuse(const Vec& features, int64_t k, int64_t c, int64_t h, int64_t w,
                           const std::vector<double>& alpha, int64_t base);

/// Stride-1 convolution with zero padding of kernel/2. weight: cout x cin x kernel x kernel.
Vec brute_conv2d(const Vec& x, int64_t cin, int64_t h, int64_t w, const Vec& weight,
                 const Vec& bias, int64_t cout, int64_t kernel);

/// Three streams of (conv, leaky relu) x depth, concatenation, 1x1 projection; read from the
/// module's parameters. x: c x h x w.
Vec brute_multi_scale(fusion::MultiScaleImpl& module, const Vec& x, int64_t c, int64_t h, int64_t w);

/// Image-level replay: every pixel of a matched cell copies the same offset in the matched
/// reference cell. images: K x C x H x W.
Vec brute_replay(const Vec& images, int64_t channels, int64_t height, int64_t width,
                 const fusion::FusionPlan& plan);

double brute_l1_mean(const Vec& a, const Vec& b);

/// Mean of -log softmax(logits_n)[label_n]; logits row-major N x C.
double brute_cross_entropy(const Vec& logits, const std::vector<int64_t>& labels, int64_t classes);

/// Fréchet distance with the matrix square root of Sigma_a * Sigma_b from a Denman-Beavers
/// iteration. Rows are samples.
double brute_fid(const std::vector<Vec>& a, const std::vector<Vec>& b);

/// Central finite differences of a scalar function of a double tensor.
torch::Tensor numeric_gradient(const std::function<double(const torch::Tensor&)>& f,
                               const torch::Tensor& x, double eps = 1e-6);

/// max |a - b| / max(|a|, |b|, floor).
double relative_error(const torch::Tensor& a, const torch::Tensor& b, double floor = 1e-3);

}  // namespace eqgan::testing

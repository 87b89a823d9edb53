#include "eqgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>
#include <set>

#include <ATen/CPUGeneratorImpl.h>

#include "eqgan/errors.hpp"

namespace eqgan::metrics {

torch::Tensor Embedder::embed(const torch::Tensor& images) const {
  std::vector<torch::Tensor> pooled;
  for (const auto& layer : layers(images)) pooled.push_back(layer.mean({2, 3}));
  return torch::cat(pooled, 1);
}

ConvEmbedder::ConvEmbedder(uint64_t seed, std::vector<int64_t> widths, int64_t input_size)
    : seed_(seed), input_size_(input_size) {
  if (widths.empty()) throw ConfigError("embedder needs at least one layer");
  auto gen = at::detail::createCPUGenerator(seed);
  int64_t in = 3;
  for (int64_t out : widths) {
    const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
    weights_.push_back(torch::randn({out, in, 3, 3}, gen, torch::kFloat) * std);
    in = out;
  }
}

std::vector<torch::Tensor> ConvEmbedder::layers(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw ValidationError("embedder expects N x 3 x H x W images");
  }
  torch::NoGradGuard no_grad;
  namespace F = torch::nn::functional;
  auto x = images.to(torch::kFloat);
  if (x.size(2) != input_size_ || x.size(3) != input_size_) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{input_size_, input_size_})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  std::vector<torch::Tensor> out;
  for (const auto& w : weights_) {
    x = F::leaky_relu(F::conv2d(x, w, F::Conv2dFuncOptions().stride(2).padding(1)),
                      F::LeakyReLUFuncOptions().negative_slope(0.2));
    out.push_back(x);
  }
  return out;
}

std::string ConvEmbedder::name() const { return "conv-seed" + std::to_string(seed_); }

ScriptEmbedder::ScriptEmbedder(const std::filesystem::path& path) : path_(path) {
  if (!std::filesystem::exists(path)) throw IoError("embedder file not found: " + path.string());
  module_ = std::make_shared<torch::jit::Module>(torch::jit::load(path.string()));
  module_->eval();
}

std::vector<torch::Tensor> ScriptEmbedder::layers(const torch::Tensor& images) const {
  torch::NoGradGuard no_grad;
  const auto result = module_->forward({images.to(torch::kFloat)});
  std::vector<torch::Tensor> out;
  if (result.isTensor()) {
    auto t = result.toTensor();
    out.push_back(t.dim() == 2 ? t.unsqueeze(-1).unsqueeze(-1) : t);
  } else if (result.isTuple()) {
    for (const auto& e : result.toTupleRef().elements()) out.push_back(e.toTensor());
  } else if (result.isTensorList()) {
    for (const auto& t : result.toTensorVector()) out.push_back(t);
  } else {
    throw ValidationError("embedder " + path_.string() + " returned an unsupported type");
  }
  return out;
}

torch::Tensor ScriptEmbedder::embed(const torch::Tensor& images) const {
  const auto maps = layers(images);
  if (maps.size() == 1 && maps[0].size(2) == 1 && maps[0].size(3) == 1) return maps[0].flatten(1);
  return Embedder::embed(images);
}

std::string ScriptEmbedder::name() const { return path_.filename().string(); }

std::unique_ptr<Embedder> make_embedder(const std::string& spec, uint64_t seed) {
  if (spec.empty() || spec == "builtin") return std::make_unique<ConvEmbedder>(seed);
  return std::make_unique<ScriptEmbedder>(spec);
}

namespace {

torch::Tensor covariance(const torch::Tensor& x, const torch::Tensor& mean) {
  const auto centered = x - mean;
  return centered.t().matmul(centered) / static_cast<double>(x.size(0) - 1);
}

torch::Tensor sqrt_psd(const torch::Tensor& m) {
  auto [w, v] = torch::linalg_eigh(m, "L");
  return v.matmul(torch::diag(w.clamp_min(0.0).sqrt())).matmul(v.t());
}

}  // namespace

FidResult fid_detailed(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2) throw ValidationError("fid expects N x D embeddings");
  if (a.size(0) < 2 || b.size(0) < 2) {
    throw ValidationError("fid needs at least 2 samples per set");
  }
  if (a.size(1) != b.size(1)) throw ValidationError("fid embeddings differ in dimension");
  torch::NoGradGuard no_grad;
  const auto xa = a.to(torch::kDouble);
  const auto xb = b.to(torch::kDouble);
  const auto mu_a = xa.mean(0);
  const auto mu_b = xb.mean(0);
  const auto cov_a = covariance(xa, mu_a);
  const auto cov_b = covariance(xb, mu_b);
  const auto eye = torch::eye(a.size(1), torch::kDouble);
  const double scale = std::max(1.0, (cov_a.diagonal().mean() + cov_b.diagonal().mean()).item<double>());

  FidResult result;
  for (double eps : {0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2}) {
    const double jitter = eps * scale;
    const auto ca = cov_a + jitter * eye;
    const auto cb = cov_b + jitter * eye;
    const auto sa = sqrt_psd(ca);
    auto m = sa.matmul(cb).matmul(sa);
    m = 0.5 * (m + m.t());
    const auto w = torch::linalg_eigvalsh(m, "L");
    const double lo = w.min().item<double>();
    const double hi = w.abs().max().item<double>();
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo < -1e-8 * std::max(hi, 1.0)) {
      std::cerr << "[eqgan] fid: unstable covariance square root, adding diagonal jitter\n";
      continue;
    }
    const double tr_sqrt = w.clamp_min(0.0).sqrt().sum().item<double>();
    const double mean_term = (mu_a - mu_b).pow(2).sum().item<double>();
    const double value = mean_term + ca.trace().item<double>() + cb.trace().item<double>() - 2.0 * tr_sqrt;
    result.value = std::max(0.0, value);
    result.jitter = jitter;
    if (jitter > 0.0) std::cerr << "[eqgan] fid: used jitter " << jitter << "\n";
    return result;
  }
  throw ValidationError("fid: covariance square root did not stabilise");
}

double fid(const torch::Tensor& a, const torch::Tensor& b) { return fid_detailed(a, b).value; }

namespace {

torch::Tensor embed_batched(const Embedder& embedder, const torch::Tensor& images, int64_t batch) {
  std::vector<torch::Tensor> parts;
  for (int64_t i = 0; i < images.size(0); i += batch) {
    parts.push_back(embedder.embed(images.slice(0, i, std::min(i + batch, images.size(0)))));
  }
  return torch::cat(parts, 0);
}

}  // namespace

double fid_images(const Embedder& embedder, const torch::Tensor& a, const torch::Tensor& b,
                  int64_t batch) {
  return fid(embed_batched(embedder, a, batch), embed_batched(embedder, b, batch));
}

std::vector<std::pair<int64_t, int64_t>> sample_pairs(int64_t n, int64_t max_pairs, uint64_t seed) {
  if (n < 2) throw ValidationError("pairing needs at least 2 items");
  const int64_t total = n * (n - 1) / 2;
  std::vector<std::pair<int64_t, int64_t>> pairs;
  if (max_pairs <= 0 || max_pairs >= total) {
    pairs.reserve(static_cast<size_t>(total));
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    }
    return pairs;
  }
  // Floyd's sampling of distinct linear pair indices.
  std::mt19937_64 rng(seed);
  std::set<int64_t> chosen;
  for (int64_t t = total - max_pairs; t < total; ++t) {
    const int64_t r = std::uniform_int_distribution<int64_t>(0, t)(rng);
    if (!chosen.insert(r).second) chosen.insert(t);
  }
  for (int64_t index : chosen) {
    int64_t i = 0;
    int64_t offset = 0;
    while (offset + (n - 1 - i) <= index) {
      offset += n - 1 - i;
      ++i;
    }
    pairs.emplace_back(i, i + 1 + (index - offset));
  }
  return pairs;
}

namespace {

torch::Tensor unit_channels(const torch::Tensor& f) {
  return f / (f.pow(2).sum(1, true).sqrt() + 1e-10);
}

}  // namespace

torch::Tensor perceptual_distance(const Embedder& embedder, const torch::Tensor& x,
                                  const torch::Tensor& y) {
  if (x.sizes() != y.sizes()) throw ValidationError("perceptual distance needs matching batches");
  const auto fx = embedder.layers(x);
  const auto fy = embedder.layers(y);
  auto total = torch::zeros({x.size(0)}, torch::kDouble);
  for (size_t l = 0; l < fx.size(); ++l) {
    const auto d = (unit_channels(fx[l]) - unit_channels(fy[l])).pow(2).sum(1);
    total += d.mean({1, 2}).to(torch::kDouble);
  }
  return total;
}

double lpips_diversity(const Embedder& embedder, const torch::Tensor& images,
                       const DiversityOptions& options) {
  if (images.dim() != 4 || images.size(0) < 2) {
    throw ValidationError("lpips_diversity needs at least 2 images");
  }
  torch::NoGradGuard no_grad;
  // Features are computed once per image, pairs are then compared layer by layer.
  std::vector<torch::Tensor> units;
  {
    std::vector<std::vector<torch::Tensor>> chunks;
    for (int64_t i = 0; i < images.size(0); i += options.batch) {
      chunks.push_back(embedder.layers(images.slice(0, i, std::min(i + options.batch, images.size(0)))));
    }
    for (size_t l = 0; l < chunks.front().size(); ++l) {
      std::vector<torch::Tensor> parts;
      for (const auto& c : chunks) parts.push_back(unit_channels(c[l]).to(torch::kDouble));
      units.push_back(torch::cat(parts, 0));
    }
  }
  const auto pairs = sample_pairs(images.size(0), options.max_pairs, options.seed);
  std::vector<int64_t> left;
  std::vector<int64_t> right;
  for (const auto& [i, j] : pairs) {
    left.push_back(i);
    right.push_back(j);
  }
  const auto li = torch::tensor(left, torch::kLong);
  const auto ri = torch::tensor(right, torch::kLong);
  double sum = 0.0;
  for (const auto& u : units) {
    for (int64_t s = 0; s < li.size(0); s += 1024) {
      const auto a = u.index_select(0, li.slice(0, s, s + 1024));
      const auto b = u.index_select(0, ri.slice(0, s, s + 1024));
      sum += (a - b).pow(2).sum(1).mean({1, 2}).sum().item<double>();
    }
  }
  return sum / static_cast<double>(pairs.size());
}

}  // namespace eqgan::metrics

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace eqgan::testing {

Vec to_vec(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kDouble).contiguous().flatten();
  return Vec(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
}

double max_abs_diff(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Vec brute_similarity(const Vec& base, const Vec& ref, int64_t c, int64_t h, int64_t w) {
  const int64_t n = h * w;
  Vec out(static_cast<size_t>(n * n));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double dot = 0.0, nb = 0.0, nr = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) {
        const double b = base[ch * n + i];
        const double r = ref[ch * n + j];
        dot += b * r;
        nb += b * b;
        nr += r * r;
      }
      out[i * n + j] = dot / (std::max(std::sqrt(nb), 1e-8) * std::max(std::sqrt(nr), 1e-8));
    }
  }
  return out;
}

BruteFuse brute_local_fuse(const Vec& features, int64_t k, int64_t c, int64_t h, int64_t w,
                           const std::vector<double>& alpha, int64_t base) {
  const int64_t n = h * w;
  const int64_t stride = c * n;
  auto slice = [&](int64_t img) {
    return Vec(features.begin() + img * stride, features.begin() + (img + 1) * stride);
  };
  const Vec b = slice(base);
  BruteFuse out;
  out.fused.assign(static_cast<size_t>(stride), 0.0);
  for (int64_t ch = 0; ch < c; ++ch) {
    for (int64_t i = 0; i < n; ++i) out.fused[ch * n + i] = alpha[base] * b[ch * n + i];
  }
  for (int64_t r = 0; r < k; ++r) {
    if (r == base) continue;
    const Vec ref = slice(r);
    const Vec sim = brute_similarity(b, ref, c, h, w);
    std::vector<int64_t> match(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      int64_t best = 0;
      for (int64_t j = 1; j < n; ++j) {
        if (sim[i * n + j] > sim[i * n + best]) best = j;
      }
      match[i] = best;
      for (int64_t ch = 0; ch < c; ++ch) out.fused[ch * n + i] += alpha[r] * ref[ch * n + best];
    }
    out.matches.push_back(match);
  }
  return out;
}

Vec brute_conv2d(const Vec& x, int64_t cin, int64_t h, int64_t w, const Vec& weight,
                 const Vec& bias, int64_t cout, int64_t kernel) {
  const int64_t pad = kernel / 2;
  Vec out(static_cast<size_t>(cout * h * w), 0.0);
  for (int64_t o = 0; o < cout; ++o) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t xx = 0; xx < w; ++xx) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (int64_t i = 0; i < cin; ++i) {
          for (int64_t ky = 0; ky < kernel; ++ky) {
            for (int64_t kx = 0; kx < kernel; ++kx) {
              const int64_t sy = y + ky - pad;
              const int64_t sx = xx + kx - pad;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              acc += weight[((o * cin + i) * kernel + ky) * kernel + kx] * x[(i * h + sy) * w + sx];
            }
          }
        }
        out[(o * h + y) * w + xx] = acc;
      }
    }
  }
  return out;
}

Vec brute_multi_scale(fusion::MultiScaleImpl& module, const Vec& x, int64_t c, int64_t h, int64_t w) {
  const auto& opts = module.options();
  const auto params = module.named_parameters();
  Vec concat;
  for (int64_t kernel : opts.kernels) {
    const std::string prefix = "stream" + std::to_string(kernel) + ".";
    std::vector<torch::Tensor> tensors;
    for (const auto& p : params) {
      if (p.key().rfind(prefix, 0) == 0) tensors.push_back(p.value());
    }
    if (static_cast<int64_t>(tensors.size()) != 2 * opts.depth) {
      throw std::runtime_error("unexpected parameter layout for " + prefix);
    }
    Vec cur = x;
    for (int64_t d = 0; d < opts.depth; ++d) {
      cur = brute_conv2d(cur, c, h, w, to_vec(tensors[2 * d]), to_vec(tensors[2 * d + 1]), c, kernel);
      for (double& v : cur) v = v >= 0.0 ? v : opts.leaky_slope * v;
    }
    concat.insert(concat.end(), cur.begin(), cur.end());
  }
  const Vec pw = to_vec(params["project.weight"]);
  const Vec pb = to_vec(params["project.bias"]);
  return brute_conv2d(concat, c * static_cast<int64_t>(opts.kernels.size()), h, w, pw, pb, c, 1);
}

Vec brute_replay(const Vec& images, int64_t channels, int64_t height, int64_t width,
                 const fusion::FusionPlan& plan) {
  const int64_t cell_h = height / plan.grid_h;
  const int64_t cell_w = width / plan.grid_w;
  const int64_t stride = channels * height * width;
  Vec out(static_cast<size_t>(stride));
  std::vector<int64_t> refs;
  for (int64_t i = 0; i < plan.shots(); ++i) {
    if (i != plan.base_index) refs.push_back(i);
  }
  for (int64_t ch = 0; ch < channels; ++ch) {
    for (int64_t y = 0; y < height; ++y) {
      for (int64_t x = 0; x < width; ++x) {
        const int64_t cell = (y / cell_h) * plan.grid_w + (x / cell_w);
        double v = plan.alpha[plan.base_index] *
                   images[plan.base_index * stride + (ch * height + y) * width + x];
        for (size_t r = 0; r < refs.size(); ++r) {
          const int64_t m = plan.match_indices[r][cell];
          const int64_t sy = (m / plan.grid_w) * cell_h + y % cell_h;
          const int64_t sx = (m % plan.grid_w) * cell_w + x % cell_w;
          v += plan.alpha[refs[r]] * images[refs[r] * stride + (ch * height + sy) * width + sx];
        }
        out[(ch * height + y) * width + x] = v;
      }
    }
  }
  return out;
}

double brute_l1_mean(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double brute_cross_entropy(const Vec& logits, const std::vector<int64_t>& labels, int64_t classes) {
  double total = 0.0;
  for (size_t n = 0; n < labels.size(); ++n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < classes; ++c) mx = std::max(mx, logits[n * classes + c]);
    double z = 0.0;
    for (int64_t c = 0; c < classes; ++c) z += std::exp(logits[n * classes + c] - mx);
    total += -(logits[n * classes + labels[n]] - mx - std::log(z));
  }
  return total / static_cast<double>(labels.size());
}

namespace {

using Mat = std::vector<Vec>;

Mat identity(size_t d) {
  Mat m(d, Vec(d, 0.0));
  for (size_t i = 0; i < d; ++i) m[i][i] = 1.0;
  return m;
}

Mat multiply(const Mat& a, const Mat& b) {
  const size_t d = a.size();
  Mat out(d, Vec(d, 0.0));
  for (size_t i = 0; i < d; ++i)
    for (size_t k = 0; k < d; ++k)
      for (size_t j = 0; j < d; ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

// Gauss-Jordan with partial pivoting.
Mat inverse(Mat a) {
  const size_t d = a.size();
  Mat inv = identity(d);
  for (size_t col = 0; col < d; ++col) {
    size_t pivot = col;
    for (size_t r = col + 1; r < d; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double p = a[col][col];
    if (p == 0.0) throw std::runtime_error("singular matrix in oracle");
    for (size_t j = 0; j < d; ++j) {
      a[col][j] /= p;
      inv[col][j] /= p;
    }
    for (size_t r = 0; r < d; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (size_t j = 0; j < d; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

Mat denman_beavers_sqrt(const Mat& a) {
  Mat y = a;
  Mat z = identity(a.size());
  for (int it = 0; it < 100; ++it) {
    const Mat yi = inverse(y);
    const Mat zi = inverse(z);
    Mat ny = y, nz = z;
    double change = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      for (size_t j = 0; j < a.size(); ++j) {
        ny[i][j] = 0.5 * (y[i][j] + zi[i][j]);
        nz[i][j] = 0.5 * (z[i][j] + yi[i][j]);
        change = std::max(change, std::abs(ny[i][j] - y[i][j]));
      }
    }
    y = ny;
    z = nz;
    if (change < 1e-14) break;
  }
  return y;
}

void moments(const std::vector<Vec>& rows, Vec& mean, Mat& cov) {
  const size_t n = rows.size();
  const size_t d = rows[0].size();
  mean.assign(d, 0.0);
  for (const auto& r : rows)
    for (size_t j = 0; j < d; ++j) mean[j] += r[j] / static_cast<double>(n);
  cov.assign(d, Vec(d, 0.0));
  for (const auto& r : rows)
    for (size_t i = 0; i < d; ++i)
      for (size_t j = 0; j < d; ++j)
        cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / static_cast<double>(n - 1);
}

}  // namespace

double brute_fid(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  Vec ma, mb;
  Mat ca, cb;
  moments(a, ma, ca);
  moments(b, mb, cb);
  const Mat root = denman_beavers_sqrt(multiply(ca, cb));
  double value = 0.0;
  for (size_t i = 0; i < ma.size(); ++i) {
    value += (ma[i] - mb[i]) * (ma[i] - mb[i]);
    value += ca[i][i] + cb[i][i] - 2.0 * root[i][i];
  }
  return value;
}

torch::Tensor numeric_gradient(const std::function<double(const torch::Tensor&)>& f,
                               const torch::Tensor& x, double eps) {
  auto base = x.detach().to(torch::kDouble).clone().contiguous();
  auto grad = torch::zeros_like(base);
  auto flat = base.view({-1});
  auto g = grad.view({-1});
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + eps;
    const double up = f(base);
    flat[i] = orig - eps;
    const double down = f(base);
    flat[i] = orig;
    g[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double relative_error(const torch::Tensor& a, const torch::Tensor& b, double floor) {
  const auto x = a.to(torch::kDouble);
  const auto y = b.to(torch::kDouble);
  const auto denom = torch::maximum(torch::maximum(x.abs(), y.abs()), torch::full_like(x, floor));
  return ((x - y).abs() / denom).max().item<double>();
}

}  // namespace eqgan::testing

#include "eqgan/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "eqgan/errors.hpp"

namespace fs = std::filesystem;

namespace eqgan {

namespace {

// HSV (h in [0,1)) to an OpenCV BGR colour at full saturation/value scaled by `value`.
cv::Scalar hue_to_bgr(double hue, double value) {
  const double h6 = hue * 6.0;
  const int sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double q = 1.0 - f;
  std::array<double, 3> rgb{};
  switch (sector) {
    case 0: rgb = {1, f, 0}; break;
    case 1: rgb = {q, 1, 0}; break;
    case 2: rgb = {0, 1, f}; break;
    case 3: rgb = {0, q, 1}; break;
    case 4: rgb = {f, 0, 1}; break;
    default: rgb = {1, 0, q}; break;
  }
  return cv::Scalar(255.0 * value * rgb[2], 255.0 * value * rgb[1], 255.0 * value * rgb[0]);
}

void draw_shape(cv::Mat& img, int kind, cv::Point centre, int radius, const cv::Scalar& colour) {
  switch (kind) {
    case 0:
      cv::circle(img, centre, radius, colour, cv::FILLED, cv::LINE_AA);
      break;
    case 1:
      cv::rectangle(img, centre - cv::Point(radius, radius), centre + cv::Point(radius, radius),
                    colour, cv::FILLED, cv::LINE_AA);
      break;
    case 2: {
      std::vector<cv::Point> tri{centre + cv::Point(0, -radius),
                                 centre + cv::Point(radius, radius),
                                 centre + cv::Point(-radius, radius)};
      cv::fillConvexPoly(img, tri, colour, cv::LINE_AA);
      break;
    }
    case 3: {
      const int t = std::max(1, radius / 3);
      cv::rectangle(img, centre - cv::Point(radius, t), centre + cv::Point(radius, t), colour,
                    cv::FILLED, cv::LINE_AA);
      cv::rectangle(img, centre - cv::Point(t, radius), centre + cv::Point(t, radius), colour,
                    cv::FILLED, cv::LINE_AA);
      break;
    }
    default:
      cv::circle(img, centre, radius, colour, std::max(1, radius / 3), cv::LINE_AA);
      break;
  }
}

cv::Mat render_shape_image(int64_t category, int64_t size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double s = static_cast<double>(size);
  cv::Mat img(static_cast<int>(size), static_cast<int>(size), CV_8UC3,
              cv::Scalar(28 + 8 * (category % 3), 28, 32));
  const double hue = std::fmod(0.61803398875 * static_cast<double>(category), 1.0);
  const cv::Scalar colour = hue_to_bgr(std::fmod(hue + 0.03 * (unit(rng) - 0.5) + 1.0, 1.0),
                                       0.75 + 0.25 * unit(rng));
  const int radius = static_cast<int>(std::round(s * (0.22 + 0.1 * unit(rng))));
  const cv::Point centre(static_cast<int>(std::round(s * (0.4 + 0.2 * unit(rng)))),
                         static_cast<int>(std::round(s * (0.4 + 0.2 * unit(rng)))));
  draw_shape(img, static_cast<int>(category % 5), centre, radius, colour);
  return img;
}

cv::Mat render_separable_image(int64_t category, int64_t categories, int64_t size,
                               std::mt19937_64& rng) {
  const double hue = static_cast<double>(category) / static_cast<double>(categories);
  const cv::Scalar base = hue_to_bgr(hue, 0.85);
  std::normal_distribution<double> noise(0.0, 6.0);
  cv::Mat img(static_cast<int>(size), static_cast<int>(size), CV_8UC3);
  for (int y = 0; y < img.rows; ++y) {
    for (int x = 0; x < img.cols; ++x) {
      auto& px = img.at<cv::Vec3b>(y, x);
      for (int ch = 0; ch < 3; ++ch) px[ch] = cv::saturate_cast<uint8_t>(base[ch] + noise(rng));
    }
  }
  return img;
}

}  // namespace

void make_synthetic_dataset(const fs::path& root, const SyntheticOptions& options) {
  if (options.categories <= 0 || options.images_per_category <= 0 || options.image_size <= 0) {
    throw ValidationError("synthetic dataset: counts and size must be positive");
  }
  for (int64_t c = 0; c < options.categories; ++c) {
    char dir_name[32];
    std::snprintf(dir_name, sizeof(dir_name), "cat_%03lld", static_cast<long long>(c));
    const fs::path dir = root / dir_name;
    fs::create_directories(dir);
    std::mt19937_64 rng(options.seed * 0x9E3779B97F4A7C15ULL + static_cast<uint64_t>(c));
    for (int64_t i = 0; i < options.images_per_category; ++i) {
      cv::Mat img = options.style == SyntheticStyle::shapes
                        ? render_shape_image(c, options.image_size, rng)
                        : render_separable_image(c, options.categories, options.image_size, rng);
      char file_name[32];
      std::snprintf(file_name, sizeof(file_name), "img_%04lld.png", static_cast<long long>(i));
      if (!cv::imwrite((dir / file_name).string(), img)) {
        throw IoError("failed to write " + (dir / file_name).string());
      }
    }
  }
}

SyntheticStyle parse_synthetic_style(const std::string& name) {
  if (name == "shapes") return SyntheticStyle::shapes;
  if (name == "separable") return SyntheticStyle::separable;
  throw ValidationError("unknown synthetic style '" + name + "' (expected shapes|separable)");
}

}  // namespace eqgan

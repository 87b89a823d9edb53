#include "eqgan/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "eqgan/errors.hpp"

namespace eqgan::image_io {

namespace {

cv::Mat to_bgr_mat(const torch::Tensor& image) {
  TORCH_CHECK(image.dim() == 3 && image.size(0) == 3, "expected a 3 x H x W image");
  torch::Tensor pixels = image.scalar_type() == torch::kUInt8 ? image : denormalize(image);
  pixels = pixels.permute({1, 2, 0}).contiguous();
  const int rows = static_cast<int>(pixels.size(0));
  const int cols = static_cast<int>(pixels.size(1));
  cv::Mat rgb(rows, cols, CV_8UC3, pixels.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

void write_mat(const std::filesystem::path& path, const cv::Mat& mat) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) {
    throw IoError("failed to write image " + path.string());
  }
}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

torch::Tensor read_rgb(const std::filesystem::path& path, int64_t size) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot decode image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  if (rgb.rows != size || rgb.cols != size) {
    const bool shrinking = rgb.rows > size || rgb.cols > size;
    cv::resize(rgb, rgb, cv::Size(static_cast<int>(size), static_cast<int>(size)), 0, 0,
               shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  }
  auto tensor = torch::from_blob(rgb.data, {size, size, 3}, torch::kUInt8);
  return tensor.permute({2, 0, 1}).clone();
}

void write_rgb(const std::filesystem::path& path, const torch::Tensor& image) {
  write_mat(path, to_bgr_mat(image.detach().cpu()));
}

torch::Tensor normalize(const torch::Tensor& pixels) {
  return pixels.to(torch::kFloat32).div(127.5).sub(1.0);
}

torch::Tensor denormalize(const torch::Tensor& values) {
  return values.detach().to(torch::kFloat32).add(1.0).mul(127.5).round().clamp(0, 255).to(
      torch::kUInt8);
}

torch::Tensor make_grid(const torch::Tensor& images, int64_t columns, int64_t padding) {
  TORCH_CHECK(images.dim() == 4, "make_grid expects N x C x H x W");
  const int64_t n = images.size(0);
  const int64_t h = images.size(2);
  const int64_t w = images.size(3);
  columns = std::max<int64_t>(1, std::min(columns, n));
  const int64_t rows = (n + columns - 1) / columns;
  auto grid = torch::full({images.size(1), rows * (h + padding) + padding,
                           columns * (w + padding) + padding},
                          1.0, images.options());
  for (int64_t i = 0; i < n; ++i) {
    const int64_t r = i / columns;
    const int64_t c = i % columns;
    grid.narrow(1, padding + r * (h + padding), h)
        .narrow(2, padding + c * (w + padding), w)
        .copy_(images[i]);
  }
  return grid;
}

void write_heatmap(const std::filesystem::path& path, const torch::Tensor& map) {
  TORCH_CHECK(map.dim() == 2, "heatmap expects H x W");
  auto m = map.detach().to(torch::kFloat32).contiguous();
  const float lo = m.min().item<float>();
  const float hi = m.max().item<float>();
  auto scaled = hi > lo ? (m - lo) / (hi - lo) : torch::zeros_like(m);
  auto bytes = scaled.mul(255.0).round().clamp(0, 255).to(torch::kUInt8).contiguous();
  cv::Mat gray(static_cast<int>(m.size(0)), static_cast<int>(m.size(1)), CV_8UC1,
               bytes.data_ptr<uint8_t>());
  cv::Mat colour;
  cv::applyColorMap(gray, colour, cv::COLORMAP_JET);
  write_mat(path, colour);
}

}  // namespace eqgan::image_io

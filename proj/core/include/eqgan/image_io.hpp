#pragma once

#include <filesystem>

#include <torch/torch.h>

namespace eqgan::image_io {

/// Reads a PNG/JPEG file as RGB, resized to `size`x`size`. Returns uint8 (3 x size x size).
torch::Tensor read_rgb(const std::filesystem::path& path, int64_t size);

/// Writes a uint8 or [-1,1] float (3 x H x W) tensor as an image; encoding follows the extension.
void write_rgb(const std::filesystem::path& path, const torch::Tensor& image);

/// uint8 [0,255] -> float32 [-1,1].
torch::Tensor normalize(const torch::Tensor& pixels);

/// float [-1,1] -> uint8 [0,255], rounding to nearest and clamping.
torch::Tensor denormalize(const torch::Tensor& values);

/// Tiles an (N x 3 x H x W) batch into one image with `columns` images per row.
torch::Tensor make_grid(const torch::Tensor& images, int64_t columns, int64_t padding = 2);

/// Writes a single-channel map, min-max scaled and colour mapped, at its native resolution.
void write_heatmap(const std::filesystem::path& path, const torch::Tensor& map);

bool is_image_file(const std::filesystem::path& path);

}  // namespace eqgan::image_io

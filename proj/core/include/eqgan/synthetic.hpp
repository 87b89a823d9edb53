#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace eqgan {

enum class SyntheticStyle {
  /// One coloured geometric shape per category on a dark background, jittered per image.
  shapes,
  /// Flat per-category colour plus low-amplitude noise; linearly separable by mean RGB.
  separable,
};

struct SyntheticOptions {
  int64_t categories = 10;
  int64_t images_per_category = 20;
  int64_t image_size = 32;
  SyntheticStyle style = SyntheticStyle::shapes;
  uint64_t seed = 0;
};

/// Writes root/cat_XXX/img_YYY.png. Existing files with the same names are overwritten.
void make_synthetic_dataset(const std::filesystem::path& root, const SyntheticOptions& options);

SyntheticStyle parse_synthetic_style(const std::string& name);

}  // namespace eqgan

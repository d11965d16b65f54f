#pragma once

#include <filesystem>
#include <vector>

#include "egocurate/common.hpp"

namespace egocurate {

// Interleaved pixels in [0,1]; channels is 1 (gray) or 3 (RGB).
struct FrameImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> pixels;

  float at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
};

FrameImage make_frame(int width, int height, int channels, float fill = 0.0f);

// Luma: 0.299 R + 0.587 G + 0.114 B.
FrameImage to_gray(const FrameImage& frame);

FrameImage resize_bilinear(const FrameImage& frame, int new_width, int new_height);

// Scales so width*height lands on target_area (aspect preserved, dimensions
// rounded to nearest).
FrameImage resize_to_area(const FrameImage& frame, int target_area);

// Population variance of the 4-neighbor Laplacian response over interior
// pixels (1-pixel border excluded). Color input is converted first.
double laplacian_variance(const FrameImage& frame);

FrameImage load_frame(const std::filesystem::path& path);
void save_frame(const FrameImage& frame, const std::filesystem::path& path);

}  // namespace egocurate

#pragma once

// Minimal planar images and the two on-disk formats used for render output:
// binary PPM (P6, 8-bit) for visualization and little-endian PFM for floats.

#include <filesystem>
#include <vector>

#include "hoi/common.hpp"

namespace hoi {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;  ///< row-major, interleaved channels

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c = 0) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
};

/// Values are clamped to [0,1] and quantized; 1-channel images are written as gray.
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);
/// 1 or 3 channels, stored bottom-to-top per the format, scale -1 (little-endian).
void write_pfm(const std::filesystem::path& path, const Image& img);
Image read_pfm(const std::filesystem::path& path);

}  // namespace hoi

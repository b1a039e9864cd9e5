#pragma once

#include <filesystem>

#include "semsr/tensor.hpp"

namespace semsr {

/// 8-bit lossless PNG storage. RGB images are (1,H,W,3) tensors in [0,1];
/// values are rounded to the nearest of 256 levels on write.
void write_png_rgb(const std::filesystem::path& path, const ImageTensor& img);
ImageTensor read_png_rgb(const std::filesystem::path& path);

void write_png_gray(const std::filesystem::path& path, const LabelMask& mask);
LabelMask read_png_gray(const std::filesystem::path& path);

/// Raw 8-bit RGB raster (row-major, 3 bytes per pixel) written as PNG.
void write_png_raster(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb);

inline float quantize_unit(float v) {
  const float c = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return float(int(c * 255.f + 0.5f)) / 255.f;
}

}  // namespace semsr

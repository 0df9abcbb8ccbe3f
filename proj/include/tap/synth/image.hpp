#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tap/tensor/tensor.hpp"

namespace tap::synth {

// RGB image, row-major HxWx3, values nominally in [0, 1].
struct Image {
  std::size_t height = 0, width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w * 3, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  void clamp01();
};

// Stacks same-sized images into [B, H, W, 3].
Tensor to_tensor(const std::vector<const Image*>& images);
Tensor to_tensor(const Image& image);
// Row b of a [B, H, W, 3] tensor.
Image from_tensor(const Tensor& batch, std::size_t b = 0);

// 8-bit RGB PNG. Values are clamped and rounded to the nearest level.
void write_png(const std::string& path, const Image& image);
Image read_png(const std::string& path);
// Grayscale PNG from a single-channel HxW buffer in [0, 1].
void write_gray_png(const std::string& path, std::size_t height, std::size_t width, const std::vector<double>& values);

}  // namespace tap::synth

#pragma once

#include <vector>

#include "tap/synth/image.hpp"

namespace tap::eval {

inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) over all pixels and channels, capped for identical inputs.
double psnr(const synth::Image& a, const synth::Image& b, double cap = kPsnrCap);

// Mean SSIM of the luma channels: 11x11 Gaussian window (sigma 1.5), valid
// positions only, k1 = 0.01, k2 = 0.03, L = 1.
double ssim(const synth::Image& a, const synth::Image& b);

std::vector<double> luma(const synth::Image& im);

}  // namespace tap::eval

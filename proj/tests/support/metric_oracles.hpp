#pragma once

#include <cmath>
#include <cstdint>

#include "tap/core/rng.hpp"
#include "tap/synth/image.hpp"

// Plain loop PSNR / SSIM used to cross-check the library metrics.
namespace tap::testing {

inline synth::Image random_image(std::uint64_t seed, std::size_t h, std::size_t w) {
  Rng rng(seed);
  synth::Image im(h, w);
  for (auto& v : im.pixels) v = rng.uniform();
  return im;
}

inline double oracle_psnr(const synth::Image& a, const synth::Image& b) {
  double se = 0.0;
  for (std::size_t y = 0; y < a.height; ++y)
    for (std::size_t x = 0; x < a.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = a.at(y, x, c) - b.at(y, x, c);
        se += d * d;
      }
  return 10.0 * std::log10(1.0 / (se / double(a.height * a.width * 3)));
}

// Direct 2-D windowed SSIM on luma, valid positions only.
inline double oracle_ssim(const synth::Image& a, const synth::Image& b) {
  const int r = 5;
  double g[11][11], gs = 0.0;
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) gs += g[i + r][j + r] = std::exp(-(i * i + j * j) / (2 * 1.5 * 1.5));
  auto lum = [](const synth::Image& im, std::size_t y, std::size_t x) {
    return 0.299 * im.at(y, x, 0) + 0.587 * im.at(y, x, 1) + 0.114 * im.at(y, x, 2);
  };
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y = r; y + r < a.height; ++y)
    for (std::size_t x = r; x + r < a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) {
          const double w = g[i + r][j + r] / gs;
          const double va = lum(a, y + i, x + j), vb = lum(b, y + i, x + j);
          ma += w * va, mb += w * vb, saa += w * va * va, sbb += w * vb * vb, sab += w * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / double(count);
}

}  // namespace tap::testing

#include "tap/eval/metrics.hpp"

#include <cmath>

#include "tap/core/errors.hpp"

namespace tap::eval {

namespace {

void same_size(const synth::Image& a, const synth::Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(what) + ": " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

constexpr int kWin = 11;

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kWin);
  double s = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    s += k[i];
  }
  for (auto& v : k) v /= s;
  return k;
}

// Separable valid-mode filtering of an HxW plane.
std::vector<double> filter_valid(const std::vector<double>& x, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t ow = w - kWin + 1, oh = h - kWin + 1;
  std::vector<double> rows(h * ow), out(oh * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x0 = 0; x0 < ow; ++x0) {
      double acc = 0.0;
      for (int j = 0; j < kWin; ++j) acc += k[j] * x[y * w + x0 + j];
      rows[y * ow + x0] = acc;
    }
  for (std::size_t y0 = 0; y0 < oh; ++y0)
    for (std::size_t x0 = 0; x0 < ow; ++x0) {
      double acc = 0.0;
      for (int j = 0; j < kWin; ++j) acc += k[j] * rows[(y0 + j) * ow + x0];
      out[y0 * ow + x0] = acc;
    }
  return out;
}

}  // namespace

std::vector<double> luma(const synth::Image& im) {
  std::vector<double> y(im.height * im.width);
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = 0.299 * im.pixels[i * 3] + 0.587 * im.pixels[i * 3 + 1] + 0.114 * im.pixels[i * 3 + 2];
  return y;
}

double psnr(const synth::Image& a, const synth::Image& b, double cap) {
  same_size(a, b, "psnr");
  // Neumaier summation keeps uniform offsets exact (0.1 -> 20 dB).
  double se = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    const double v = d * d, t = se + v;
    comp += std::abs(se) >= v ? (se - t) + v : (v - t) + se;
    se = t;
  }
  const double mse = (se + comp) / static_cast<double>(a.pixels.size());
  if (mse == 0.0) return cap;
  return std::min(cap, -10.0 * std::log10(mse));
}

double ssim(const synth::Image& a, const synth::Image& b) {
  same_size(a, b, "ssim");
  if (a.height < kWin || a.width < kWin) throw ShapeError("ssim: image smaller than the 11x11 window");
  const std::size_t h = a.height, w = a.width;
  const auto k = gaussian_kernel();
  const auto x = luma(a), y = luma(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k), sxy = filter_valid(xy, h, w, k);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
    acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return acc / static_cast<double>(mx.size());
}

}  // namespace tap::eval

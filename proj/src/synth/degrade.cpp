#include "tap/synth/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tap/core/errors.hpp"
#include "tap/core/rng.hpp"

namespace tap::synth {

const char* weather_name(Weather w) {
  switch (w) {
    case Weather::Rain:
      return "rain";
    case Weather::Snow:
      return "snow";
    case Weather::Haze:
      return "haze";
    case Weather::Raindrop:
      return "raindrop";
  }
  return "?";
}

Weather parse_weather(const std::string& name) {
  for (Weather w : {Weather::Rain, Weather::Snow, Weather::Haze, Weather::Raindrop}) {
    if (name == weather_name(w)) return w;
  }
  throw ConfigError("unknown degradation task '" + name + "' (expected rain, snow, haze or raindrop)");
}

namespace {

void unit_range(double v, const std::string& field) {
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(field + " must lie in [0, 1], got " + std::to_string(v));
}

void radius_range(double lo, double hi, const std::string& field) {
  if (!(lo > 0.0 && lo <= hi)) throw ConfigError(field + ": need 0 < radius_min <= radius_max");
}

}  // namespace

void DegradationSpec::validate() const {
  switch (task) {
    case Weather::Haze:
      if (!(haze.t_min > 0.0 && haze.t_min <= 1.0)) throw ConfigError("haze.t_min must lie in (0, 1]");
      if (!(haze.t_max >= haze.t_min && haze.t_max <= 1.0)) throw ConfigError("haze.t_max must lie in [t_min, 1]");
      for (double a : haze.airlight) unit_range(a, "haze.airlight");
      break;
    case Weather::Rain:
      unit_range(rain.intensity, "rain.intensity");
      if (!(rain.length_px > 0.0)) throw ConfigError("rain.length_px must be positive");
      if (!std::isfinite(rain.angle_deg)) throw ConfigError("rain.angle_deg must be finite");
      break;
    case Weather::Snow:
      unit_range(snow.opacity, "snow.opacity");
      radius_range(snow.radius_min, snow.radius_max, "snow");
      break;
    case Weather::Raindrop:
      unit_range(raindrop.darkening, "raindrop.darkening");
      radius_range(raindrop.radius_min, raindrop.radius_max, "raindrop");
      if (!(raindrop.blur_radius >= 0.0)) throw ConfigError("raindrop.blur_radius must be >= 0");
      break;
  }
}

namespace {

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Sum of a few random low-frequency cosines, rescaled to [0, 1].
std::vector<double> smooth_field(std::size_t h, std::size_t w, Rng& rng, std::size_t waves, double max_freq) {
  std::vector<double> f(h * w, 0.0);
  for (std::size_t k = 0; k < waves; ++k) {
    const double fx = rng.uniform(-max_freq, max_freq), fy = rng.uniform(-max_freq, max_freq);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = rng.uniform(0.5, 1.0);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double u = static_cast<double>(x) / static_cast<double>(w);
        const double v = static_cast<double>(y) / static_cast<double>(h);
        f[y * w + x] += amp * std::cos(2.0 * std::numbers::pi * (fx * u + fy * v) + phase);
      }
  }
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  const double a = *lo, span = *hi - *lo;
  for (auto& v : f) v = span > 0.0 ? (v - a) / span : 0.5;
  return f;
}

}  // namespace

Image gen_clean(std::uint64_t seed, std::size_t height, std::size_t width) {
  if (height < 16 || width < 16) throw ConfigError("clean images must be at least 16x16");
  Rng rng(seed);
  const std::size_t h = height, w = width;
  Image im(h, w);
  // Background: a colored gradient between two random colors.
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(0.1, 0.9);
    c1[c] = rng.uniform(0.1, 0.9);
  }
  const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double gx = std::cos(ang), gy = std::sin(ang);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double u = (static_cast<double>(x) / w - 0.5) * gx + (static_cast<double>(y) / h - 0.5) * gy + 0.5;
      const double t = std::clamp(u, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) im.at(y, x, c) = c0[c] * (1.0 - t) + c1[c] * t;
    }
  // Shapes: rectangles and disks with flat random colors.
  const std::size_t shapes = 4 + rng.below(5);
  for (std::size_t s = 0; s < shapes; ++s) {
    double col[3];
    for (auto& c : col) c = rng.uniform(0.0, 1.0);
    const double alpha = rng.uniform(0.6, 1.0);
    const double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h);
    const double rx = rng.uniform(0.08, 0.3) * w, ry = rng.uniform(0.08, 0.3) * h;
    const bool disk = rng.bernoulli(0.5);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
        const bool inside = disk ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) im.at(y, x, c) = (1.0 - alpha) * im.at(y, x, c) + alpha * col[c];
      }
  }
  // Band-limited texture shared across channels plus a little per-channel tint.
  const auto tex = smooth_field(h, w, rng, 6, 6.0);
  const double tex_amp = rng.uniform(0.05, 0.15);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) im.at(y, x, c) += tex_amp * (tex[y * w + x] - 0.5);
  im.clamp01();
  return im;
}

std::vector<double> transmission_map(const HazeParams& p, std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  auto t = smooth_field(height, width, rng, 3, 1.5);
  for (auto& v : t) v = p.t_min + (p.t_max - p.t_min) * v;
  return t;
}

Image apply_haze(const Image& hq, const std::vector<double>& transmission, const std::array<double, 3>& airlight) {
  if (transmission.size() != hq.height * hq.width) throw ShapeError("apply_haze: transmission map size mismatch");
  Image lq(hq.height, hq.width);
  for (std::size_t i = 0; i < transmission.size(); ++i) {
    const double t = transmission[i];
    if (!(t > 0.0 && t <= 1.0)) throw DomainError("apply_haze: transmission must lie in (0, 1], got " + std::to_string(t));
    for (int c = 0; c < 3; ++c) lq.pixels[i * 3 + c] = t * hq.pixels[i * 3 + c] + (1.0 - t) * airlight[c];
  }
  lq.clamp01();
  return lq;
}

Image apply_rain(const Image& hq, const RainParams& p, std::uint64_t seed, std::vector<double>* layer_out) {
  Rng rng(seed);
  const std::size_t h = hq.height, w = hq.width;
  std::vector<double> layer(h * w, 0.0);
  const double th = p.angle_deg * std::numbers::pi / 180.0;
  const double dx = std::cos(th), dy = -std::sin(th);  // image y grows downward
  const double half = 0.5 * p.length_px, width_sd = 0.5;
  for (std::size_t s = 0; s < p.streak_count; ++s) {
    const double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h);
    const double strength = p.intensity * rng.uniform(0.6, 1.0);
    const long x0 = static_cast<long>(std::floor(cx - half - 2)), x1 = static_cast<long>(std::ceil(cx + half + 2));
    const long y0 = static_cast<long>(std::floor(cy - half - 2)), y1 = static_cast<long>(std::ceil(cy + half + 2));
    for (long y = std::max(0L, y0); y < std::min<long>(h, y1); ++y)
      for (long x = std::max(0L, x0); x < std::min<long>(w, x1); ++x) {
        const double px = x + 0.5 - cx, py = y + 0.5 - cy;
        const double along = px * dx + py * dy;
        if (std::abs(along) > half) continue;
        const double across = -px * dy + py * dx;
        const double v = strength * std::exp(-across * across / (2.0 * width_sd * width_sd));
        auto& l = layer[y * w + x];
        l = std::max(l, v);
      }
  }
  Image lq = hq;
  for (std::size_t i = 0; i < h * w; ++i)
    for (int c = 0; c < 3; ++c) lq.pixels[i * 3 + c] += layer[i];
  lq.clamp01();
  if (layer_out) *layer_out = std::move(layer);
  return lq;
}

Image apply_snow(const Image& hq, const SnowParams& p, std::uint64_t seed, std::vector<double>* layer_out) {
  Rng rng(seed);
  const std::size_t h = hq.height, w = hq.width;
  std::vector<double> layer(h * w, 0.0);
  for (std::size_t s = 0; s < p.flake_count; ++s) {
    const double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h);
    const double r = rng.uniform(p.radius_min, p.radius_max);
    const double strength = p.opacity * rng.uniform(0.7, 1.0);
    for (long y = std::max(0L, static_cast<long>(cy - r - 1)); y < std::min<long>(h, static_cast<long>(cy + r + 2)); ++y)
      for (long x = std::max(0L, static_cast<long>(cx - r - 1)); x < std::min<long>(w, static_cast<long>(cx + r + 2));
           ++x) {
        const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
        const double v = strength * (1.0 - smoothstep(0.5 * r, r, d));
        auto& l = layer[y * w + x];
        l = std::max(l, v);
      }
  }
  Image lq = hq;
  for (std::size_t i = 0; i < h * w; ++i)
    for (int c = 0; c < 3; ++c) lq.pixels[i * 3 + c] += layer[i];
  lq.clamp01();
  if (layer_out) *layer_out = std::move(layer);
  return lq;
}

namespace {

Image box_blur(const Image& im, std::size_t radius) {
  if (radius == 0) return im;
  const std::size_t h = im.height, w = im.width;
  const long r = static_cast<long>(radius);
  Image tmp(h, w), out(h, w);
  const double norm = 1.0 / static_cast<double>(2 * r + 1);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (long k = -r; k <= r; ++k) acc += im.at(y, std::clamp<long>(x + k, 0, w - 1), c);
        tmp.at(y, x, c) = acc * norm;
      }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (long k = -r; k <= r; ++k) acc += tmp.at(std::clamp<long>(y + k, 0, h - 1), x, c);
        out.at(y, x, c) = acc * norm;
      }
  return out;
}

}  // namespace

Image apply_raindrop(const Image& hq, const RaindropParams& p, std::uint64_t seed, std::vector<double>* mask_out) {
  Rng rng(seed);
  const std::size_t h = hq.height, w = hq.width;
  std::vector<double> mask(h * w, 0.0);
  for (std::size_t s = 0; s < p.drop_count; ++s) {
    const double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h);
    const double r = rng.uniform(p.radius_min, p.radius_max);
    for (long y = std::max(0L, static_cast<long>(cy - r - 1)); y < std::min<long>(h, static_cast<long>(cy + r + 2)); ++y)
      for (long x = std::max(0L, static_cast<long>(cx - r - 1)); x < std::min<long>(w, static_cast<long>(cx + r + 2));
           ++x) {
        const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
        auto& m = mask[y * w + x];
        m = std::max(m, 1.0 - smoothstep(0.6 * r, r, d));
      }
  }
  const Image blurred = box_blur(hq, static_cast<std::size_t>(std::lround(p.blur_radius)));
  Image lq = hq;
  for (std::size_t i = 0; i < h * w; ++i)
    for (int c = 0; c < 3; ++c) {
      const double occluded = (1.0 - p.darkening) * blurred.pixels[i * 3 + c];
      lq.pixels[i * 3 + c] = (1.0 - mask[i]) * hq.pixels[i * 3 + c] + mask[i] * occluded;
    }
  lq.clamp01();
  if (mask_out) *mask_out = std::move(mask);
  return lq;
}

DegradationSample synthesize(const DegradationSpec& spec, std::size_t height, std::size_t width) {
  spec.validate();
  DegradationSample s;
  s.task = spec.task;
  s.seed = spec.seed;
  s.hq = gen_clean(mix_seed(spec.seed, 1), height, width);
  const std::uint64_t dseed = mix_seed(spec.seed, 2);
  switch (spec.task) {
    case Weather::Haze:
      s.truth.transmission = transmission_map(spec.haze, height, width, dseed);
      s.truth.airlight = spec.haze.airlight;
      s.lq = apply_haze(s.hq, s.truth.transmission, s.truth.airlight);
      break;
    case Weather::Rain:
      s.lq = apply_rain(s.hq, spec.rain, dseed, &s.truth.layer);
      break;
    case Weather::Snow:
      s.lq = apply_snow(s.hq, spec.snow, dseed, &s.truth.layer);
      break;
    case Weather::Raindrop:
      s.lq = apply_raindrop(s.hq, spec.raindrop, dseed, &s.truth.layer);
      break;
  }
  return s;
}

}  // namespace tap::synth

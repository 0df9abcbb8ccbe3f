#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tap/synth/image.hpp"

namespace tap::synth {

enum class Weather { Rain, Snow, Haze, Raindrop };

const char* weather_name(Weather w);
Weather parse_weather(const std::string& name);  // ConfigError on unknown names

struct HazeParams {
  double t_min = 0.4, t_max = 0.9;
  std::array<double, 3> airlight{0.85, 0.85, 0.85};
};

struct RainParams {
  std::size_t streak_count = 60;
  double angle_deg = 75.0;  // from the horizontal axis
  double length_px = 12.0;
  double intensity = 0.6;
};

struct SnowParams {
  std::size_t flake_count = 30;
  double radius_min = 1.5, radius_max = 3.5;
  double opacity = 0.85;
};

struct RaindropParams {
  std::size_t drop_count = 12;
  double radius_min = 2.0, radius_max = 4.5;
  double blur_radius = 2.0;
  double darkening = 0.35;
};

struct DegradationSpec {
  Weather task = Weather::Rain;
  std::uint64_t seed = 0;
  HazeParams haze;
  RainParams rain;
  SnowParams snow;
  RaindropParams raindrop;

  // Checks the parameter record of `task`; ConfigError names the bad field.
  void validate() const;
};

// Ground truth of a degradation. Haze fills transmission/airlight; the other
// tasks fill `layer` (additive streaks/flakes, or the raindrop coverage mask).
struct Truth {
  std::vector<double> transmission;  // HxW
  std::array<double, 3> airlight{0.0, 0.0, 0.0};
  std::vector<double> layer;         // HxW
};

struct DegradationSample {
  Weather task = Weather::Rain;
  std::uint64_t seed = 0;
  Image lq, hq;
  Truth truth;
};

// Procedural clean image: smooth gradients, rectangles, disks and
// band-limited noise. Deterministic per seed; values in [0, 1].
Image gen_clean(std::uint64_t seed, std::size_t height, std::size_t width);

// Smooth transmission map with values in [t_min, t_max].
std::vector<double> transmission_map(const HazeParams& p, std::size_t height, std::size_t width, std::uint64_t seed);

// lq = T * hq + (1 - T) * A, clamped. Throws DomainError for T outside (0, 1].
Image apply_haze(const Image& hq, const std::vector<double>& transmission, const std::array<double, 3>& airlight);
Image apply_rain(const Image& hq, const RainParams& p, std::uint64_t seed, std::vector<double>* layer = nullptr);
Image apply_snow(const Image& hq, const SnowParams& p, std::uint64_t seed, std::vector<double>* layer = nullptr);
Image apply_raindrop(const Image& hq, const RaindropParams& p, std::uint64_t seed, std::vector<double>* mask = nullptr);

// Clean image plus the degradation of spec.task, both derived from spec.seed.
DegradationSample synthesize(const DegradationSpec& spec, std::size_t height, std::size_t width);

}  // namespace tap::synth

#include "tap/objectives/perceptual.hpp"

#include <algorithm>
#include <cmath>

#include "tap/core/errors.hpp"
#include "tap/core/rng.hpp"
#include "tap/tensor/ops.hpp"

namespace tap::objectives {

namespace {

constexpr std::size_t kChannels[RandomConvPyramid::kLayers + 1] = {3, 8, 8, 16, 16, 32, 32};
constexpr std::size_t kStrides[RandomConvPyramid::kLayers] = {1, 2, 1, 2, 1, 1};

}  // namespace

RandomConvPyramid::RandomConvPyramid(std::uint64_t seed, std::vector<std::size_t> taps)
    : seed_(seed), taps_(std::move(taps)) {
  if (taps_.empty()) throw ConfigError("perceptual extractor needs at least one tap");
  for (auto t : taps_) {
    if (t < 1 || t > kLayers) {
      throw ConfigError("perceptual tap " + std::to_string(t) + " outside layers 1.." + std::to_string(kLayers));
    }
  }
  std::sort(taps_.begin(), taps_.end());
  taps_.erase(std::unique(taps_.begin(), taps_.end()), taps_.end());
  Rng rng(seed);
  for (std::size_t l = 0; l < kLayers; ++l) {
    const std::size_t ci = kChannels[l], co = kChannels[l + 1];
    weights_.push_back(Tensor::randn({3, 3, ci, co}, rng, std::sqrt(2.0 / static_cast<double>(9 * ci))));
    biases_.push_back(Tensor::uniform({co}, rng, -0.05, 0.05));
    strides_.push_back(kStrides[l]);
  }
}

std::vector<Tensor> RandomConvPyramid::features(const Tensor& images) const {
  if (images.dim() != 4 || images.size(3) != 3) {
    throw ShapeError("perceptual extractor expects [B,H,W,3], got " + shape_str(images.shape()));
  }
  std::vector<Tensor> out;
  Tensor x = images;
  for (std::size_t l = 0; l < kLayers && out.size() < taps_.size(); ++l) {
    x = relu(add(conv2d(x, weights_[l], strides_[l], 1), biases_[l]));
    if (std::find(taps_.begin(), taps_.end(), l + 1) != taps_.end()) out.push_back(x);
  }
  return out;
}

std::vector<std::size_t> taps_for_layers(const std::vector<std::size_t>& vgg_layers) {
  std::vector<std::size_t> taps;
  for (auto v : vgg_layers) {
    switch (v) {
      case 3:
        taps.push_back(3);
        break;
      case 8:
        taps.push_back(5);
        break;
      case 15:
        taps.push_back(6);
        break;
      default:
        throw ConfigError("perceptual layer " + std::to_string(v) + " has no tap (supported: 3, 8, 15)");
    }
  }
  return taps;
}

}  // namespace tap::objectives

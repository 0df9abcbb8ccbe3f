#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tap/tensor/tensor.hpp"

namespace tap::objectives {

// Anything that maps an image batch [B,H,W,3] to a list of feature maps.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Tensor> features(const Tensor& images) const = 0;
};

// Frozen six-layer random conv pyramid (3x3 kernels, ReLU, stride 2 at layers
// 2 and 4). `taps` are 1-based layer indices whose activations are returned.
class RandomConvPyramid : public FeatureExtractor {
 public:
  static constexpr std::size_t kLayers = 6;

  explicit RandomConvPyramid(std::uint64_t seed, std::vector<std::size_t> taps = {3, 5, 6});

  std::vector<Tensor> features(const Tensor& images) const override;
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::size_t>& taps() const { return taps_; }

 private:
  std::uint64_t seed_;
  std::vector<std::size_t> taps_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
  std::vector<std::size_t> strides_;
};

// Maps the VGG-style layer indices {3, 8, 15} onto pyramid taps {3, 5, 6}.
std::vector<std::size_t> taps_for_layers(const std::vector<std::size_t>& vgg_layers);

}  // namespace tap::objectives

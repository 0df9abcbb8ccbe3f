#pragma once

#include <cstddef>

#include "tap/core/rng.hpp"
#include "tap/model/module.hpp"
#include "tap/tensor/tensor.hpp"

namespace tap::model {

// y = x W + b over the last axis; W is [in, out].
class Linear : public Module {
 public:
  Linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true);
  Tensor forward(const Tensor& x) const;

  Tensor weight;
  Tensor bias;  // undefined when constructed without bias
};

// NHWC convolution with bias, kernel [k,k,in,out].
class Conv2d : public Module {
 public:
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng);
  Tensor forward(const Tensor& x) const;

  Tensor weight;
  Tensor bias;
  std::size_t stride;
  std::size_t pad;
};

// Output of RescaleNorm::normalize: the standardized (affine) features and
// the removed per-token statistics, both [..., 1].
struct NormState {
  Tensor normed;
  Tensor mean;
  Tensor std;
};

// Rescale layer normalization. Each token is standardized over channels; its
// std and mean are mapped through learned per-channel affines and re-injected
// after the wrapped sublayer. Initialized so that reinject(normalize(x)) == x.
class RescaleNorm : public Module {
 public:
  explicit RescaleNorm(std::size_t dim, double eps = 1e-6);

  NormState normalize(const Tensor& x) const;
  Tensor reinject(const Tensor& y, const NormState& state) const;
  Tensor forward(const Tensor& x) const;

  Tensor gamma, beta;              // affine on the standardized features
  Tensor std_scale, std_shift;     // rescale = std * std_scale + std_shift
  Tensor mean_scale, mean_shift;   // rebias  = mean * mean_scale + mean_shift
  double eps;
};

class Mlp : public Module {
 public:
  Mlp(std::size_t dim, std::size_t hidden, Rng& rng);
  Tensor forward(const Tensor& x) const;

  Linear fc1;
  Linear fc2;
};

// Selective-kernel fusion of a skip feature with an upsampled decoder
// feature: pooled descriptor -> bottleneck MLP -> per-channel softmax over the
// two branches -> convex combination.
class SkFusion : public Module {
 public:
  SkFusion(std::size_t dim, Rng& rng, std::size_t reduction = 8);

  // [B,2,C] branch weights; index 0 is the skip branch.
  Tensor branch_weights(const Tensor& skip, const Tensor& up) const;
  Tensor forward(const Tensor& skip, const Tensor& up) const;

  Linear squeeze;
  Linear expand;
  std::size_t dim;
};

}  // namespace tap::model

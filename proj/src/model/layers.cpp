#include "tap/model/layers.hpp"

#include <algorithm>
#include <cmath>

#include "tap/core/errors.hpp"
#include "tap/tensor/ops.hpp"

namespace tap::model {

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = register_parameter("weight", Tensor::uniform({in, out}, rng, -bound, bound));
  if (with_bias) bias = register_parameter("bias", Tensor::zeros({out}));
}

Tensor Linear::forward(const Tensor& x) const {
  return linear(x, weight, bias);
}

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_, std::size_t pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(kernel * kernel * in));
  weight = register_parameter("weight", Tensor::uniform({kernel, kernel, in, out}, rng, -bound, bound));
  bias = register_parameter("bias", Tensor::zeros({out}));
}

Tensor Conv2d::forward(const Tensor& x) const { return add(conv2d(x, weight, stride, pad), bias); }

RescaleNorm::RescaleNorm(std::size_t dim, double eps_) : eps(eps_) {
  gamma = register_parameter("gamma", Tensor::ones({dim}));
  beta = register_parameter("beta", Tensor::zeros({dim}));
  std_scale = register_parameter("std_scale", Tensor::ones({dim}));
  std_shift = register_parameter("std_shift", Tensor::zeros({dim}));
  mean_scale = register_parameter("mean_scale", Tensor::ones({dim}));
  mean_shift = register_parameter("mean_shift", Tensor::zeros({dim}));
}

NormState RescaleNorm::normalize(const Tensor& x) const {
  NormState s;
  s.mean = mean(x, -1, true);
  s.std = sqrt(add_scalar(variance(x, -1, true), eps));
  s.normed = affine(standardize(x, eps), gamma, beta);
  return s;
}

Tensor RescaleNorm::reinject(const Tensor& y, const NormState& state) const {
  return restore_stats(y, state.std, std_scale, std_shift, state.mean, mean_scale, mean_shift);
}

Tensor RescaleNorm::forward(const Tensor& x) const {
  const NormState s = normalize(x);
  return reinject(s.normed, s);
}

Mlp::Mlp(std::size_t dim, std::size_t hidden, Rng& rng) : fc1(dim, hidden, rng), fc2(hidden, dim, rng) {
  register_module("fc1", fc1);
  register_module("fc2", fc2);
}

Tensor Mlp::forward(const Tensor& x) const { return fc2.forward(gelu(fc1.forward(x))); }

SkFusion::SkFusion(std::size_t dim_, Rng& rng, std::size_t reduction)
    : squeeze(dim_, std::max<std::size_t>(dim_ / reduction, 4), rng),
      expand(std::max<std::size_t>(dim_ / reduction, 4), 2 * dim_, rng),
      dim(dim_) {
  register_module("squeeze", squeeze);
  register_module("expand", expand);
}

Tensor SkFusion::branch_weights(const Tensor& skip, const Tensor& up) const {
  if (skip.shape() != up.shape()) {
    throw ShapeError("sk_fuse: skip " + shape_str(skip.shape()) + " vs up " + shape_str(up.shape()));
  }
  const auto& s = skip.shape();
  if (s.size() != 4 || s[3] != dim) throw ShapeError("sk_fuse: expected [B,H,W," + std::to_string(dim) + "]");
  const Tensor pooled = mean(mean(add(skip, up), 1), 1);  // [B,C]
  const Tensor logits = expand.forward(gelu(squeeze.forward(pooled)));
  return softmax(reshape(logits, {s[0], 2, dim}), 1);
}

Tensor SkFusion::forward(const Tensor& skip, const Tensor& up) const {
  const auto& s = skip.shape();
  const Tensor w = branch_weights(skip, up);
  const Tensor w_skip = reshape(slice(w, 1, 0, 1), {s[0], 1, 1, dim});
  const Tensor w_up = reshape(slice(w, 1, 1, 1), {s[0], 1, 1, dim});
  return add(mul(skip, w_skip), mul(up, w_up));
}

}  // namespace tap::model

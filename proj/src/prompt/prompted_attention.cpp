#include "tap/prompt/prompted_attention.hpp"

#include "tap/core/errors.hpp"
#include "tap/model/window.hpp"
#include "tap/tensor/ops.hpp"

namespace tap::prompt {

std::size_t LayerPrompt::length() const {
  const Tensor& t = placement == Placement::KeyValue ? key : hidden;
  return t.defined() ? t.size(-2) : 0;
}

Tensor pad_bias(const Tensor& bias, std::size_t m) {
  if (m == 0) return bias;
  Shape zs = bias.shape();
  zs.back() = m;
  return concat({Tensor::zeros(zs), bias}, -1);
}

namespace {

Tensor expand_prompt(const Tensor& p, const Shape& like, const char* what) {
  const std::size_t d = like.back();
  if (p.size(-1) != d) {
    throw ShapeError(std::string("prompted_attention: ") + what + " prompt dim " + std::to_string(p.size(-1)) +
                     " != attention dim " + std::to_string(d));
  }
  Shape target = like;
  target[target.size() - 2] = p.size(-2);
  if (p.shape() == target) return p;
  if (p.dim() != 2) {
    throw ShapeError(std::string("prompted_attention: ") + what + " prompt " + shape_str(p.shape()) +
                     " cannot broadcast to " + shape_str(target));
  }
  return broadcast_to(p, target);
}

}  // namespace

Tensor prompted_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias,
                          const Tensor& prompt_key, const Tensor& prompt_value, const Tensor* mask, Tensor* probs) {
  if (!prompt_key.defined() && !prompt_value.defined()) return model::window_attention(q, k, v, bias, mask, probs);
  if (!prompt_key.defined() || !prompt_value.defined() || prompt_key.shape() != prompt_value.shape()) {
    throw ShapeError("prompted_attention: key and value prompts must both be present with equal shapes");
  }
  const std::size_t m = prompt_key.size(-2);
  const Tensor keys = concat({expand_prompt(prompt_key, k.shape(), "key"), k}, -2);
  const Tensor values = concat({expand_prompt(prompt_value, v.shape(), "value"), v}, -2);
  const Tensor padded_bias = bias.defined() ? pad_bias(bias, m) : bias;
  if (mask && mask->defined()) {
    const Tensor padded_mask = pad_bias(*mask, m);
    return model::window_attention(q, keys, values, padded_bias, &padded_mask, probs);
  }
  return model::window_attention(q, keys, values, padded_bias, nullptr, probs);
}

}  // namespace tap::prompt

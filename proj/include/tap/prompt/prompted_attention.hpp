#pragma once

#include <cstddef>
#include <vector>

#include "tap/tensor/tensor.hpp"

namespace tap::prompt {

// How prompts enter an attention layer.
enum class Placement {
  // Prompts prepended to keys and values only; query length is unchanged.
  KeyValue,
  // Prompts prepended to the layer's hidden states (so to Q, K and V); the
  // first m output tokens are trimmed afterwards.
  Hidden,
};

// Batch prompts for one attention layer. Tensors are [B, m, d] (one row set
// per image, chosen by the image's task). Undefined tensors mean "no prompt".
struct LayerPrompt {
  Placement placement = Placement::KeyValue;
  Tensor key;
  Tensor value;
  Tensor hidden;

  std::size_t length() const;
};

// One LayerPrompt per prompted attention layer, in model order.
using PromptSet = std::vector<LayerPrompt>;

// Prepends m zero columns (prompt keys carry no position) to a bias of shape
// [..., l, l], giving [..., l, m + l]. m == 0 returns the input unchanged.
Tensor pad_bias(const Tensor& bias, std::size_t m);

// softmax(Q [P_k, K]^T / sqrt(d) + pad(B) [+ pad(mask)]) [P_v, V].
// q/k/v [..., l, d]; prompt_key/prompt_value are [m, d] (shared by every
// leading index) or already expanded to [..., m, d]. Undefined prompts reduce
// to plain window attention.
Tensor prompted_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias,
                          const Tensor& prompt_key, const Tensor& prompt_value, const Tensor* mask = nullptr,
                          Tensor* probs = nullptr);

}  // namespace tap::prompt

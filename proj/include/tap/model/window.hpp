#pragma once

#include <cstddef>
#include <vector>

#include "tap/core/rng.hpp"
#include "tap/model/module.hpp"
#include "tap/tensor/tensor.hpp"

namespace tap::model {

// [B,H,W,C] -> [B*nW, window*window, C], windows in row-major grid order.
Tensor window_partition(const Tensor& x, std::size_t window);
// Inverse of window_partition for a [B,H,W,C] image.
Tensor window_reverse(const Tensor& windows, std::size_t window, std::size_t batch, std::size_t height,
                      std::size_t width);

// softmax(Q K^T / sqrt(d) + bias [+ mask]) V over the key axis.
// q [..., l, d], k/v [..., L, d]; bias and mask broadcast against [..., l, L].
// When `probs` is non-null it receives the attention weights.
Tensor window_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias,
                        const Tensor* mask = nullptr, Tensor* probs = nullptr);

// Flattened relative-offset index for a window: entry (i, j) addresses the
// table row for the 2-D offset between tokens i and j.
std::vector<std::size_t> relative_position_index(std::size_t window);

// Additive mask [nW, l, l] for cyclically shifted windows: 0 for pairs from
// the same pre-shift region, -1e9 otherwise.
Tensor shifted_window_mask(std::size_t height, std::size_t width, std::size_t window, std::size_t shift);

inline constexpr double kMaskedLogit = -1e9;

// Learned relative position bias, materialized as B [heads, l, l].
class RelPosBias : public Module {
 public:
  RelPosBias(std::size_t window, std::size_t heads, Rng& rng);
  Tensor materialize() const;

  Tensor table;  // [(2w-1)^2, heads]
  std::size_t window;
  std::size_t heads;

 private:
  std::vector<std::size_t> index_;
};

}  // namespace tap::model

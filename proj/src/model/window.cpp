#include "tap/model/window.hpp"

#include <cmath>

#include "tap/core/errors.hpp"
#include "tap/tensor/ops.hpp"

namespace tap::model {

Tensor window_partition(const Tensor& x, std::size_t window) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeError("window_partition: expected [B,H,W,C], got " + shape_str(s));
  if (window == 0 || s[1] % window || s[2] % window) {
    throw ConfigError("window_partition: " + std::to_string(s[1]) + "x" + std::to_string(s[2]) +
                      " is not divisible by window " + std::to_string(window));
  }
  const std::size_t gh = s[1] / window, gw = s[2] / window;
  const Tensor v = reshape(x, {s[0], gh, window, gw, window, s[3]});
  const Tensor p = permute(v, {0, 1, 3, 2, 4, 5});
  return reshape(p, {s[0] * gh * gw, window * window, s[3]});
}

Tensor window_reverse(const Tensor& windows, std::size_t window, std::size_t batch, std::size_t height,
                      std::size_t width) {
  const auto& s = windows.shape();
  if (window == 0 || height % window || width % window) {
    throw ConfigError("window_reverse: image not divisible by window " + std::to_string(window));
  }
  const std::size_t gh = height / window, gw = width / window;
  if (s.size() != 3 || s[0] != batch * gh * gw || s[1] != window * window) {
    throw ShapeError("window_reverse: " + shape_str(s) + " does not match image layout");
  }
  const Tensor v = reshape(windows, {batch, gh, gw, window, window, s[2]});
  const Tensor p = permute(v, {0, 1, 3, 2, 4, 5});
  return reshape(p, {batch, height, width, s[2]});
}

Tensor window_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& bias, const Tensor* mask,
                        Tensor* probs) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.size(-1)));
  return attention(q, k, v, scale, bias, mask ? *mask : Tensor(), probs);
}

std::vector<std::size_t> relative_position_index(std::size_t window) {
  const std::size_t l = window * window;
  const std::size_t span = 2 * window - 1;
  std::vector<std::size_t> idx(l * l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j) {
      const std::size_t dy = i / window + window - 1 - j / window;
      const std::size_t dx = i % window + window - 1 - j % window;
      idx[i * l + j] = dy * span + dx;
    }
  return idx;
}

Tensor shifted_window_mask(std::size_t height, std::size_t width, std::size_t window, std::size_t shift) {
  if (window == 0 || height % window || width % window) {
    throw ConfigError("shifted_window_mask: image not divisible by window");
  }
  // Region labels of the shifted image, as in the standard Swin construction.
  std::vector<int> region(height * width);
  auto band = [&](std::size_t p, std::size_t n) -> int {
    if (p < n - window) return 0;
    if (p < n - shift) return 1;
    return 2;
  };
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) region[y * width + x] = band(y, height) * 3 + band(x, width);
  const std::size_t gh = height / window, gw = width / window, l = window * window;
  std::vector<double> mask(gh * gw * l * l, 0.0);
  for (std::size_t wy = 0; wy < gh; ++wy)
    for (std::size_t wx = 0; wx < gw; ++wx) {
      const std::size_t w = wy * gw + wx;
      for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < l; ++j) {
          const int ri = region[(wy * window + i / window) * width + wx * window + i % window];
          const int rj = region[(wy * window + j / window) * width + wx * window + j % window];
          mask[(w * l + i) * l + j] = ri == rj ? 0.0 : kMaskedLogit;
        }
    }
  return Tensor::from({gh * gw, l, l}, std::move(mask));
}

RelPosBias::RelPosBias(std::size_t window_, std::size_t heads_, Rng& rng)
    : window(window_), heads(heads_), index_(relative_position_index(window_)) {
  const std::size_t span = 2 * window - 1;
  table = register_parameter("table", Tensor::randn({span * span, heads}, rng, 0.02));
}

Tensor RelPosBias::materialize() const {
  const std::size_t l = window * window;
  const Tensor rows = gather_rows(table, index_);  // [l*l, heads]
  return permute(reshape(rows, {l, l, heads}), {2, 0, 1});
}

}  // namespace tap::model

#pragma once

// Internal helpers shared by the op implementations.

#include <cstddef>
#include <string>
#include <vector>

#include "tap/core/errors.hpp"
#include "tap/tensor/tensor.hpp"

namespace tap::kernels {

inline std::size_t norm_axis(int axis, std::size_t ndim, const char* op) {
  const int n = static_cast<int>(ndim);
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(ndim));
  }
  return static_cast<std::size_t>(a);
}

inline std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Strides of `in` aligned to the (broadcast) output shape; 0 on broadcast axes.
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> st(out.size(), 0);
  const auto cs = contiguous_strides(in);
  const std::size_t off = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    st[off + i] = (in[i] == 1 && out[off + i] != 1) ? 0 : cs[i];
  }
  return st;
}

// Visits every output index with the matching offsets into two broadcast
// operands: f(out_index, offset_a, offset_b).
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t nd = out.size();
  if (nd == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t inner = out[nd - 1];
  const std::size_t la = sa[nd - 1];
  const std::size_t lb = sb[nd - 1];
  std::size_t outer = 1;
  for (std::size_t i = 0; i + 1 < nd; ++i) outer *= out[i];
  std::vector<std::size_t> ctr(nd, 0);
  std::size_t ia = 0, ib = 0, i = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) f(i++, ia + j * la, ib + j * lb);
    for (std::size_t d = nd - 1; d-- > 0;) {
      ++ctr[d];
      ia += sa[d];
      ib += sb[d];
      if (ctr[d] < out[d]) break;
      ia -= sa[d] * ctr[d];
      ib -= sb[d] * ctr[d];
      ctr[d] = 0;
    }
  }
}

inline void add_into(Buffer& dst, const Buffer& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Adds `g` into the gradient of `t`, copying on first write.
inline void accumulate(detail::TensorImpl& t, const Buffer& g) {
  if (t.grad.empty()) {
    t.grad = g;
  } else {
    add_into(t.grad, g);
  }
}

}  // namespace tap::kernels

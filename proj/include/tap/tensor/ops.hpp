#pragma once

#include <cstddef>
#include <vector>

#include "tap/tensor/tensor.hpp"

// Differentiable kernels. Every op validates shapes up front and raises
// ShapeError / ConfigError naming the offending shapes.
namespace tap {

// Elementwise with numpy-style broadcasting (right aligned).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);
Tensor neg(const Tensor& x);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
// tanh approximation
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// Reductions. The axis forms keep the reduced axis when keepdim is set.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim = false);
Tensor mean(const Tensor& x, int axis, bool keepdim = false);
// Population variance.
Tensor variance(const Tensor& x, int axis, bool keepdim = false);

// Norms over all elements.
Tensor l1_norm(const Tensor& x);
Tensor l2_norm(const Tensor& x);
// Cosine similarity of the two tensors flattened to vectors.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

// a[..., M, K] x b[..., K, N]. Batch dims must match, or one side is 2-D.
Tensor matmul(const Tensor& a, const Tensor& b);
// x [..., K] @ w [K, N] + b [N]; b may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& dims);
Tensor transpose(const Tensor& x, int axis0, int axis1);
Tensor broadcast_to(const Tensor& x, const Shape& shape);

Tensor concat(const std::vector<Tensor>& parts, int axis);
std::vector<Tensor> split(const Tensor& x, const std::vector<std::size_t>& sizes, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
// Stacks equal-shape tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);

Tensor softmax(const Tensor& x, int axis);

// (x - mean) / sqrt(var + eps) over the last axis.
Tensor standardize(const Tensor& x, double eps);
// x * scale + shift where scale/shift are per channel [C], per row [..., 1]
// or the full shape of x.
Tensor affine(const Tensor& x, const Tensor& scale, const Tensor& shift);

// y * (sigma * a + b) + (mu * c + d) with y [..., C], sigma/mu [..., 1] and
// a, b, c, d [C].
Tensor restore_stats(const Tensor& y, const Tensor& sigma, const Tensor& a, const Tensor& b, const Tensor& mu,
                     const Tensor& c, const Tensor& d);

// Fused softmax(q k^T * scale + bias + mask) v over the last axis.
// q [..., l, d], k [..., L, d], v [..., L, dv]; bias and mask (either may be
// undefined) must tile the trailing dims of the [..., l, L] scores. The mask
// is a constant. `probs`, when given, receives the (untracked) weights.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double scale, const Tensor& bias,
                 const Tensor& mask, Tensor* probs = nullptr);

// NHWC convolution: x [B,H,W,Ci], w [kh,kw,Ci,Co] -> [B,Ho,Wo,Co].
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad);

// Rows of a 2-D table selected by index: table [T,C] -> [n,C].
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& indices);

// Cyclic shift along one axis (positive shift moves elements to higher index).
Tensor roll(const Tensor& x, int axis, long shift);

// [B,H,W,C] <-> [B,H/r,W/r,r*r*C]; pixel order (dy, dx, c) within a block.
Tensor space_to_depth(const Tensor& x, std::size_t r);
Tensor depth_to_space(const Tensor& x, std::size_t r);

Tensor clamp(const Tensor& x, double lo, double hi);

Shape broadcast_shapes(const Shape& a, const Shape& b);

}  // namespace tap

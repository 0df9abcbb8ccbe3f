#include <algorithm>
#include <numeric>

#include "kernels.hpp"
#include "tap/tensor/ops.hpp"

namespace tap {

using detail::BackwardFn;
using detail::TensorImpl;

namespace {

// Visits output positions of a strided gather: f(out_index, in_offset).
template <class F>
void for_each_strided(const Shape& out, const std::vector<std::size_t>& in_strides, F&& f) {
  const std::vector<std::size_t> zero(out.size(), 0);
  kernels::for_each_broadcast(out, in_strides, zero,
                              [&](std::size_t i, std::size_t ia, std::size_t) { f(i, ia); });
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  for (auto d : shape) {
    if (d == 0) throw ShapeError("reshape: zero-sized dimension in " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->storage = x.impl()->storage;
  if (grad_enabled() && x.requires_grad()) {
    impl->requires_grad = true;
    auto node = std::make_shared<detail::TapeNode>();
    node->op = "reshape";
    node->inputs.push_back(x.impl());
    node->backward = [x](TensorImpl& o) {
      auto& t = *x.impl();
      if (t.grad.empty()) {
        t.grad = std::move(o.grad);
      } else {
        kernels::add_into(t.grad, o.grad);
      }
    };
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& dims) {
  const auto& s = x.shape();
  if (dims.size() != s.size()) throw ShapeError("permute: rank mismatch for " + shape_str(s));
  std::vector<std::size_t> seen(dims.size(), 0);
  for (auto d : dims) {
    if (d >= dims.size() || seen[d]++) throw ShapeError("permute: invalid axis order");
  }
  const auto cs = kernels::contiguous_strides(s);
  Shape out(dims.size());
  std::vector<std::size_t> st(dims.size());
  for (std::size_t i = 0; i < dims.size(); ++i) {
    out[i] = s[dims[i]];
    st[i] = cs[dims[i]];
  }
  const auto in = x.data();
  Buffer data(in.size());
  for_each_strided(out, st, [&](std::size_t i, std::size_t j) { data[i] = in[j]; });
  Shape out_copy = out;
  return detail::make_result("permute", std::move(out_copy), std::move(data), {x}, [&] {
    return BackwardFn([x, out, st](const TensorImpl& o) {
      const auto gx = x.impl()->grad_sink();
      for_each_strided(out, st, [&](std::size_t i, std::size_t j) { gx.put(j, o.grad[i]); });
    });
  });
}

Tensor transpose(const Tensor& x, int axis0, int axis1) {
  const auto a = kernels::norm_axis(axis0, x.dim(), "transpose");
  const auto b = kernels::norm_axis(axis1, x.dim(), "transpose");
  std::vector<std::size_t> dims(x.dim());
  std::iota(dims.begin(), dims.end(), 0);
  std::swap(dims[a], dims[b]);
  return permute(x, dims);
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (broadcast_shapes(x.shape(), shape) != shape) {
    throw ShapeError("broadcast_to: cannot expand " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  const auto st = kernels::broadcast_strides(x.shape(), shape);
  const auto in = x.data();
  Buffer data(shape_numel(shape));
  for_each_strided(shape, st, [&](std::size_t i, std::size_t j) { data[i] = in[j]; });
  return detail::make_result("broadcast_to", shape, std::move(data), {x}, [&] {
    return BackwardFn([x, shape, st](const TensorImpl& o) {
      auto& gx = x.impl()->ensure_grad();
      for_each_strided(shape, st, [&](std::size_t i, std::size_t j) { gx[j] += o.grad[i]; });
    });
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const auto& s0 = parts[0].shape();
  const auto ax = kernels::norm_axis(axis, s0.size(), "concat");
  Shape out = s0;
  out[ax] = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == ax) || s[i] == s0[i];
    if (!ok) throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(s0));
    out[ax] += s[ax];
    lens.push_back(s[ax]);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s0[i];
  for (std::size_t i = ax + 1; i < s0.size(); ++i) inner *= s0[i];
  const std::size_t row = out[ax] * inner;
  Buffer data(outer * row);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto in = parts[k].data();
    const std::size_t chunk = lens[k] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(in.data() + o * chunk, chunk, data.data() + o * row + off);
    off += chunk;
  }
  return detail::make_result("concat", out, std::move(data), parts, [&] {
    return BackwardFn([parts, lens, outer, inner, row](const TensorImpl& o) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t chunk = lens[k] * inner;
        if (parts[k].requires_grad()) {
          const auto g = parts[k].impl()->grad_sink();
          for (std::size_t a = 0; a < outer; ++a) {
            const double* src = o.grad.data() + a * row + off;
            for (std::size_t i = 0; i < chunk; ++i) g.put(a * chunk + i, src[i]);
          }
        }
        off += chunk;
      }
    });
  });
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const auto& s = x.shape();
  const auto ax = kernels::norm_axis(axis, s.size(), "slice");
  if (length == 0 || start + length > s[ax]) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range for axis of size " + std::to_string(s[ax]));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t row = s[ax] * inner;
  const std::size_t chunk = length * inner;
  const std::size_t off = start * inner;
  const auto in = x.data();
  Buffer data(outer * chunk);
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(in.data() + o * row + off, chunk, data.data() + o * chunk);
  Shape out = s;
  out[ax] = length;
  return detail::make_result("slice", std::move(out), std::move(data), {x}, [&] {
    return BackwardFn([x, outer, row, chunk, off](const TensorImpl& o) {
      auto& g = x.impl()->ensure_grad();
      for (std::size_t a = 0; a < outer; ++a) {
        const double* src = o.grad.data() + a * chunk;
        double* dst = g.data() + a * row + off;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
      }
    });
  });
}

std::vector<Tensor> split(const Tensor& x, const std::vector<std::size_t>& sizes, int axis) {
  const auto ax = kernels::norm_axis(axis, x.dim(), "split");
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total != x.shape()[ax]) {
    throw ShapeError("split: sizes sum to " + std::to_string(total) + " but axis has " +
                     std::to_string(x.shape()[ax]));
  }
  std::vector<Tensor> out;
  std::size_t start = 0;
  for (auto n : sizes) {
    out.push_back(slice(x, axis, start, n));
    start += n;
  }
  return out;
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("stack: no inputs");
  std::vector<Tensor> rows;
  rows.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw ShapeError("stack: " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    }
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    rows.push_back(reshape(p, s));
  }
  return concat(rows, 0);
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& indices) {
  if (table.dim() != 2) throw ShapeError("gather_rows: table must be 2-D, got " + shape_str(table.shape()));
  const std::size_t rows = table.shape()[0];
  const std::size_t cols = table.shape()[1];
  if (indices.empty()) throw ShapeError("gather_rows: empty index list");
  const auto in = table.data();
  Buffer data(indices.size() * cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) throw ShapeError("gather_rows: index " + std::to_string(indices[i]) + " out of range");
    std::copy_n(in.data() + indices[i] * cols, cols, data.data() + i * cols);
  }
  return detail::make_result("gather_rows", {indices.size(), cols}, std::move(data), {table}, [&] {
    return BackwardFn([table, indices, cols](const TensorImpl& o) {
      auto& g = table.impl()->ensure_grad();
      for (std::size_t i = 0; i < indices.size(); ++i)
        for (std::size_t c = 0; c < cols; ++c) g[indices[i] * cols + c] += o.grad[i * cols + c];
    });
  });
}

Tensor roll(const Tensor& x, int axis, long shift) {
  const auto& s = x.shape();
  const auto ax = kernels::norm_axis(axis, s.size(), "roll");
  const long n = static_cast<long>(s[ax]);
  const std::size_t sh = static_cast<std::size_t>(((shift % n) + n) % n);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[ax];
  const auto in = x.data();
  Buffer data(in.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      std::copy_n(in.data() + (o * len + l) * inner, inner, data.data() + (o * len + (l + sh) % len) * inner);
  return detail::make_result("roll", s, std::move(data), {x}, [&] {
    return BackwardFn([x, outer, len, inner, sh](const TensorImpl& o) {
      const auto g = x.impl()->grad_sink();
      for (std::size_t a = 0; a < outer; ++a)
        for (std::size_t l = 0; l < len; ++l) {
          const double* src = o.grad.data() + (a * len + (l + sh) % len) * inner;
          for (std::size_t i = 0; i < inner; ++i) g.put((a * len + l) * inner + i, src[i]);
        }
    });
  });
}

Tensor space_to_depth(const Tensor& x, std::size_t r) {
  const auto& s = x.shape();
  if (s.size() != 4 || r == 0 || s[1] % r || s[2] % r) {
    throw ShapeError("space_to_depth: " + shape_str(s) + " not divisible by " + std::to_string(r));
  }
  const Tensor v = reshape(x, {s[0], s[1] / r, r, s[2] / r, r, s[3]});
  const Tensor p = permute(v, {0, 1, 3, 2, 4, 5});
  return reshape(p, {s[0], s[1] / r, s[2] / r, r * r * s[3]});
}

Tensor depth_to_space(const Tensor& x, std::size_t r) {
  const auto& s = x.shape();
  if (s.size() != 4 || r == 0 || s[3] % (r * r)) {
    throw ShapeError("depth_to_space: channels of " + shape_str(s) + " not divisible by " + std::to_string(r * r));
  }
  const std::size_t c = s[3] / (r * r);
  const Tensor v = reshape(x, {s[0], s[1], s[2], r, r, c});
  const Tensor p = permute(v, {0, 1, 3, 2, 4, 5});
  return reshape(p, {s[0], s[1] * r, s[2] * r, c});
}

}  // namespace tap

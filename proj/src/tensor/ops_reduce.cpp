#include <cmath>
#include <memory>

#include "kernels.hpp"
#include "tap/tensor/ops.hpp"

namespace tap {

using detail::BackwardFn;
using detail::TensorImpl;

namespace {

struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

Shape reduced_shape(const Shape& s, std::size_t axis, bool keepdim) {
  Shape out = s;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<long>(axis));
    if (out.empty()) out.push_back(1);
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return detail::make_result("sum", {1}, {acc}, {x}, [&] {
    return BackwardFn([x](const TensorImpl& o) {
      auto& gx = x.impl()->ensure_grad();
      const double g = o.grad[0];
      for (auto& v : gx) v += g;
    });
  });
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum(const Tensor& x, int axis, bool keepdim) {
  const auto ax = kernels::norm_axis(axis, x.dim(), "sum");
  const auto v = axis_view(x.shape(), ax);
  const auto in = x.data();
  Buffer out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t l = 0; l < v.len; ++l) {
      const double* src = in.data() + (o * v.len + l) * v.inner;
      double* dst = out.data() + o * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
    }
  return detail::make_result("sum_axis", reduced_shape(x.shape(), ax, keepdim), std::move(out), {x}, [&] {
    return BackwardFn([x, v](const TensorImpl& o) {
      auto& gx = x.impl()->ensure_grad();
      for (std::size_t a = 0; a < v.outer; ++a)
        for (std::size_t l = 0; l < v.len; ++l) {
          double* dst = gx.data() + (a * v.len + l) * v.inner;
          const double* src = o.grad.data() + a * v.inner;
          for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
        }
    });
  });
}

Tensor mean(const Tensor& x, int axis, bool keepdim) {
  const auto ax = kernels::norm_axis(axis, x.dim(), "mean");
  return mul_scalar(sum(x, axis, keepdim), 1.0 / static_cast<double>(x.shape()[ax]));
}

Tensor variance(const Tensor& x, int axis, bool keepdim) {
  const auto ax = kernels::norm_axis(axis, x.dim(), "variance");
  const auto v = axis_view(x.shape(), ax);
  const auto in = x.data();
  const double n = static_cast<double>(v.len);
  auto mu = std::make_shared<Buffer>(v.outer * v.inner, 0.0);
  Buffer out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    double* m = mu->data() + o * v.inner;
    double* acc = out.data() + o * v.inner;
    for (std::size_t l = 0; l < v.len; ++l) {
      const double* src = in.data() + (o * v.len + l) * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) m[i] += src[i];
    }
    for (std::size_t i = 0; i < v.inner; ++i) m[i] /= n;
    for (std::size_t l = 0; l < v.len; ++l) {
      const double* src = in.data() + (o * v.len + l) * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) acc[i] += (src[i] - m[i]) * (src[i] - m[i]);
    }
    for (std::size_t i = 0; i < v.inner; ++i) acc[i] /= n;
  }
  return detail::make_result("variance", reduced_shape(x.shape(), ax, keepdim), std::move(out), {x}, [&] {
    return BackwardFn([x, v, mu, n](const TensorImpl& o) {
      const auto in = x.data();
      auto& gx = x.impl()->ensure_grad();
      for (std::size_t a = 0; a < v.outer; ++a)
        for (std::size_t l = 0; l < v.len; ++l) {
          const std::size_t base = (a * v.len + l) * v.inner;
          for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t r = a * v.inner + i;
            gx[base + i] += o.grad[r] * 2.0 * (in[base + i] - (*mu)[r]) / n;
          }
        }
    });
  });
}

Tensor l1_norm(const Tensor& x) { return sum(abs(x)); }

Tensor l2_norm(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v * v;
  const double n = std::sqrt(acc);
  return detail::make_result("l2_norm", {1}, {n}, {x}, [&] {
    return BackwardFn([x](const TensorImpl& o) {
      const double norm = o.data()[0];
      if (norm == 0.0) return;  // subgradient 0 at the origin
      auto& gx = x.impl()->ensure_grad();
      const auto in = x.data();
      const double s = o.grad[0] / norm;
      for (std::size_t i = 0; i < in.size(); ++i) gx[i] += s * in[i];
    });
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw ShapeError("cosine_similarity: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const Tensor fa = reshape(a, {a.numel()});
  const Tensor fb = reshape(b, {b.numel()});
  const Tensor na = l2_norm(fa);
  const Tensor nb = l2_norm(fb);
  if (na.item() == 0.0 || nb.item() == 0.0) throw DomainError("cosine_similarity of a zero vector");
  return div(sum(mul(fa, fb)), mul(na, nb));
}

Tensor softmax(const Tensor& x, int axis) {
  const auto ax = kernels::norm_axis(axis, x.dim(), "softmax");
  const auto v = axis_view(x.shape(), ax);
  const auto in = x.data();
  Buffer out(in.size());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.len * v.inner + i;
      double mx = in[base];
      for (std::size_t l = 1; l < v.len; ++l) mx = std::max(mx, in[base + l * v.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < v.len; ++l) {
        const double e = std::exp(in[base + l * v.inner] - mx);
        out[base + l * v.inner] = e;
        z += e;
      }
      const double inv = 1.0 / z;
      for (std::size_t l = 0; l < v.len; ++l) out[base + l * v.inner] *= inv;
    }
  return detail::make_result("softmax", x.shape(), std::move(out), {x}, [&] {
    return BackwardFn([x, v](const TensorImpl& o) {
      const auto gx = x.impl()->grad_sink();
      const auto& y = o.data();
      const auto& g = o.grad;
      for (std::size_t a = 0; a < v.outer; ++a)
        for (std::size_t i = 0; i < v.inner; ++i) {
          const std::size_t base = a * v.len * v.inner + i;
          double dot = 0.0;
          for (std::size_t l = 0; l < v.len; ++l) dot += g[base + l * v.inner] * y[base + l * v.inner];
          for (std::size_t l = 0; l < v.len; ++l) {
            const std::size_t k = base + l * v.inner;
            gx.put(k, y[k] * (g[k] - dot));
          }
        }
    });
  });
}

}  // namespace tap

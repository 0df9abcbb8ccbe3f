#include <cmath>
#include <memory>

#include "kernels.hpp"
#include "tap/tensor/ops.hpp"

namespace tap {

using detail::BackwardFn;
using detail::TensorImpl;

Tensor standardize(const Tensor& x, double eps) {
  if (eps <= 0.0) throw DomainError("standardize: eps must be positive");
  const std::size_t c = x.size(-1);
  const std::size_t rows = x.numel() / c;
  const auto in = x.data();
  Buffer out(in.size());
  auto inv_sigma = std::make_shared<Buffer>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = in.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += src[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (src[j] - mu) * (src[j] - mu);
    const double inv = 1.0 / std::sqrt(var / static_cast<double>(c) + eps);
    (*inv_sigma)[r] = inv;
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = (src[j] - mu) * inv;
  }
  return detail::make_result("standardize", x.shape(), std::move(out), {x}, [&] {
    return BackwardFn([x, inv_sigma, rows, c](const TensorImpl& o) {
      const auto gx = x.impl()->grad_sink();
      const double n = static_cast<double>(c);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g = o.grad.data() + r * c;
        const double* y = o.data().data() + r * c;
        double gm = 0.0, gy = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          gm += g[j];
          gy += g[j] * y[j];
        }
        gm /= n;
        gy /= n;
        const double inv = (*inv_sigma)[r];
        for (std::size_t j = 0; j < c; ++j) gx.put(r * c + j, (g[j] - gm - y[j] * gy) * inv);
      }
    });
  });
}

namespace {

// How a [rows, c] operand indexes into `scale`/`shift`: per channel (shape
// [c]), per row (shape [..., 1]) or elementwise (same shape as x).
enum class Bind { Channel, Row, Full };

Bind bind_of(const Tensor& t, const Shape& xs, const char* what) {
  Shape s = t.shape();
  while (s.size() > 1 && s[0] == 1) s.erase(s.begin());
  if (s == xs) return Bind::Full;
  if (s.size() == 1 && s[0] == xs.back()) return Bind::Channel;
  if (t.dim() == xs.size() && t.shape().back() == 1 &&
      std::equal(xs.begin(), xs.end() - 1, t.shape().begin())) {
    return Bind::Row;
  }
  throw ShapeError(std::string("affine: ") + what + " " + shape_str(t.shape()) + " does not bind to " +
                   shape_str(xs));
}

inline std::size_t index_of(Bind b, std::size_t r, std::size_t j, std::size_t c) {
  switch (b) {
    case Bind::Channel:
      return j;
    case Bind::Row:
      return r;
    case Bind::Full:
      break;
  }
  return r * c + j;
}

}  // namespace

Tensor affine(const Tensor& x, const Tensor& scale, const Tensor& shift) {
  const Shape& xs = x.shape();
  const Bind bs = bind_of(scale, xs, "scale");
  const Bind bt = bind_of(shift, xs, "shift");
  const std::size_t c = xs.back();
  const std::size_t rows = x.numel() / c;
  const auto in = x.data();
  const auto a = scale.data();
  const auto b = shift.data();
  Buffer out(in.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j)
      out[r * c + j] = in[r * c + j] * a[index_of(bs, r, j, c)] + b[index_of(bt, r, j, c)];
  return detail::make_result("affine", xs, std::move(out), {x, scale, shift}, [&] {
    return BackwardFn([x, scale, shift, bs, bt, rows, c](const TensorImpl& o) {
      const auto in = x.data();
      const auto a = scale.data();
      const auto& g = o.grad;
      if (x.requires_grad()) {
        const auto gx = x.impl()->grad_sink();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) gx.put(r * c + j, g[r * c + j] * a[index_of(bs, r, j, c)]);
      }
      if (scale.requires_grad()) {
        auto& ga = scale.impl()->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) ga[index_of(bs, r, j, c)] += g[r * c + j] * in[r * c + j];
      }
      if (shift.requires_grad()) {
        auto& gb = shift.impl()->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) gb[index_of(bt, r, j, c)] += g[r * c + j];
      }
    });
  });
}

Tensor restore_stats(const Tensor& y, const Tensor& sigma, const Tensor& a, const Tensor& b, const Tensor& mu,
                     const Tensor& c, const Tensor& d) {
  const Shape& ys = y.shape();
  const std::size_t ch = ys.back();
  const std::size_t rows = y.numel() / ch;
  Shape row_shape = ys;
  row_shape.back() = 1;
  if (sigma.shape() != row_shape || mu.shape() != row_shape) {
    throw ShapeError("restore_stats: statistics must be " + shape_str(row_shape));
  }
  for (const Tensor* t : {&a, &b, &c, &d}) {
    if (t->shape() != Shape{ch}) throw ShapeError("restore_stats: channel params must be [" + std::to_string(ch) + "]");
  }
  const auto py = y.data();
  const auto ps = sigma.data(), pm = mu.data();
  const auto pa = a.data(), pb = b.data(), pc = c.data(), pd = d.data();
  Buffer out(py.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < ch; ++j)
      out[r * ch + j] = py[r * ch + j] * (ps[r] * pa[j] + pb[j]) + pm[r] * pc[j] + pd[j];
  return detail::make_result("restore_stats", ys, std::move(out), {y, sigma, a, b, mu, c, d}, [&] {
    return BackwardFn([y, sigma, a, b, mu, c, d, rows, ch](const TensorImpl& o) {
      const auto py = y.data();
      const auto ps = sigma.data(), pm = mu.data();
      const auto pa = a.data(), pb = b.data(), pc = c.data();
      const auto& g = o.grad;
      if (y.requires_grad()) {
        const auto gy = y.impl()->grad_sink();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < ch; ++j) gy.put(r * ch + j, g[r * ch + j] * (ps[r] * pa[j] + pb[j]));
      }
      const bool ws = sigma.requires_grad(), wm = mu.requires_grad();
      const bool wa = a.requires_grad(), wb = b.requires_grad(), wc = c.requires_grad(), wd = d.requires_grad();
      if (!(ws || wm || wa || wb || wc || wd)) return;
      double* gs = ws ? sigma.impl()->ensure_grad().data() : nullptr;
      double* gm = wm ? mu.impl()->ensure_grad().data() : nullptr;
      double* ga = wa ? a.impl()->ensure_grad().data() : nullptr;
      double* gb = wb ? b.impl()->ensure_grad().data() : nullptr;
      double* gc = wc ? c.impl()->ensure_grad().data() : nullptr;
      double* gd = wd ? d.impl()->ensure_grad().data() : nullptr;
      for (std::size_t r = 0; r < rows; ++r) {
        double s_acc = 0.0, m_acc = 0.0;
        for (std::size_t j = 0; j < ch; ++j) {
          const double gv = g[r * ch + j];
          const double gyv = gv * py[r * ch + j];
          s_acc += gyv * pa[j];
          m_acc += gv * pc[j];
          if (ga) ga[j] += gyv * ps[r];
          if (gb) gb[j] += gyv;
          if (gc) gc[j] += gv * pm[r];
          if (gd) gd[j] += gv;
        }
        if (gs) gs[r] += s_acc;
        if (gm) gm[r] += m_acc;
      }
    });
  });
}

}  // namespace tap

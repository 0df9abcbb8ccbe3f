#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "kernels.hpp"
#include "tap/tensor/ops.hpp"

namespace tap {

using detail::BackwardFn;
using detail::TensorImpl;

namespace {

// C (MxN) += op(A) op(B), row-major.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c, double beta, double alpha = 1.0) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(ta ? m : k), b, static_cast<int>(tb ? k : n), beta, c, static_cast<int>(n));
}

enum class BatchMode { RightShared, LeftShared, Paired };

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  auto fail = [&] { throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb)); };
  if (sa.size() < 2 || sb.size() < 2) fail();
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t n = sb.back();
  if (sb[sb.size() - 2] != k) fail();

  BatchMode mode;
  Shape out;
  std::size_t batch = 1;
  if (sb.size() == 2) {
    mode = BatchMode::RightShared;
    out = Shape(sa.begin(), sa.end() - 1);
    for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];
  } else if (sa.size() == 2) {
    mode = BatchMode::LeftShared;
    out = Shape(sb.begin(), sb.end() - 2);
    out.push_back(m);
    for (std::size_t i = 0; i + 2 < sb.size(); ++i) batch *= sb[i];
  } else {
    if (!std::equal(sa.begin(), sa.end() - 2, sb.begin(), sb.end() - 2)) fail();
    mode = BatchMode::Paired;
    out = Shape(sa.begin(), sa.end() - 1);
    for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];
  }
  out.push_back(n);

  Buffer c(shape_numel(out), 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  switch (mode) {
    case BatchMode::RightShared:
      gemm(false, false, batch * m, n, k, pa, pb, c.data(), 0.0);
      break;
    case BatchMode::LeftShared:
      for (std::size_t i = 0; i < batch; ++i) gemm(false, false, m, n, k, pa, pb + i * k * n, c.data() + i * m * n, 0.0);
      break;
    case BatchMode::Paired:
      for (std::size_t i = 0; i < batch; ++i)
        gemm(false, false, m, n, k, pa + i * m * k, pb + i * k * n, c.data() + i * m * n, 0.0);
      break;
  }

  return detail::make_result("matmul", std::move(out), std::move(c), {a, b}, [&] {
    return BackwardFn([a, b, mode, batch, m, n, k](const TensorImpl& o) {
      const double* pa = a.data().data();
      const double* pb = b.data().data();
      const double* g = o.grad.data();
      const bool wa = a.requires_grad();
      const bool wb = b.requires_grad();
      const auto sa = wa ? a.impl()->grad_sink() : detail::GradSink{nullptr, false};
      const auto sb = wb ? b.impl()->grad_sink() : detail::GradSink{nullptr, false};
      double* ga = sa.p;
      double* gb = sb.p;
      const double beta_a = sa.fresh ? 0.0 : 1.0;
      const double beta_b = sb.fresh ? 0.0 : 1.0;
      switch (mode) {
        case BatchMode::RightShared:
          if (wa) gemm(false, true, batch * m, k, n, g, pb, ga, beta_a);
          if (wb) gemm(true, false, k, n, batch * m, pa, g, gb, beta_b);
          break;
        case BatchMode::LeftShared:
          for (std::size_t i = 0; i < batch; ++i) {
            if (wa) gemm(false, true, m, k, n, g + i * m * n, pb + i * k * n, ga, i == 0 ? beta_a : 1.0);
            if (wb) gemm(true, false, k, n, m, pa, g + i * m * n, gb + i * k * n, beta_b);
          }
          break;
        case BatchMode::Paired:
          for (std::size_t i = 0; i < batch; ++i) {
            if (wa) gemm(false, true, m, k, n, g + i * m * n, pb + i * k * n, ga + i * m * k, beta_a);
            if (wb) gemm(true, false, k, n, m, pa + i * m * k, g + i * m * n, gb + i * k * n, beta_b);
          }
          break;
      }
    });
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const auto& sx = x.shape();
  const auto& sw = w.shape();
  if (sx.size() < 2 || sw.size() != 2 || sx.back() != sw[0] || (b.defined() && b.shape() != Shape{sw[1]})) {
    throw ShapeError("linear: x " + shape_str(sx) + ", w " + shape_str(sw) +
                     (b.defined() ? ", b " + shape_str(b.shape()) : std::string()));
  }
  const std::size_t k = sw[0], n = sw[1], rows = x.numel() / k;
  Shape out(sx.begin(), sx.end() - 1);
  out.push_back(n);
  Buffer c(rows * n);
  if (b.defined()) {
    const double* pb = b.data().data();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(pb, n, c.data() + r * n);
  }
  gemm(false, false, rows, n, k, x.data().data(), w.data().data(), c.data(), b.defined() ? 1.0 : 0.0);
  return detail::make_result("linear", std::move(out), std::move(c), {x, w, b}, [&] {
    return BackwardFn([x, w, b, rows, k, n](const TensorImpl& o) {
      const double* g = o.grad.data();
      if (x.requires_grad()) {
        const auto gx = x.impl()->grad_sink();
        gemm(false, true, rows, k, n, g, w.data().data(), gx.p, gx.fresh ? 0.0 : 1.0);
      }
      if (w.requires_grad()) {
        const auto gw = w.impl()->grad_sink();
        gemm(true, false, k, n, rows, x.data().data(), g, gw.p, gw.fresh ? 0.0 : 1.0);
      }
      if (b.defined() && b.requires_grad()) {
        auto& gb = b.impl()->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
      }
    });
  });
}

namespace {

struct ConvGeom {
  std::size_t b, h, w, ci, kh, kw, co, stride, pad, ho, wo;
  std::size_t patch() const { return kh * kw * ci; }
  std::size_t positions() const { return b * ho * wo; }
};

Buffer im2col(const double* x, const ConvGeom& g) {
  Buffer cols(g.positions() * g.patch(), 0.0);
  double* dst = cols.data();
  for (std::size_t n = 0; n < g.b; ++n)
    for (std::size_t oy = 0; oy < g.ho; ++oy)
      for (std::size_t ox = 0; ox < g.wo; ++ox)
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t kx = 0; kx < g.kw; ++kx, dst += g.ci) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.h) || ix >= static_cast<long>(g.w)) continue;
            const double* src = x + ((n * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)) * g.ci;
            std::copy_n(src, g.ci, dst);
          }
        }
  return cols;
}

void col2im_add(const double* cols, const ConvGeom& g, double* x) {
  const double* src = cols;
  for (std::size_t n = 0; n < g.b; ++n)
    for (std::size_t oy = 0; oy < g.ho; ++oy)
      for (std::size_t ox = 0; ox < g.wo; ++ox)
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t kx = 0; kx < g.kw; ++kx, src += g.ci) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.h) || ix >= static_cast<long>(g.w)) continue;
            double* dst = x + ((n * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)) * g.ci;
            for (std::size_t c = 0; c < g.ci; ++c) dst[c] += src[c];
          }
        }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
  const auto& sx = x.shape();
  const auto& sw = w.shape();
  if (sx.size() != 4 || sw.size() != 4 || sw[2] != sx[3]) {
    throw ShapeError("conv2d: input " + shape_str(sx) + " incompatible with kernel " + shape_str(sw));
  }
  if (sw[0] % 2 == 0 || sw[1] % 2 == 0) throw ConfigError("conv2d: kernel sizes must be odd, got " + shape_str(sw));
  if (stride == 0) throw ConfigError("conv2d: stride must be >= 1");
  if (pad >= sw[0] || pad >= sw[1]) throw ConfigError("conv2d: padding " + std::to_string(pad) + " too large for kernel");
  if (sx[1] + 2 * pad < sw[0] || sx[2] + 2 * pad < sw[1]) throw ConfigError("conv2d: input smaller than kernel");
  ConvGeom g{sx[0], sx[1], sx[2], sx[3], sw[0], sw[1], sw[3], stride, pad, 0, 0};
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;

  auto cols = std::make_shared<Buffer>(im2col(x.data().data(), g));
  Buffer out(g.positions() * g.co);
  gemm(false, false, g.positions(), g.co, g.patch(), cols->data(), w.data().data(), out.data(), 0.0);

  return detail::make_result("conv2d", {g.b, g.ho, g.wo, g.co}, std::move(out), {x, w}, [&] {
    return BackwardFn([x, w, g, cols](const TensorImpl& o) {
      if (w.requires_grad()) {
        const auto gw = w.impl()->grad_sink();
        gemm(true, false, g.patch(), g.co, g.positions(), cols->data(), o.grad.data(), gw.p, gw.fresh ? 0.0 : 1.0);
      }
      if (x.requires_grad()) {
        Buffer dcols(g.positions() * g.patch(), 0.0);
        gemm(false, true, g.positions(), g.patch(), g.co, o.grad.data(), w.data().data(), dcols.data(), 0.0);
        col2im_add(dcols.data(), g, x.impl()->ensure_grad().data());
      }
    });
  });
}

namespace {

// Returns the tile length when `t` repeats along the trailing dims of `like`
// (leading singleton dims ignored); throws otherwise.
std::size_t tile_length(const Tensor& t, const Shape& like, const char* what) {
  Shape s = t.shape();
  while (s.size() > 1 && s[0] == 1) s.erase(s.begin());
  if (s.size() > like.size() || !std::equal(s.begin(), s.end(), like.end() - static_cast<long>(s.size()))) {
    throw ShapeError(std::string("attention: ") + what + " " + shape_str(t.shape()) +
                     " does not tile scores " + shape_str(like));
  }
  return shape_numel(s);
}

}  // namespace

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, double scale, const Tensor& bias,
                 const Tensor& mask, Tensor* probs) {
  const auto& sq = q.shape();
  const auto& sk = k.shape();
  const auto& sv = v.shape();
  if (sq.size() < 2 || sk.size() != sq.size() || sv.size() != sq.size() || sq.back() != sk.back() ||
      sk[sk.size() - 2] != sv[sv.size() - 2] || !std::equal(sq.begin(), sq.end() - 2, sk.begin()) ||
      !std::equal(sq.begin(), sq.end() - 2, sv.begin())) {
    throw ShapeError("attention: Q " + shape_str(sq) + ", K " + shape_str(sk) + ", V " + shape_str(sv));
  }
  const std::size_t l = sq[sq.size() - 2], d = sq.back(), len = sk[sk.size() - 2], dv = sv.back();
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < sq.size(); ++i) batch *= sq[i];
  Shape score_shape(sq.begin(), sq.end() - 1);
  score_shape.push_back(len);
  const std::size_t nb = bias.defined() ? tile_length(bias, score_shape, "bias") : 0;
  const std::size_t nm = mask.defined() ? tile_length(mask, score_shape, "mask") : 0;

  const std::size_t block = l * len;
  auto p = std::make_shared<Buffer>(batch * block);
  const double* pq = q.data().data();
  const double* pk = k.data().data();
  const double* pv = v.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(false, true, l, len, d, pq + i * l * d, pk + i * len * d, p->data() + i * block, 0.0, scale);
  }
  double* s = p->data();
  const std::size_t total = p->size();
  if (nb) {
    const double* b = bias.data().data();
    for (std::size_t o = 0; o < total; o += nb)
      for (std::size_t j = 0; j < nb; ++j) s[o + j] += b[j];
  }
  if (nm) {
    const double* mk = mask.data().data();
    for (std::size_t o = 0; o < total; o += nm)
      for (std::size_t j = 0; j < nm; ++j) s[o + j] += mk[j];
  }
  for (std::size_t r = 0; r < batch * l; ++r) {
    double* row = s + r * len;
    double mx = row[0];
    for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < len; ++j) row[j] *= inv;
  }
  Shape out_shape(sq.begin(), sq.end() - 1);
  out_shape.push_back(dv);
  Buffer out(batch * l * dv);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(false, false, l, dv, len, s + i * block, pv + i * len * dv, out.data() + i * l * dv, 0.0);
  }
  if (probs) *probs = Tensor::from(score_shape, *p);

  return detail::make_result("attention", std::move(out_shape), std::move(out), {q, k, v, bias}, [&] {
    return BackwardFn([q, k, v, bias, p, batch, l, d, len, dv, nb, scale](const TensorImpl& o) {
      const std::size_t block = l * len;
      const double* pq = q.data().data();
      const double* pk = k.data().data();
      const double* pv = v.data().data();
      const double* g = o.grad.data();
      const double* pp = p->data();
      if (v.requires_grad()) {
        const auto gv = v.impl()->grad_sink();
        for (std::size_t i = 0; i < batch; ++i)
          gemm(true, false, len, dv, l, pp + i * block, g + i * l * dv, gv.p + i * len * dv, gv.fresh ? 0.0 : 1.0);
      }
      const bool need_scores = q.requires_grad() || k.requires_grad() || (bias.defined() && bias.requires_grad());
      if (!need_scores) return;
      Buffer ds(batch * block);
      for (std::size_t i = 0; i < batch; ++i)
        gemm(false, true, l, len, dv, g + i * l * dv, pv + i * len * dv, ds.data() + i * block, 0.0);
      for (std::size_t r = 0; r < batch * l; ++r) {
        double* row = ds.data() + r * len;
        const double* prow = pp + r * len;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) dot += row[j] * prow[j];
        for (std::size_t j = 0; j < len; ++j) row[j] = prow[j] * (row[j] - dot);
      }
      if (bias.defined() && bias.requires_grad()) {
        auto& gb = bias.impl()->ensure_grad();
        for (std::size_t o2 = 0; o2 < ds.size(); o2 += nb)
          for (std::size_t j = 0; j < nb; ++j) gb[j] += ds[o2 + j];
      }
      if (q.requires_grad()) {
        const auto gq = q.impl()->grad_sink();
        for (std::size_t i = 0; i < batch; ++i)
          gemm(false, false, l, d, len, ds.data() + i * block, pk + i * len * d, gq.p + i * l * d,
               gq.fresh ? 0.0 : 1.0, scale);
      }
      if (k.requires_grad()) {
        const auto gk = k.impl()->grad_sink();
        for (std::size_t i = 0; i < batch; ++i)
          gemm(true, false, len, d, l, ds.data() + i * block, pq + i * l * d, gk.p + i * len * d,
               gk.fresh ? 0.0 : 1.0, scale);
      }
    });
  });
}

}  // namespace tap

#include <cmath>
#include <numbers>

#include "kernels.hpp"
#include "tap/tensor/ops.hpp"

namespace tap {

using detail::BackwardFn;
using detail::TensorImpl;

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    const std::size_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

namespace {

// Broadcast plan with fast paths for equal shapes and for one operand tiling
// the trailing dims of the other (biases, per-channel scales).
struct Plan {
  enum class Kind { Same, TileB, TileA, RowB, RowA, RowATileB, RowBTileA, General };
  Kind kind = Kind::Same;
  Shape out;
  std::size_t n = 0;
  std::size_t tile = 0;
  std::vector<std::size_t> sa, sb;

  template <class F>
  void visit(F&& f) const {
    switch (kind) {
      case Kind::Same:
        for (std::size_t i = 0; i < n; ++i) f(i, i, i);
        break;
      case Kind::TileB:
        for (std::size_t o = 0, i = 0; o < n / tile; ++o)
          for (std::size_t j = 0; j < tile; ++j, ++i) f(i, i, j);
        break;
      case Kind::TileA:
        for (std::size_t o = 0, i = 0; o < n / tile; ++o)
          for (std::size_t j = 0; j < tile; ++j, ++i) f(i, j, i);
        break;
      case Kind::RowB:
        for (std::size_t o = 0, i = 0; o < n / tile; ++o)
          for (std::size_t j = 0; j < tile; ++j, ++i) f(i, i, o);
        break;
      case Kind::RowA:
        for (std::size_t o = 0, i = 0; o < n / tile; ++o)
          for (std::size_t j = 0; j < tile; ++j, ++i) f(i, o, i);
        break;
      case Kind::RowATileB:
        for (std::size_t o = 0, i = 0; o < n / tile; ++o)
          for (std::size_t j = 0; j < tile; ++j, ++i) f(i, o, j);
        break;
      case Kind::RowBTileA:
        for (std::size_t o = 0, i = 0; o < n / tile; ++o)
          for (std::size_t j = 0; j < tile; ++j, ++i) f(i, j, o);
        break;
      case Kind::General:
        kernels::for_each_broadcast(out, sa, sb, f);
        break;
    }
  }
};

Shape strip_leading_ones(const Shape& s) {
  std::size_t k = 0;
  while (k + 1 < s.size() && s[k] == 1) ++k;
  return Shape(s.begin() + static_cast<long>(k), s.end());
}

bool is_suffix(const Shape& small, const Shape& big) {
  const Shape s = strip_leading_ones(small);
  if (s.size() > big.size()) return false;
  return std::equal(s.begin(), s.end(), big.end() - static_cast<long>(s.size()));
}

// `s` equals `out` with the last dim collapsed to 1.
bool is_rows(const Shape& s, const Shape& out) {
  return s.size() == out.size() && s.back() == 1 && out.back() > 1 &&
         std::equal(s.begin(), s.end() - 1, out.begin());
}

bool is_last_dim(const Shape& s, const Shape& out) {
  const Shape t = strip_leading_ones(s);
  return t.size() == 1 && t[0] == out.back();
}

Plan make_plan(const Shape& a, const Shape& b) {
  Plan p;
  p.out = broadcast_shapes(a, b);
  p.n = shape_numel(p.out);
  if (a == b) {
    p.kind = Plan::Kind::Same;
  } else if (a == p.out && is_suffix(b, a)) {
    p.kind = Plan::Kind::TileB;
    p.tile = shape_numel(b);
  } else if (b == p.out && is_suffix(a, b)) {
    p.kind = Plan::Kind::TileA;
    p.tile = shape_numel(a);
  } else if (a == p.out && is_rows(b, p.out)) {
    p.kind = Plan::Kind::RowB;
    p.tile = p.out.back();
  } else if (b == p.out && is_rows(a, p.out)) {
    p.kind = Plan::Kind::RowA;
    p.tile = p.out.back();
  } else if (is_rows(a, p.out) && is_last_dim(b, p.out)) {
    p.kind = Plan::Kind::RowATileB;
    p.tile = p.out.back();
  } else if (is_rows(b, p.out) && is_last_dim(a, p.out)) {
    p.kind = Plan::Kind::RowBTileA;
    p.tile = p.out.back();
  } else {
    p.kind = Plan::Kind::General;
    p.sa = kernels::broadcast_strides(a, p.out);
    p.sb = kernels::broadcast_strides(b, p.out);
  }
  return p;
}

template <class Fwd, class Ga, class Gb>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Fwd f, Ga ga, Gb gb) {
  Plan plan;
  try {
    plan = make_plan(a.shape(), b.shape());
  } catch (const ShapeError& e) {
    throw ShapeError(std::string(name) + ": " + e.what());
  }
  Buffer out(plan.n);
  {
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    plan.visit([&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = f(pa[ia], pb[ib]); });
  }
  Shape shape = plan.out;
  return detail::make_result(name, std::move(shape), std::move(out), {a, b}, [&] {
    return BackwardFn([a, b, plan, ga, gb](const TensorImpl& o) {
      const double* pa = a.data().data();
      const double* pb = b.data().data();
      const auto& g = o.grad;
      const auto& y = o.data();
      using K = Plan::Kind;
      if (a.requires_grad()) {
        if (plan.kind == K::Same || plan.kind == K::TileB || plan.kind == K::RowB) {
          const auto da = a.impl()->grad_sink();
          plan.visit([&](std::size_t i, std::size_t ia, std::size_t ib) {
            da.put(ia, ga(g[i], pa[ia], pb[ib], y[i]));
          });
        } else {
          auto& da = a.impl()->ensure_grad();
          plan.visit([&](std::size_t i, std::size_t ia, std::size_t ib) {
            da[ia] += ga(g[i], pa[ia], pb[ib], y[i]);
          });
        }
      }
      if (b.requires_grad()) {
        if (plan.kind == K::Same || plan.kind == K::TileA || plan.kind == K::RowA) {
          const auto db = b.impl()->grad_sink();
          plan.visit([&](std::size_t i, std::size_t ia, std::size_t ib) {
            db.put(ib, gb(g[i], pa[ia], pb[ib], y[i]));
          });
        } else {
          auto& db = b.impl()->ensure_grad();
          plan.visit([&](std::size_t i, std::size_t ia, std::size_t ib) {
            db[ib] += gb(g[i], pa[ia], pb[ib], y[i]);
          });
        }
      }
    });
  });
}

template <class Fwd, class Dx>
Tensor unary(const char* name, const Tensor& x, Fwd f, Dx dx) {
  const auto in = x.data();
  Buffer out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return detail::make_result(name, x.shape(), std::move(out), {x}, [&] {
    return BackwardFn([x, dx](const TensorImpl& o) {
      const auto in = x.data();
      const auto gx = x.impl()->grad_sink();
      const auto& y = o.data();
      for (std::size_t i = 0; i < in.size(); ++i) gx.put(i, dx(o.grad[i], in[i], y[i]));
    });
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double, double) { return g; }, [](double g, double, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double, double) { return g; }, [](double g, double, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y, double) { return g * y; },
      [](double g, double x, double, double) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double g, double, double y, double) { return g / y; },
      [](double g, double, double y, double out) { return -g * out / y; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(
      "add_scalar", x, [s](double v) { return v + s; }, [](double g, double, double) { return g; });
}

Tensor mul_scalar(const Tensor& x, double s) {
  return unary(
      "mul_scalar", x, [s](double v) { return v * s; }, [s](double g, double, double) { return g * s; });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double g, double, double y) { return g * y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double g, double v, double) { return g / v; });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.data()) {
    if (v < 0.0) throw DomainError("sqrt of negative value " + std::to_string(v));
  }
  return unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double g, double, double y) { return y > 0.0 ? g * 0.5 / y : 0.0; });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double g, double v, double) { return v > 0.0 ? g : (v < 0.0 ? -g : 0.0); });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double g, double v, double) { return 2.0 * g * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double g, double v, double) { return v > 0.0 ? g : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  return unary(
      "gelu", x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + k * v * v * v))); },
      [](double g, double v, double) {
        const double u = c * (v + k * v * v * v);
        const double t = std::tanh(u);
        const double du = c * (1.0 + 3.0 * k * v * v);
        return g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
      });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double g, double, double y) { return g * (1.0 - y * y); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      "clamp", x, [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double g, double v, double) { return (v >= lo && v <= hi) ? g : 0.0; });
}

}  // namespace tap

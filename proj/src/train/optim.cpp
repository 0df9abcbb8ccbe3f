#include "tap/train/optim.hpp"

#include <cmath>

#include "tap/tensor/ops.hpp"

namespace tap::train {

Adam::Adam(std::vector<model::NamedParameter> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double mh = m[k] / c1, vh = v[k] / c2;
      w[k] -= lr * (mh / (std::sqrt(vh) + config_.eps) + config_.weight_decay * w[k]);
    }
  }
}

double clip_grad_norm(const std::vector<model::NamedParameter>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      auto* impl = p.tensor.impl().get();
      for (auto& g : impl->grad) g *= s;
    }
  }
  return norm;
}

}  // namespace tap::train

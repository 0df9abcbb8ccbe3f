#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tap/model/module.hpp"
#include "tap/train/config.hpp"

namespace tap::train {

// Adam with decoupled weight decay. Moments are keyed by parameter name so
// they survive a checkpoint round trip.
class Adam {
 public:
  Adam(std::vector<model::NamedParameter> params, AdamConfig config);

  void step(double lr);
  void zero_grad();
  std::uint64_t steps() const { return t_; }

  const std::vector<model::NamedParameter>& params() const { return params_; }
  std::vector<double>& first_moment(std::size_t i) { return m_[i]; }
  std::vector<double>& second_moment(std::size_t i) { return v_[i]; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  std::vector<model::NamedParameter> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

// Scales gradients so their global L2 norm is at most max_norm (0 disables).
// Returns the norm before clipping.
double clip_grad_norm(const std::vector<model::NamedParameter>& params, double max_norm);

}  // namespace tap::train

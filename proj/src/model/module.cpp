#include "tap/model/module.hpp"

namespace tap::model {

Tensor Module::register_parameter(std::string name, Tensor value) {
  value.set_requires_grad(true);
  params_.push_back({std::move(name), value});
  return value;
}

void Module::register_module(std::string name, Module& child) { children_.emplace_back(std::move(name), &child); }

void Module::collect(const std::string& prefix, std::vector<NamedParameter>& out) const {
  for (const auto& p : params_) out.push_back({prefix + p.name, p.tensor});
  for (const auto& [name, child] : children_) child->collect(prefix + name + ".", out);
}

std::vector<NamedParameter> Module::named_parameters() const {
  std::vector<NamedParameter> out;
  collect("", out);
  return out;
}

std::vector<Tensor> Module::parameters(bool trainable_only) const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) {
    if (!trainable_only || p.tensor.requires_grad()) out.push_back(p.tensor);
  }
  return out;
}

std::size_t Module::param_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& t : parameters(trainable_only)) n += t.numel();
  return n;
}

void Module::set_trainable(bool on) {
  for (auto& p : named_parameters()) p.tensor.set_requires_grad(on);
}

void Module::zero_grad() {
  for (auto& p : named_parameters()) p.tensor.zero_grad();
}

}  // namespace tap::model

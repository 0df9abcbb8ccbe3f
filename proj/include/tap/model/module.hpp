#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tap/tensor/tensor.hpp"

namespace tap::model {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

// Parameter registry with hierarchical names ("stage0.block1.attn.qkv.weight").
// Modules register members by reference, so they are pinned in memory.
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  std::vector<NamedParameter> named_parameters() const;
  std::vector<Tensor> parameters(bool trainable_only = false) const;
  std::size_t param_count(bool trainable_only = false) const;
  void set_trainable(bool on);
  void zero_grad();

 protected:
  Tensor register_parameter(std::string name, Tensor value);
  void register_module(std::string name, Module& child);

 private:
  void collect(const std::string& prefix, std::vector<NamedParameter>& out) const;

  std::vector<NamedParameter> params_;
  std::vector<std::pair<std::string, Module*>> children_;
};

}  // namespace tap::model

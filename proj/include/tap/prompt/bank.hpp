#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tap/model/backbone.hpp"
#include "tap/model/module.hpp"
#include "tap/prompt/prompted_attention.hpp"

namespace tap::prompt {

enum class Slot { Key, Value, Hidden };

struct BankConfig {
  std::vector<std::string> tasks{"rain", "snow", "haze", "raindrop"};
  std::size_t length = 12;  // m; 0 disables prompting
  std::size_t rank = 0;     // lr; 0 stores each task's m x d prompt directly
  Placement placement = Placement::KeyValue;
  std::uint64_t seed = 7;
  double init_std = 0.02;

  void validate() const;
};

// Per-layer, per-slot task prompts. In factorized mode (rank > 0) task i's
// prompt is head_i [m, lr] x tail [lr, d] with the tail shared by all tasks
// of that layer and slot.
class PromptBank : public model::Module {
 public:
  PromptBank(BankConfig config, std::vector<model::AttentionLayerInfo> layers);

  const BankConfig& config() const { return config_; }
  const std::vector<std::string>& tasks() const { return config_.tasks; }
  std::size_t task_count() const { return config_.tasks.size(); }
  std::size_t task_index(const std::string& name) const;  // LookupError when absent
  std::size_t layer_count() const { return layers_.size(); }
  const std::vector<model::AttentionLayerInfo>& layers() const { return layers_; }
  const std::vector<Slot>& slots() const { return slots_; }
  bool factorized() const { return config_.rank > 0; }

  // Task-specific factor ([m, lr]), or the whole prompt ([m, d]) when rank 0.
  Tensor head(std::size_t task, std::size_t layer, Slot slot) const;
  // Shared factor [lr, d]; undefined when rank 0.
  Tensor tail(std::size_t layer, Slot slot) const;
  // [m, d] prompt of one task.
  Tensor materialize(std::size_t task, std::size_t layer, Slot slot) const;
  Tensor materialize(const std::string& task, std::size_t layer, Slot slot) const;

  // Per-image prompts for a batch whose i-th image belongs to task_of[i].
  // Empty prompt set when the length is 0.
  PromptSet for_batch(const std::vector<std::size_t>& task_of) const;

  // Closed-form number of prompt parameters.
  std::size_t expected_param_count() const;

 private:
  std::size_t check_task(std::size_t task) const;
  std::size_t check_layer(std::size_t layer) const;
  std::size_t slot_index(Slot slot) const;

  BankConfig config_;
  std::vector<model::AttentionLayerInfo> layers_;
  std::vector<Slot> slots_;
  // heads_[layer][slot][task], tails_[layer][slot]
  std::vector<std::vector<std::vector<Tensor>>> heads_;
  std::vector<std::vector<Tensor>> tails_;
};

const char* slot_name(Slot slot);

}  // namespace tap::prompt

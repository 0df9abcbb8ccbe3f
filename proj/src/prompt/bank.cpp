#include "tap/prompt/bank.hpp"

#include <algorithm>
#include <set>

#include "tap/core/errors.hpp"
#include "tap/core/rng.hpp"
#include "tap/tensor/ops.hpp"

namespace tap::prompt {

const char* slot_name(Slot slot) {
  switch (slot) {
    case Slot::Key:
      return "key";
    case Slot::Value:
      return "value";
    case Slot::Hidden:
      return "hidden";
  }
  return "?";
}

void BankConfig::validate() const {
  if (tasks.empty()) throw ConfigError("prompt bank needs at least one task");
  std::set<std::string> seen;
  for (const auto& t : tasks) {
    if (t.empty()) throw ConfigError("task names must be non-empty");
    if (!seen.insert(t).second) throw ConfigError("duplicate task name '" + t + "'");
  }
  if (!(init_std > 0.0)) throw ConfigError("prompt init_std must be positive");
}

PromptBank::PromptBank(BankConfig config, std::vector<model::AttentionLayerInfo> layers)
    : config_(std::move(config)), layers_(std::move(layers)) {
  config_.validate();
  if (config_.placement == Placement::KeyValue) {
    slots_ = {Slot::Key, Slot::Value};
  } else {
    slots_ = {Slot::Hidden};
  }
  const std::size_t m = config_.length, lr = config_.rank;
  Rng rng(config_.seed);
  heads_.resize(layers_.size());
  tails_.resize(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::size_t d = layers_[l].dim;
    heads_[l].resize(slots_.size());
    tails_[l].resize(slots_.size());
    if (m == 0) continue;
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      const std::string base = "layer" + std::to_string(l) + "." + slot_name(slots_[s]);
      for (std::size_t t = 0; t < task_count(); ++t) {
        Tensor h = Tensor::randn({m, lr ? lr : d}, rng, config_.init_std);
        heads_[l][s].push_back(register_parameter((lr ? base + ".head." : base + ".prompt.") + config_.tasks[t], h));
      }
      if (lr) tails_[l][s] = register_parameter(base + ".tail", Tensor::randn({lr, d}, rng, config_.init_std));
    }
  }
}

std::size_t PromptBank::task_index(const std::string& name) const {
  const auto it = std::find(config_.tasks.begin(), config_.tasks.end(), name);
  if (it == config_.tasks.end()) throw LookupError("unknown task '" + name + "'");
  return static_cast<std::size_t>(it - config_.tasks.begin());
}

std::size_t PromptBank::check_task(std::size_t task) const {
  if (task >= task_count()) throw LookupError("task index " + std::to_string(task) + " out of range");
  return task;
}

std::size_t PromptBank::check_layer(std::size_t layer) const {
  if (layer >= layers_.size()) throw LookupError("prompt layer " + std::to_string(layer) + " out of range");
  if (config_.length == 0) throw LookupError("prompt bank has length 0");
  return layer;
}

std::size_t PromptBank::slot_index(Slot slot) const {
  const auto it = std::find(slots_.begin(), slots_.end(), slot);
  if (it == slots_.end()) throw LookupError(std::string("slot '") + slot_name(slot) + "' not used by this placement");
  return static_cast<std::size_t>(it - slots_.begin());
}

Tensor PromptBank::head(std::size_t task, std::size_t layer, Slot slot) const {
  return heads_[check_layer(layer)][slot_index(slot)][check_task(task)];
}

Tensor PromptBank::tail(std::size_t layer, Slot slot) const { return tails_[check_layer(layer)][slot_index(slot)]; }

Tensor PromptBank::materialize(std::size_t task, std::size_t layer, Slot slot) const {
  const Tensor h = head(task, layer, slot);
  return factorized() ? matmul(h, tail(layer, slot)) : h;
}

Tensor PromptBank::materialize(const std::string& task, std::size_t layer, Slot slot) const {
  return materialize(task_index(task), layer, slot);
}

PromptSet PromptBank::for_batch(const std::vector<std::size_t>& task_of) const {
  PromptSet set;
  if (config_.length == 0) return set;
  for (auto t : task_of) check_task(t);
  const std::size_t m = config_.length, b = task_of.size();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::size_t d = layers_[l].dim;
    LayerPrompt lp;
    lp.placement = config_.placement;
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      // Stack all tasks, then pick one row set per image.
      Tensor stacked = concat(heads_[l][s], 0);
      if (factorized()) stacked = matmul(stacked, tails_[l][s]);
      const Tensor table = reshape(stacked, {task_count(), m * d});
      const Tensor per_image = reshape(gather_rows(table, task_of), {b, m, d});
      switch (slots_[s]) {
        case Slot::Key:
          lp.key = per_image;
          break;
        case Slot::Value:
          lp.value = per_image;
          break;
        case Slot::Hidden:
          lp.hidden = per_image;
          break;
      }
    }
    set.push_back(std::move(lp));
  }
  return set;
}

std::size_t PromptBank::expected_param_count() const {
  const std::size_t n = task_count(), m = config_.length, lr = config_.rank;
  if (m == 0) return 0;
  std::size_t total = 0;
  for (const auto& layer : layers_) {
    const std::size_t per_slot = lr ? n * m * lr + lr * layer.dim : n * m * layer.dim;
    total += slots_.size() * per_slot;
  }
  return total;
}

}  // namespace tap::prompt

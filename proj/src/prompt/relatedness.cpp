#include "tap/prompt/relatedness.hpp"

#include <algorithm>

#include "tap/core/errors.hpp"

namespace tap::prompt {

RelatednessGraph::RelatednessGraph(std::vector<std::string> tasks)
    : tasks_(std::move(tasks)), positives_(tasks_.size()) {
  if (tasks_.empty()) throw ConfigError("relatedness graph needs at least one task");
}

RelatednessGraph RelatednessGraph::standard(const std::vector<std::string>& tasks) {
  RelatednessGraph g(tasks);
  auto has = [&](const char* t) { return std::find(tasks.begin(), tasks.end(), t) != tasks.end(); };
  if (has("snow") && has("raindrop")) g.connect("snow", "raindrop");
  if (has("rain") && has("haze")) g.connect("rain", "haze");
  return g;
}

RelatednessGraph RelatednessGraph::from_adjacency(const std::vector<std::string>& tasks,
                                                  const std::map<std::string, std::vector<std::string>>& adjacency) {
  RelatednessGraph g(tasks);
  for (const auto& [from, tos] : adjacency)
    for (const auto& to : tos) g.connect(from, to);
  return g;
}

std::size_t RelatednessGraph::index(const std::string& name) const {
  const auto it = std::find(tasks_.begin(), tasks_.end(), name);
  if (it == tasks_.end()) throw ConfigError("relatedness graph: unknown task '" + name + "'");
  return static_cast<std::size_t>(it - tasks_.begin());
}

void RelatednessGraph::connect(const std::string& a, const std::string& b) { connect(index(a), index(b)); }

void RelatednessGraph::connect(std::size_t a, std::size_t b) {
  if (a >= size() || b >= size()) throw ConfigError("relatedness graph: task index out of range");
  if (a == b) throw ConfigError("relatedness graph: task '" + tasks_[a] + "' cannot be its own positive");
  auto add = [&](std::size_t x, std::size_t y) {
    auto& p = positives_[x];
    if (std::find(p.begin(), p.end(), y) == p.end()) {
      p.push_back(y);
      std::sort(p.begin(), p.end());
    }
  };
  add(a, b);
  add(b, a);
}

const std::vector<std::size_t>& RelatednessGraph::positives(std::size_t task) const {
  if (task >= size()) throw LookupError("relatedness graph: task index out of range");
  return positives_[task];
}

bool RelatednessGraph::related(std::size_t a, std::size_t b) const {
  const auto& p = positives(a);
  return std::find(p.begin(), p.end(), b) != p.end();
}

std::map<std::string, std::vector<std::string>> RelatednessGraph::adjacency() const {
  std::map<std::string, std::vector<std::string>> out;
  for (std::size_t i = 0; i < size(); ++i)
    for (auto j : positives_[i]) out[tasks_[i]].push_back(tasks_[j]);
  return out;
}

void RelatednessGraph::require_positives() const {
  if (size() < 2) throw ConfigError("contrastive loss needs at least two tasks");
  for (std::size_t i = 0; i < size(); ++i) {
    if (positives_[i].empty()) throw ConfigError("task '" + tasks_[i] + "' has no related task (empty positive set)");
  }
}

}  // namespace tap::prompt

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace tap::prompt {

// Symmetric "these tasks are alike" relation used as contrastive positives.
class RelatednessGraph {
 public:
  explicit RelatednessGraph(std::vector<std::string> tasks);

  // snow <-> raindrop, rain <-> haze (edges whose tasks are absent are skipped).
  static RelatednessGraph standard(const std::vector<std::string>& tasks);
  // Adjacency list keyed by task name; edges are symmetrized.
  static RelatednessGraph from_adjacency(const std::vector<std::string>& tasks,
                                         const std::map<std::string, std::vector<std::string>>& adjacency);

  void connect(const std::string& a, const std::string& b);
  void connect(std::size_t a, std::size_t b);

  std::size_t size() const { return tasks_.size(); }
  const std::vector<std::string>& tasks() const { return tasks_; }
  const std::vector<std::size_t>& positives(std::size_t task) const;
  bool related(std::size_t a, std::size_t b) const;
  std::map<std::string, std::vector<std::string>> adjacency() const;

  // Throws ConfigError unless there are >= 2 tasks and each has a positive.
  void require_positives() const;

 private:
  std::size_t index(const std::string& name) const;

  std::vector<std::string> tasks_;
  std::vector<std::vector<std::size_t>> positives_;
};

}  // namespace tap::prompt

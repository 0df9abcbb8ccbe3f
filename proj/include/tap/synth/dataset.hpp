#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tap/synth/degrade.hpp"

namespace tap::synth {

struct DatasetSpec {
  // One entry per task; the spec's own seed field is ignored, per-sample seeds
  // are derived from `seed`.
  std::vector<DegradationSpec> tasks;
  std::size_t per_task_count = 8;
  std::size_t height = 64, width = 64;
  std::uint64_t seed = 1;

  void validate() const;
  static DatasetSpec defaults(std::size_t per_task_count, std::size_t size, std::uint64_t seed);
};

struct ManifestSample {
  std::string task;
  std::string lq, hq;  // relative to the dataset root
  std::uint64_t seed = 0;
  std::string truth_json;
};

struct Manifest {
  int version = 1;
  std::vector<std::string> tasks;
  std::vector<ManifestSample> samples;

  std::size_t count(const std::string& task) const;
};

// Writes <root>/<task>/{lq,hq}/<i>.png and <root>/manifest.json. Rebuilding
// with identical inputs rewrites identical bytes.
Manifest build_dataset(const std::string& root, const DatasetSpec& spec);

Manifest read_manifest(const std::string& root);
std::string manifest_path(const std::string& root);

struct Sample {
  std::size_t task = 0;  // index into Dataset::tasks
  std::uint64_t seed = 0;
  Image lq, hq;
};

struct Dataset {
  std::string root;
  std::vector<std::string> tasks;
  std::vector<Sample> samples;

  std::size_t task_index(const std::string& name) const;  // LookupError
  std::vector<std::size_t> indices_of(std::size_t task) const;
};

Dataset load_dataset(const std::string& root);

}  // namespace tap::synth

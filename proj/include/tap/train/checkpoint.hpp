#pragma once

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tap/model/module.hpp"

namespace tap::train {

inline constexpr int kCheckpointVersion = 1;

struct TensorBlob {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

// On disk: magic, version, JSON header, header hash, then named float64
// little-endian blobs followed by a payload hash.
struct Checkpoint {
  int version = kCheckpointVersion;
  std::string stage;
  std::size_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;
  std::string rng_state;
  std::uint64_t extractor_seed = 0;
  nlohmann::json config = nlohmann::json::object();
  std::vector<TensorBlob> tensors;

  const TensorBlob* find(const std::string& name) const;
  bool has_prefix(const std::string& prefix) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
// CorruptionError on bad magic, version mismatch, truncation or hash mismatch.
Checkpoint load_checkpoint(const std::string& path);

// Stores every parameter of `module` as "<prefix>.<name>".
void capture(Checkpoint& ckpt, const std::string& prefix, const model::Module& module);
// Copies blobs back into the module's parameters; CorruptionError if any is
// missing or mis-shaped.
void restore(const Checkpoint& ckpt, const std::string& prefix, model::Module& module);

// Content hash over parameter names, shapes and values.
std::string parameter_hash(const model::Module& module);

}  // namespace tap::train

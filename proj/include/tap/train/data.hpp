#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tap/core/rng.hpp"
#include "tap/synth/dataset.hpp"
#include "tap/tensor/tensor.hpp"

namespace tap::train {

// Epoch plans of task-balanced batches: every batch holds batch_size/N
// samples of each of the N tasks; an epoch ends when the smallest task pool
// runs out. Shuffling is a pure function of (seed, epoch).
class BalancedBatches {
 public:
  // pools[t] lists the dataset indices of task t.
  BalancedBatches(std::vector<std::vector<std::size_t>> pools, std::size_t batch_size, std::uint64_t seed);
  static BalancedBatches from_dataset(const synth::Dataset& data, std::size_t batch_size, std::uint64_t seed);

  std::size_t batches_per_epoch() const { return per_epoch_; }
  std::size_t task_count() const { return pools_.size(); }
  // Sample indices of every batch of one epoch, grouped task-major inside
  // each batch.
  std::vector<std::vector<std::size_t>> epoch(std::size_t epoch_index) const;

 private:
  std::vector<std::vector<std::size_t>> pools_;
  std::size_t batch_size_, per_task_, per_epoch_;
  std::uint64_t seed_;
};

struct Pair {
  synth::Image lq, hq;
};

// Same random crop window and horizontal flip for lq and hq.
Pair augment(const synth::Image& lq, const synth::Image& hq, std::size_t crop, double flip_prob, Rng& rng);
synth::Image crop(const synth::Image& im, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);
synth::Image hflip(const synth::Image& im);

// lr_min + (lr_init - lr_min) * (1 + cos(pi * step / total_steps)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_init, double lr_min);

struct Batch {
  Tensor lq, hq;                   // [B, H, W, 3]
  std::vector<std::size_t> task_of;  // dataset task index per image
  std::vector<std::size_t> indices;
};

Batch make_batch(const synth::Dataset& data, const std::vector<std::size_t>& indices, std::size_t crop,
                 double flip_prob, Rng& rng);

}  // namespace tap::train

#include "tap/train/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tap/core/errors.hpp"

namespace tap::train {

BalancedBatches::BalancedBatches(std::vector<std::vector<std::size_t>> pools, std::size_t batch_size,
                                 std::uint64_t seed)
    : pools_(std::move(pools)), batch_size_(batch_size), seed_(seed) {
  if (pools_.empty()) throw ConfigError("balanced batching needs at least one task");
  if (batch_size_ == 0 || batch_size_ % pools_.size() != 0) {
    throw ConfigError("batch size " + std::to_string(batch_size_) + " is not divisible by " +
                      std::to_string(pools_.size()) + " tasks");
  }
  per_task_ = batch_size_ / pools_.size();
  std::size_t smallest = pools_[0].size();
  for (const auto& p : pools_) smallest = std::min(smallest, p.size());
  per_epoch_ = smallest / per_task_;
  if (per_epoch_ == 0) throw ConfigError("smallest task pool cannot fill a single batch");
}

BalancedBatches BalancedBatches::from_dataset(const synth::Dataset& data, std::size_t batch_size, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> pools;
  for (std::size_t t = 0; t < data.tasks.size(); ++t) pools.push_back(data.indices_of(t));
  return BalancedBatches(std::move(pools), batch_size, seed);
}

std::vector<std::vector<std::size_t>> BalancedBatches::epoch(std::size_t epoch_index) const {
  Rng rng(mix_seed(seed_, 0xba7c, epoch_index));
  std::vector<std::vector<std::size_t>> shuffled = pools_;
  for (auto& p : shuffled) {
    for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  }
  std::vector<std::vector<std::size_t>> out(per_epoch_);
  for (std::size_t b = 0; b < per_epoch_; ++b) {
    out[b].reserve(batch_size_);
    for (const auto& p : shuffled)
      for (std::size_t k = 0; k < per_task_; ++k) out[b].push_back(p[b * per_task_ + k]);
  }
  return out;
}

synth::Image crop(const synth::Image& im, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  if (y0 + h > im.height || x0 + w > im.width) throw ConfigError("crop window exceeds the image");
  synth::Image out(h, w);
  for (std::size_t y = 0; y < h; ++y)
    std::copy_n(im.pixels.begin() + static_cast<long>(((y0 + y) * im.width + x0) * 3), w * 3,
                out.pixels.begin() + static_cast<long>(y * w * 3));
  return out;
}

synth::Image hflip(const synth::Image& im) {
  synth::Image out(im.height, im.width);
  for (std::size_t y = 0; y < im.height; ++y)
    for (std::size_t x = 0; x < im.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, im.width - 1 - x, c) = im.at(y, x, c);
  return out;
}

Pair augment(const synth::Image& lq, const synth::Image& hq, std::size_t crop_size, double flip_prob, Rng& rng) {
  if (lq.height != hq.height || lq.width != hq.width) throw ShapeError("augment: lq/hq sizes differ");
  if (crop_size > lq.height || crop_size > lq.width) {
    throw ConfigError("crop " + std::to_string(crop_size) + " exceeds image " + std::to_string(lq.height) + "x" +
                      std::to_string(lq.width));
  }
  const std::size_t y0 = rng.below(lq.height - crop_size + 1);
  const std::size_t x0 = rng.below(lq.width - crop_size + 1);
  const bool flip = rng.uniform() < flip_prob;
  Pair p{crop(lq, y0, x0, crop_size, crop_size), crop(hq, y0, x0, crop_size, crop_size)};
  if (flip) {
    p.lq = hflip(p.lq);
    p.hq = hflip(p.hq);
  }
  return p;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_init, double lr_min) {
  if (total_steps == 0) return lr_init;
  if (step > total_steps) throw ConfigError("cosine_lr: step beyond total_steps");
  if (step == total_steps) return lr_min;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

Batch make_batch(const synth::Dataset& data, const std::vector<std::size_t>& indices, std::size_t crop_size,
                 double flip_prob, Rng& rng) {
  std::vector<synth::Image> lq, hq;
  Batch b;
  for (std::size_t i : indices) {
    const auto& s = data.samples.at(i);
    auto p = augment(s.lq, s.hq, crop_size, flip_prob, rng);
    lq.push_back(std::move(p.lq));
    hq.push_back(std::move(p.hq));
    b.task_of.push_back(s.task);
  }
  std::vector<const synth::Image*> pl, ph;
  for (std::size_t i = 0; i < lq.size(); ++i) pl.push_back(&lq[i]), ph.push_back(&hq[i]);
  b.lq = synth::to_tensor(pl);
  b.hq = synth::to_tensor(ph);
  b.indices = indices;
  return b;
}

}  // namespace tap::train

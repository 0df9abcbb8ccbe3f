#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace tap::train {

enum class Stage { Pretrain, PromptTune, Joint };

// Table-3 style arms. None is the pretrained backbone without prompts.
enum class Strategy { None, PFull, PAttn, PAttnJoint, PAttnEnhanced };

const char* stage_name(Stage s);
Stage parse_stage(const std::string& s);
const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& s);  // ConfigError on unknown names

struct AdamConfig {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.0;
};

struct TrainConfig {
  Stage stage = Stage::Pretrain;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double lr_init = 3e-4;
  double lr_min_ratio = 0.01;  // lr_min = lr_init * ratio
  std::size_t crop_size = 64;
  double flip_prob = 0.5;
  std::uint64_t seed = 1;
  AdamConfig adam;
  double clip_norm = 1.0;  // global gradient norm; 0 disables
  std::size_t checkpoint_every = 0;  // epochs between checkpoints, 0 = final only
  bool eval_each_epoch = true;       // per-task PSNR on the validation set (tuning stages)

  double lr_min() const { return lr_init * lr_min_ratio; }
  void validate(std::size_t task_count) const;
};

// "desk" (64 crops, batch 8, 30/15 epochs) or "paper" (256, 32, 200/100,
// no clipping).
TrainConfig profile(const std::string& name, Stage stage);

}  // namespace tap::train

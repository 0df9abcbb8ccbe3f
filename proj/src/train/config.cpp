#include "tap/train/config.hpp"

#include "tap/core/errors.hpp"

namespace tap::train {

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Pretrain:
      return "pretrain";
    case Stage::PromptTune:
      return "tune";
    case Stage::Joint:
      return "joint";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  for (Stage st : {Stage::Pretrain, Stage::PromptTune, Stage::Joint})
    if (s == stage_name(st)) return st;
  throw ConfigError("unknown stage '" + s + "'");
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::None:
      return "none";
    case Strategy::PFull:
      return "p_full";
    case Strategy::PAttn:
      return "p_attn";
    case Strategy::PAttnJoint:
      return "p_attn_joint";
    case Strategy::PAttnEnhanced:
      return "p_attn_enhanced";
  }
  return "?";
}

Strategy parse_strategy(const std::string& s) {
  for (Strategy st : {Strategy::None, Strategy::PFull, Strategy::PAttn, Strategy::PAttnJoint, Strategy::PAttnEnhanced})
    if (s == strategy_name(st)) return st;
  throw ConfigError("unknown strategy '" + s + "' (none, p_full, p_attn, p_attn_joint, p_attn_enhanced)");
}

void TrainConfig::validate(std::size_t task_count) const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (task_count == 0) throw ConfigError("no tasks to train on");
  if (batch_size % task_count != 0) {
    throw ConfigError("batch_size " + std::to_string(batch_size) + " is not divisible by the task count " +
                      std::to_string(task_count));
  }
  if (!(lr_init > 0.0)) throw ConfigError("lr_init must be > 0");
  if (!(lr_min_ratio >= 0.0 && lr_min_ratio <= 1.0)) throw ConfigError("lr_min_ratio must lie in [0, 1]");
  if (crop_size < 16) throw ConfigError("crop_size must be >= 16");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0, 1]");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("adam.beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("adam.beta2 must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("adam.eps must be > 0");
  if (!(adam.weight_decay >= 0.0)) throw ConfigError("adam.weight_decay must be >= 0");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
}

TrainConfig profile(const std::string& name, Stage stage) {
  TrainConfig c;
  c.stage = stage;
  const bool tune = stage == Stage::PromptTune;
  // Joint training gets the epochs of both stages combined.
  auto pick = [stage](std::size_t pre, std::size_t tun) {
    return stage == Stage::Pretrain ? pre : stage == Stage::PromptTune ? tun : pre + tun;
  };
  c.lr_init = tune ? 5e-5 : 3e-4;
  if (name == "desk") {
    c.crop_size = 64;
    c.batch_size = 8;
    c.epochs = pick(30, 15);
    c.clip_norm = 1.0;
    if (tune) c.lr_init = 5e-3;
  } else if (name == "paper") {
    c.crop_size = 256;
    c.batch_size = 32;
    c.epochs = pick(200, 100);
    c.clip_norm = 0.0;
  } else {
    throw ConfigError("unknown profile '" + name + "' (desk, paper)");
  }
  return c;
}

}  // namespace tap::train

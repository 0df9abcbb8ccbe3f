#pragma once

#include <memory>
#include <optional>
#include <string>

#include "tap/eval/evaluate.hpp"
#include "tap/model/backbone.hpp"
#include "tap/objectives/perceptual.hpp"
#include "tap/prompt/bank.hpp"
#include "tap/synth/dataset.hpp"
#include "tap/train/checkpoint.hpp"
#include "tap/train/experiment.hpp"
#include "tap/train/trainer.hpp"

namespace tap::train {

// Model (and prompt bank, when the checkpoint carries one) rebuilt from a
// checkpoint's config echo and parameter blobs.
struct LoadedModel {
  Checkpoint checkpoint;
  std::unique_ptr<model::RestorationModel> model;
  std::unique_ptr<prompt::PromptBank> bank;
  ExperimentConfig experiment;
  Strategy strategy = Strategy::None;
};

LoadedModel load_model(const Checkpoint& ckpt);
LoadedModel load_model(const std::string& path);

std::string config_hash(const ExperimentConfig& c);
std::string strategy_tag(const ExperimentConfig& c, Strategy s);

// Builds both splits under data.root. Returns the train manifest path.
std::string synthesize_data(const ExperimentConfig& c);

std::unique_ptr<objectives::RandomConvPyramid> make_extractor(const ExperimentConfig& c);

struct RunOptions {
  bool verbose = false;
  const Checkpoint* resume = nullptr;
  std::size_t stop_after = 0;
  std::string run_dir;  // default: <output_root>/<name>/<stage or strategy tag>
};

// Stage 1 on <data.root>/train. Writes <run_dir>/checkpoint.ckpt.
StageResult run_pretrain(const ExperimentConfig& c, const RunOptions& opt = {});

// Stage 2 from a pretrain checkpoint, or joint training from scratch for
// p_attn_joint (the checkpoint is then ignored and may be null). The caller
// applies the strategy to `c` first.
StageResult run_tune(const ExperimentConfig& c, Strategy s, const Checkpoint* pretrained,
                     const RunOptions& opt = {});

// Evaluates a checkpoint on <data.root>/test (or train).
eval::EvalReport run_eval(const LoadedModel& m, const synth::Dataset& data,
                          const std::optional<std::string>& task = std::nullopt);

}  // namespace tap::train

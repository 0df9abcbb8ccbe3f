#pragma once

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tap/model/backbone.hpp"
#include "tap/objectives/losses.hpp"
#include "tap/prompt/bank.hpp"
#include "tap/synth/dataset.hpp"
#include "tap/train/checkpoint.hpp"
#include "tap/train/config.hpp"

namespace tap::train {

struct StageInputs {
  TrainConfig cfg;
  const synth::Dataset* train = nullptr;
  const synth::Dataset* val = nullptr;  // per-epoch PSNR while tuning
  objectives::LossWeights loss;
  const prompt::RelatednessGraph* graph = nullptr;           // needed when lambda_cont > 0
  const objectives::FeatureExtractor* extractor = nullptr;   // needed when lambda_per > 0
  std::uint64_t extractor_seed = 0;
  nlohmann::json config = nlohmann::json::object();  // echoed into checkpoint headers
  std::string run_dir;     // metrics.csv and checkpoints; empty = no files
  std::size_t stop_after = 0;  // stop once this many epochs are complete (0 = all)
  bool verbose = false;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0, l1 = 0.0, perceptual = 0.0, contrastive = 0.0;
  double lr_last = 0.0;
  std::vector<std::pair<std::string, double>> val_psnr;
};

struct StageResult {
  Checkpoint checkpoint;
  std::vector<EpochStats> epochs;
  std::string backbone_hash_before, backbone_hash_after;
  std::size_t trainable_params = 0;
};

// Runs one stage according to in.cfg.stage:
//   Pretrain   - backbone only, L1 + lambda_per * perceptual
//   PromptTune - frozen backbone, bank only, L1 (+ lambda_cont * contrastive)
//   Joint      - backbone and bank together, pretraining loss (+ contrastive)
// Throws NumericError on a non-finite loss and Error if the backbone moves
// during PromptTune.
StageResult train_stage(model::RestorationModel& model, prompt::PromptBank* bank, const StageInputs& in,
                        const Checkpoint* resume = nullptr);

StageResult pretrain(model::RestorationModel& model, const StageInputs& in, const Checkpoint* resume = nullptr);
StageResult prompt_tune(model::RestorationModel& model, prompt::PromptBank& bank, const StageInputs& in,
                        const Checkpoint* resume = nullptr);

}  // namespace tap::train

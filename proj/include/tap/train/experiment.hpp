#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tap/model/backbone.hpp"
#include "tap/objectives/losses.hpp"
#include "tap/prompt/bank.hpp"
#include "tap/prompt/relatedness.hpp"
#include "tap/synth/dataset.hpp"
#include "tap/train/config.hpp"

namespace tap::train {

struct DataConfig {
  std::string root = "data";
  std::size_t train_per_task = 64;
  std::size_t test_per_task = 16;
  std::size_t size = 64;
  std::uint64_t seed = 1;
  std::vector<synth::DegradationSpec> tasks;  // default: rain, snow, haze, raindrop

  std::vector<std::string> task_names() const;
  synth::DatasetSpec split(bool test) const;
  std::string split_root(bool test) const;
};

// Everything a run needs; parsed from JSON on top of a profile's defaults.
struct ExperimentConfig {
  std::string name = "desk";
  std::string output_root = "runs";
  int threads = 1;
  DataConfig data;
  model::ModelConfig model;
  prompt::BankConfig prompts;
  objectives::LossWeights loss;
  std::uint64_t extractor_seed = 1234;
  std::vector<std::pair<std::string, std::string>> relations{{"snow", "raindrop"}, {"rain", "haze"}};
  TrainConfig pretrain, tune, joint;

  static ExperimentConfig defaults(const std::string& profile_name = "desk");
  void validate() const;
  prompt::RelatednessGraph graph() const;
  std::string run_dir(const std::string& sub) const;
};

// Strict parse: unknown keys raise ConfigError naming the path.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::string& profile_name = "desk");
ExperimentConfig load_experiment(const std::string& path, const std::string& profile_name = "desk");
nlohmann::json to_json(const ExperimentConfig& c);

nlohmann::json to_json(const model::ModelConfig& c);
nlohmann::json to_json(const prompt::BankConfig& c);
nlohmann::json to_json(const TrainConfig& c);
model::ModelConfig model_config_from_json(const nlohmann::json& j);
prompt::BankConfig bank_config_from_json(const nlohmann::json& j);

// Arms of the prompting ablation. Sets placement/rank/length and whether the
// contrastive term is active; `rank`/`length` override the arm defaults.
void apply_strategy(ExperimentConfig& c, Strategy s, std::optional<std::size_t> rank = std::nullopt,
                    std::optional<std::size_t> length = std::nullopt);

}  // namespace tap::train

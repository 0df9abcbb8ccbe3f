#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tap/model/backbone.hpp"
#include "tap/prompt/bank.hpp"
#include "tap/synth/dataset.hpp"

namespace tap::eval {

// Per-head attention of one layer for one image: probabilities averaged over
// windows and spatial queries. weights[h] has prompt_tokens + window^2
// entries (prompt keys first) and sums to 1.
struct AttentionSummary {
  std::size_t layer = 0, heads = 0, prompt_tokens = 0, side = 0;
  std::vector<std::vector<double>> weights;
};

AttentionSummary attention_summary(const model::RestorationModel& model, const prompt::PromptBank* bank,
                                   const std::string& task, const synth::Image& lq, std::size_t layer);

// Grayscale map: ceil(m / side) rows of prompt-key weights above the
// side x side spatial key grid, scaled so the largest weight is white.
std::vector<double> attention_map(const AttentionSummary& s, std::size_t head, std::size_t& height,
                                  std::size_t& width);

// Writes <dir>/<condition>/attn/<layer>/<head>.png for every condition
// (null bank = no prompt). Returns the paths written.
std::vector<std::string> export_attention(const model::RestorationModel& model,
                                          const std::vector<std::pair<std::string, const prompt::PromptBank*>>& conditions,
                                          const std::string& task, const synth::Image& lq, std::size_t layer,
                                          const std::string& dir);

struct Embeddings {
  std::vector<std::string> task;
  std::vector<std::vector<double>> features;
};

// Mean-pooled bottleneck features of every sample. Only "bottleneck" is a
// valid layer name.
Embeddings embeddings(const model::RestorationModel& model, const prompt::PromptBank* bank,
                      const synth::Dataset& data, const std::string& layer = "bottleneck");
// <dir>/embed/<layer>.csv
std::string export_embeddings(const model::RestorationModel& model, const prompt::PromptBank* bank,
                              const synth::Dataset& data, const std::string& layer, const std::string& dir);

struct Separation {
  double within = 0.0, across = 0.0;  // mean pairwise cosine similarity
};
Separation embedding_separation(const Embeddings& e);

// similarity.csv: header row of task names, one row per task.
void write_similarity_csv(const std::string& path, const std::vector<std::string>& tasks,
                          const std::vector<std::vector<double>>& sim);
// svd.csv: layer,slot,task,k,sigma,cumulative for every materialized prompt.
void write_svd_csv(const std::string& path, const prompt::PromptBank& bank);

}  // namespace tap::eval

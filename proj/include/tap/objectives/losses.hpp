#pragma once

#include <cstddef>
#include <vector>

#include "tap/objectives/perceptual.hpp"
#include "tap/prompt/analysis.hpp"
#include "tap/prompt/bank.hpp"
#include "tap/prompt/relatedness.hpp"
#include "tap/tensor/tensor.hpp"

namespace tap::objectives {

struct LossWeights {
  double lambda_per = 0.1;
  double lambda_cont = 0.1;
  double tau = 0.5;
  std::vector<std::size_t> perceptual_layers{3, 8, 15};
  prompt::Compare contrast_on = prompt::Compare::Heads;

  void validate() const;
};

// Mean absolute error.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

// Sum over feature taps of ||phi(pred) - phi(target)||_2 / sqrt(numel).
Tensor perceptual_loss(const Tensor& pred, const Tensor& target, const FeatureExtractor& extractor);

// Multi-positive contrastive loss on an [N, N] similarity matrix:
// sum_i -1/|T+(i)| sum_{p in T+(i)} log(exp(s_ip/tau) / sum_{k != i} exp(s_ik/tau)).
Tensor contrastive_loss(const Tensor& similarity, const prompt::RelatednessGraph& graph, double tau);
// Mean of the above over every layer and slot of the bank.
Tensor contrastive_loss(const prompt::PromptBank& bank, const prompt::RelatednessGraph& graph, double tau,
                        prompt::Compare what = prompt::Compare::Heads);

struct LossTerms {
  Tensor total;
  Tensor l1;         // summed over tasks
  Tensor perceptual; // summed over tasks (pretraining only)
  Tensor contrastive;
};

// Images of the batch grouped by task: task_of[i] is the task of image i.
// Returns the sum over tasks present of L1 + lambda_per * perceptual.
LossTerms pretrain_loss(const Tensor& pred, const Tensor& target, const std::vector<std::size_t>& task_of,
                        const FeatureExtractor& extractor, const LossWeights& weights);

// Sum over tasks of L1, plus lambda_cont * contrastive when `bank` is given.
LossTerms finetune_loss(const Tensor& pred, const Tensor& target, const std::vector<std::size_t>& task_of,
                        const prompt::PromptBank* bank, const prompt::RelatednessGraph* graph,
                        const LossWeights& weights);

// Rows of a batch tensor [B, ...] at the given indices.
Tensor select_samples(const Tensor& batch, const std::vector<std::size_t>& indices);

}  // namespace tap::objectives

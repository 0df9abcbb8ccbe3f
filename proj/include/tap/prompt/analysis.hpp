#pragma once

#include <cstddef>
#include <vector>

#include "tap/prompt/bank.hpp"
#include "tap/tensor/tensor.hpp"

namespace tap::prompt {

// Which prompt matrices the task-to-task comparisons use.
enum class Compare { Heads, Materialized };

// [N, N] cosine similarities between flattened per-task prompt matrices of one
// layer and slot (differentiable).
Tensor task_similarity(const PromptBank& bank, std::size_t layer, Slot slot, Compare what = Compare::Heads);

// Mean of task_similarity over all layers and slots; unit diagonal.
std::vector<std::vector<double>> similarity_matrix(const PromptBank& bank, Compare what = Compare::Heads);

struct SvdEnergy {
  std::vector<double> singular_values;  // descending
  std::vector<double> cumulative;       // running share of squared singular values
};

SvdEnergy svd_energy(const Tensor& matrix);

}  // namespace tap::prompt

#include "tap/objectives/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "tap/core/errors.hpp"
#include "tap/tensor/ops.hpp"

namespace tap::objectives {

void LossWeights::validate() const {
  if (!(lambda_per >= 0.0)) throw ConfigError("lambda_per must be >= 0");
  if (!(lambda_cont >= 0.0)) throw ConfigError("lambda_cont must be >= 0");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  taps_for_layers(perceptual_layers);
}

namespace {

void same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Indices of the images of each task, in first-appearance order of tasks.
std::map<std::size_t, std::vector<std::size_t>> group_by_task(const std::vector<std::size_t>& task_of,
                                                              std::size_t batch) {
  if (task_of.size() != batch) {
    throw ShapeError("task labels (" + std::to_string(task_of.size()) + ") do not match batch size " +
                     std::to_string(batch));
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < task_of.size(); ++i) groups[task_of[i]].push_back(i);
  return groups;
}

bool is_identity(const std::vector<std::size_t>& idx, std::size_t n) {
  if (idx.size() != n) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (idx[i] != i) return false;
  }
  return true;
}

}  // namespace

Tensor select_samples(const Tensor& batch, const std::vector<std::size_t>& indices) {
  const std::size_t b = batch.size(0);
  if (is_identity(indices, b)) return batch;
  const std::size_t row = batch.numel() / b;
  Shape out = batch.shape();
  out[0] = indices.size();
  return reshape(gather_rows(reshape(batch, {b, row}), indices), out);
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  same_shape(pred, target, "l1_loss");
  return mean(abs(sub(pred, target)));
}

Tensor perceptual_loss(const Tensor& pred, const Tensor& target, const FeatureExtractor& extractor) {
  same_shape(pred, target, "perceptual_loss");
  const auto fp = extractor.features(pred);
  std::vector<Tensor> ft;
  {
    NoGradGuard guard;
    ft = extractor.features(target.detach());
  }
  if (fp.empty() || fp.size() != ft.size()) throw ConfigError("perceptual extractor returned no features");
  Tensor total;
  for (std::size_t j = 0; j < fp.size(); ++j) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fp[j].numel()));
    const Tensor term = mul_scalar(l2_norm(sub(fp[j], ft[j])), scale);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor contrastive_loss(const Tensor& similarity, const prompt::RelatednessGraph& graph, double tau) {
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  graph.require_positives();
  const std::size_t n = graph.size();
  if (similarity.shape() != Shape{n, n}) {
    throw ShapeError("contrastive_loss: similarity " + shape_str(similarity.shape()) + " for " +
                     std::to_string(n) + " tasks");
  }
  const Tensor z = mul_scalar(similarity, 1.0 / tau);
  // Row-wise log-sum-exp over k != i, shifted by the (constant) row maximum.
  const auto zd = z.data();
  std::vector<double> shift(n), off_diag(n * n, 1.0), pos_weight(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) mx = std::max(mx, zd[i * n + k]);
    }
    shift[i] = mx;
    off_diag[i * n + i] = 0.0;
    const auto& pos = graph.positives(i);
    for (auto p : pos) pos_weight[i * n + p] = 1.0 / static_cast<double>(pos.size());
  }
  const Tensor m = Tensor::from({n, 1}, shift);
  const Tensor terms = mul(exp(sub(z, m)), Tensor::from({n, n}, off_diag));
  const Tensor lse = add(log(sum(terms, 1, true)), m);
  const Tensor positive = sum(mul(z, Tensor::from({n, n}, pos_weight)), 1, true);
  return sum(sub(lse, positive));
}

Tensor contrastive_loss(const prompt::PromptBank& bank, const prompt::RelatednessGraph& graph, double tau,
                        prompt::Compare what) {
  if (graph.tasks() != bank.tasks()) throw ConfigError("relatedness graph tasks differ from prompt bank tasks");
  if (bank.config().length == 0 || bank.layer_count() == 0) throw ConfigError("contrastive loss needs prompts");
  Tensor total;
  std::size_t count = 0;
  for (std::size_t l = 0; l < bank.layer_count(); ++l) {
    for (auto s : bank.slots()) {
      const Tensor term = contrastive_loss(prompt::task_similarity(bank, l, s, what), graph, tau);
      total = total.defined() ? add(total, term) : term;
      ++count;
    }
  }
  return mul_scalar(total, 1.0 / static_cast<double>(count));
}

LossTerms pretrain_loss(const Tensor& pred, const Tensor& target, const std::vector<std::size_t>& task_of,
                        const FeatureExtractor& extractor, const LossWeights& weights) {
  same_shape(pred, target, "pretrain_loss");
  LossTerms out;
  for (const auto& [task, idx] : group_by_task(task_of, pred.size(0))) {
    const Tensor p = select_samples(pred, idx);
    const Tensor t = select_samples(target, idx);
    const Tensor l1 = l1_loss(p, t);
    out.l1 = out.l1.defined() ? add(out.l1, l1) : l1;
    Tensor term = l1;
    if (weights.lambda_per > 0.0) {
      const Tensor per = perceptual_loss(p, t, extractor);
      out.perceptual = out.perceptual.defined() ? add(out.perceptual, per) : per;
      term = add(l1, mul_scalar(per, weights.lambda_per));
    }
    out.total = out.total.defined() ? add(out.total, term) : term;
  }
  return out;
}

LossTerms finetune_loss(const Tensor& pred, const Tensor& target, const std::vector<std::size_t>& task_of,
                        const prompt::PromptBank* bank, const prompt::RelatednessGraph* graph,
                        const LossWeights& weights) {
  same_shape(pred, target, "finetune_loss");
  LossTerms out;
  for (const auto& [task, idx] : group_by_task(task_of, pred.size(0))) {
    const Tensor l1 = l1_loss(select_samples(pred, idx), select_samples(target, idx));
    out.l1 = out.l1.defined() ? add(out.l1, l1) : l1;
  }
  out.total = out.l1;
  if (bank && graph && weights.lambda_cont > 0.0) {
    out.contrastive = contrastive_loss(*bank, *graph, weights.tau, weights.contrast_on);
    out.total = add(out.l1, mul_scalar(out.contrastive, weights.lambda_cont));
  }
  return out;
}

}  // namespace tap::objectives

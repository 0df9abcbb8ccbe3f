#include "tap/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "tap/core/errors.hpp"
#include "tap/core/rng.hpp"
#include "tap/eval/evaluate.hpp"
#include "tap/tensor/ops.hpp"
#include "tap/train/data.hpp"
#include "tap/train/experiment.hpp"
#include "tap/train/optim.hpp"

namespace tap::train {

namespace fs = std::filesystem;

namespace {

std::vector<model::NamedParameter> trainable(const model::Module& m, const std::string& prefix) {
  std::vector<model::NamedParameter> out;
  for (auto& p : m.named_parameters())
    if (p.tensor.requires_grad()) out.push_back({prefix + "." + p.name, p.tensor});
  return out;
}

Checkpoint make_checkpoint(const model::RestorationModel& model, const prompt::PromptBank* bank, Adam& opt,
                           const StageInputs& in, std::size_t epoch) {
  Checkpoint c;
  c.stage = stage_name(in.cfg.stage);
  c.epoch = epoch;
  c.step = opt.steps();
  c.rng_state = Rng(mix_seed(in.cfg.seed, 0xa06, epoch)).serialize();
  c.extractor_seed = in.extractor_seed;
  c.config = in.config;
  c.config["train"] = to_json(in.cfg);
  capture(c, "model", model);
  if (bank) capture(c, "prompts", *bank);
  for (std::size_t i = 0; i < opt.params().size(); ++i) {
    const auto& p = opt.params()[i];
    c.tensors.push_back({"adam.m." + p.name, p.tensor.shape(), opt.first_moment(i)});
    c.tensors.push_back({"adam.v." + p.name, p.tensor.shape(), opt.second_moment(i)});
  }
  return c;
}

void resume_from(const Checkpoint& c, model::RestorationModel& model, prompt::PromptBank* bank, Adam& opt,
                 const StageInputs& in) {
  if (c.stage != stage_name(in.cfg.stage)) {
    throw ConfigError("cannot resume a " + std::string(stage_name(in.cfg.stage)) + " run from a " + c.stage +
                      " checkpoint");
  }
  restore(c, "model", model);
  if (bank) restore(c, "prompts", *bank);
  for (std::size_t i = 0; i < opt.params().size(); ++i) {
    const auto& name = opt.params()[i].name;
    const auto* m = c.find("adam.m." + name);
    const auto* v = c.find("adam.v." + name);
    if (!m || !v) throw CorruptionError("checkpoint lacks optimizer state for " + name);
    opt.first_moment(i) = m->data;
    opt.second_moment(i) = v->data;
  }
  opt.set_steps(c.step);
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

StageResult train_stage(model::RestorationModel& model, prompt::PromptBank* bank, const StageInputs& in,
                        const Checkpoint* resume) {
  if (!in.train) throw ConfigError("train_stage: no training data");
  const TrainConfig& cfg = in.cfg;
  const synth::Dataset& data = *in.train;
  cfg.validate(data.tasks.size());
  in.loss.validate();
  const Stage stage = cfg.stage;
  if (stage != Stage::Pretrain && !bank) throw ConfigError(std::string(stage_name(stage)) + " needs a prompt bank");
  const bool use_bank = bank && stage != Stage::Pretrain;
  const bool contrast = use_bank && in.loss.lambda_cont > 0.0 && bank->config().length > 0;
  if (contrast && !in.graph) throw ConfigError("contrastive term needs a relatedness graph");
  const bool perceptual = stage != Stage::PromptTune && in.loss.lambda_per > 0.0;
  if (perceptual && !in.extractor) throw ConfigError("perceptual term needs a feature extractor");

  std::vector<std::size_t> bank_task(data.tasks.size(), 0);
  if (use_bank)
    for (std::size_t t = 0; t < data.tasks.size(); ++t) bank_task[t] = bank->task_index(data.tasks[t]);

  model.set_trainable(stage != Stage::PromptTune);
  if (bank) bank->set_trainable(use_bank);
  std::vector<model::NamedParameter> params = trainable(model, "model");
  if (use_bank)
    for (auto& p : trainable(*bank, "prompts")) params.push_back(p);

  StageResult result;
  for (const auto& p : params) result.trainable_params += p.tensor.numel();
  Adam opt(params, cfg.adam);
  std::size_t start_epoch = 0;
  if (resume) {
    resume_from(*resume, model, bank, opt, in);
    start_epoch = resume->epoch;
  }
  result.backbone_hash_before = parameter_hash(model);

  const auto batches = BalancedBatches::from_dataset(data, cfg.batch_size, cfg.seed);
  const std::size_t total_steps = batches.batches_per_epoch() * cfg.epochs;
  const std::size_t last_epoch = in.stop_after ? std::min(in.stop_after, cfg.epochs) : cfg.epochs;

  std::ofstream metrics, evals;
  if (!in.run_dir.empty()) {
    std::error_code ec;
    fs::create_directories(in.run_dir, ec);
    if (ec) throw IoError("cannot create run directory " + in.run_dir + ": " + ec.message());
    const auto mode = resume ? std::ios::app : std::ios::trunc;
    metrics.open(fs::path(in.run_dir) / "metrics.csv", std::ios::binary | mode);
    evals.open(fs::path(in.run_dir) / "epoch_eval.csv", std::ios::binary | mode);
    if (!metrics || !evals) throw IoError("cannot open metrics files in " + in.run_dir);
    if (!resume) {
      metrics << "stage,epoch,step,lr,loss,l1,perceptual,contrastive,grad_norm\n";
      evals << "epoch,task,psnr\n";
    }
  }

  for (std::size_t epoch = start_epoch; epoch < last_epoch; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(mix_seed(cfg.seed, 0xa06, epoch));
    EpochStats es;
    es.epoch = epoch;
    const auto plan = batches.epoch(epoch);
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const std::size_t step = opt.steps();
      const double lr = cosine_lr(step, total_steps - 1, cfg.lr_init, cfg.lr_min());
      Batch batch = make_batch(data, plan[b], cfg.crop_size, cfg.flip_prob, rng);
      std::vector<std::size_t> btask(batch.task_of.size());
      for (std::size_t i = 0; i < btask.size(); ++i) btask[i] = bank_task[batch.task_of[i]];

      prompt::PromptSet prompts;
      model::ForwardOptions fo;
      if (use_bank) {
        prompts = bank->for_batch(btask);
        fo.prompts = &prompts;
      }
      const Tensor pred = model.forward(batch.lq, fo);
      objectives::LossTerms terms;
      if (stage == Stage::PromptTune) {
        terms = objectives::finetune_loss(pred, batch.hq, btask, contrast ? bank : nullptr, in.graph, in.loss);
      } else {
        objectives::LossWeights w = in.loss;
        if (!perceptual) w.lambda_per = 0.0;
        const objectives::FeatureExtractor* ex = in.extractor;
        if (perceptual) {
          terms = objectives::pretrain_loss(pred, batch.hq, btask, *ex, w);
        } else {
          terms = objectives::finetune_loss(pred, batch.hq, btask, nullptr, nullptr, w);
        }
        if (contrast) {
          terms.contrastive = objectives::contrastive_loss(*bank, *in.graph, in.loss.tau, in.loss.contrast_on);
          terms.total = add(terms.total, mul_scalar(terms.contrastive, in.loss.lambda_cont));
        }
      }
      const double loss = terms.total.item();
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                           ", lr " + fmt(lr) + ", batch seed " + std::to_string(mix_seed(cfg.seed, 0xa06, epoch)) +
                           ", batch " + std::to_string(b) + ")");
      }
      opt.zero_grad();
      terms.total.backward();
      const double gnorm = clip_grad_norm(params, cfg.clip_norm);
      opt.step(lr);

      const double l1 = terms.l1.defined() ? terms.l1.item() : 0.0;
      const double per = terms.perceptual.defined() ? terms.perceptual.item() : 0.0;
      const double con = terms.contrastive.defined() ? terms.contrastive.item() : 0.0;
      es.loss += loss;
      es.l1 += l1;
      es.perceptual += per;
      es.contrastive += con;
      es.lr_last = lr;
      if (metrics.is_open()) {
        metrics << stage_name(stage) << ',' << epoch << ',' << step << ',' << fmt(lr) << ',' << fmt(loss) << ','
                << fmt(l1) << ',' << fmt(per) << ',' << fmt(con) << ',' << fmt(gnorm) << '\n';
      }
    }
    const double nb = static_cast<double>(plan.size());
    es.loss /= nb;
    es.l1 /= nb;
    es.perceptual /= nb;
    es.contrastive /= nb;
    model.zero_grad();
    if (bank) bank->zero_grad();

    if (stage == Stage::PromptTune) {
      const std::string h = parameter_hash(model);
      if (h != result.backbone_hash_before) {
        throw Error("backbone parameters changed during prompt tuning (epoch " + std::to_string(epoch) + ")");
      }
      if (in.val && cfg.eval_each_epoch) {
        const auto rep = eval::evaluate(model, bank, *in.val);
        for (const auto& row : rep.tasks) {
          es.val_psnr.emplace_back(row.task, row.psnr);
          if (evals.is_open()) evals << epoch << ',' << row.task << ',' << fmt(row.psnr) << '\n';
        }
      }
    }
    if (in.verbose) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "[%s] epoch %zu/%zu loss %.5f l1 %.5f per %.5f cont %.5f lr %.2e (%.1fs)\n",
                   stage_name(stage), epoch + 1, cfg.epochs, es.loss, es.l1, es.perceptual, es.contrastive,
                   es.lr_last, secs);
    }
    result.epochs.push_back(std::move(es));
    if (!in.run_dir.empty() && cfg.checkpoint_every && (epoch + 1) % cfg.checkpoint_every == 0 &&
        epoch + 1 < cfg.epochs) {
      save_checkpoint((fs::path(in.run_dir) / ("epoch" + std::to_string(epoch + 1) + ".ckpt")).string(),
                      make_checkpoint(model, bank, opt, in, epoch + 1));
    }
    metrics.flush();
    evals.flush();
  }

  result.backbone_hash_after = parameter_hash(model);
  result.checkpoint = make_checkpoint(model, bank, opt, in, std::max(start_epoch, last_epoch));
  if (!in.run_dir.empty()) save_checkpoint((fs::path(in.run_dir) / "checkpoint.ckpt").string(), result.checkpoint);
  return result;
}

StageResult pretrain(model::RestorationModel& model, const StageInputs& in, const Checkpoint* resume) {
  if (in.cfg.stage != Stage::Pretrain) throw ConfigError("pretrain called with a non-pretrain stage config");
  return train_stage(model, nullptr, in, resume);
}

StageResult prompt_tune(model::RestorationModel& model, prompt::PromptBank& bank, const StageInputs& in,
                        const Checkpoint* resume) {
  if (in.cfg.stage != Stage::PromptTune) throw ConfigError("prompt_tune called with a non-tune stage config");
  return train_stage(model, &bank, in, resume);
}

}  // namespace tap::train

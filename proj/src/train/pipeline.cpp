#include "tap/train/pipeline.hpp"

#include "tap/core/errors.hpp"
#include "tap/core/hash.hpp"

namespace tap::train {

using nlohmann::json;

LoadedModel load_model(const Checkpoint& ckpt) {
  LoadedModel m;
  m.checkpoint = ckpt;
  if (!ckpt.config.contains("experiment")) throw CorruptionError("checkpoint header lacks the experiment config");
  try {
    m.experiment = experiment_from_json(ckpt.config.at("experiment"), "desk");
    m.strategy = parse_strategy(ckpt.config.value("strategy", std::string("none")));
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("checkpoint config does not parse: ") + e.what());
  }
  m.model = std::make_unique<model::RestorationModel>(m.experiment.model);
  restore(ckpt, "model", *m.model);
  if (m.strategy != Strategy::None) {
    m.bank = std::make_unique<prompt::PromptBank>(m.experiment.prompts, m.model->attention_layers());
    restore(ckpt, "prompts", *m.bank);
  }
  return m;
}

LoadedModel load_model(const std::string& path) { return load_model(load_checkpoint(path)); }

std::string config_hash(const ExperimentConfig& c) { return to_hex(fnv1a(to_json(c).dump())); }

std::string strategy_tag(const ExperimentConfig& c, Strategy s) {
  if (s == Strategy::None) return "none";
  return std::string(strategy_name(s)) + "_m" + std::to_string(c.prompts.length) + "_r" +
         std::to_string(c.prompts.rank);
}

std::string synthesize_data(const ExperimentConfig& c) {
  c.validate();
  synth::build_dataset(c.data.split_root(false), c.data.split(false));
  if (c.data.test_per_task > 0) synth::build_dataset(c.data.split_root(true), c.data.split(true));
  return synth::manifest_path(c.data.split_root(false));
}

std::unique_ptr<objectives::RandomConvPyramid> make_extractor(const ExperimentConfig& c) {
  return std::make_unique<objectives::RandomConvPyramid>(c.extractor_seed,
                                                         objectives::taps_for_layers(c.loss.perceptual_layers));
}

namespace {

StageInputs inputs(const ExperimentConfig& c, const TrainConfig& cfg, const synth::Dataset* train,
                   const synth::Dataset* val, Strategy s, const RunOptions& opt, const std::string& sub) {
  StageInputs in;
  in.cfg = cfg;
  in.train = train;
  in.val = val;
  in.loss = c.loss;
  in.extractor_seed = c.extractor_seed;
  in.config = {{"experiment", to_json(c)}, {"strategy", strategy_name(s)}};
  in.run_dir = opt.run_dir.empty() ? c.run_dir(sub) : opt.run_dir;
  in.stop_after = opt.stop_after;
  in.verbose = opt.verbose;
  return in;
}

}  // namespace

StageResult run_pretrain(const ExperimentConfig& c, const RunOptions& opt) {
  c.validate();
  const auto data = synth::load_dataset(c.data.split_root(false));
  model::RestorationModel model(c.model);
  const auto extractor = make_extractor(c);
  ExperimentConfig echo = c;
  echo.prompts.length = 0;
  StageInputs in = inputs(echo, c.pretrain, &data, nullptr, Strategy::None, opt, "pretrain");
  in.extractor = extractor.get();
  return pretrain(model, in, opt.resume);
}

StageResult run_tune(const ExperimentConfig& c, Strategy s, const Checkpoint* pretrained, const RunOptions& opt) {
  c.validate();
  if (s == Strategy::None) throw ConfigError("strategy 'none' has nothing to tune; evaluate the pretrain checkpoint");
  if (c.prompts.length == 0) throw ConfigError("prompt length 0 leaves nothing to tune");
  const auto data = synth::load_dataset(c.data.split_root(false));
  std::optional<synth::Dataset> val;
  if (c.data.test_per_task > 0) val = synth::load_dataset(c.data.split_root(true));
  const auto graph = c.graph();
  if (c.loss.lambda_cont > 0.0) graph.require_positives();

  model::RestorationModel model(c.model);
  prompt::PromptBank bank(c.prompts, model.attention_layers());
  const bool joint = s == Strategy::PAttnJoint;
  if (!joint) {
    if (!pretrained) throw ConfigError("prompt tuning needs a pretrain checkpoint");
    if (pretrained->stage != stage_name(Stage::Pretrain)) {
      throw ConfigError("tuning must start from a pretrain checkpoint, got stage '" + pretrained->stage + "'");
    }
    restore(*pretrained, "model", model);
  }
  const TrainConfig& cfg = joint ? c.joint : c.tune;
  StageInputs in = inputs(c, cfg, &data, val ? &*val : nullptr, s, opt, strategy_tag(c, s));
  in.graph = &graph;
  std::unique_ptr<objectives::RandomConvPyramid> extractor;
  if (joint) {
    extractor = make_extractor(c);
    in.extractor = extractor.get();
  }
  return train_stage(model, &bank, in, opt.resume);
}

eval::EvalReport run_eval(const LoadedModel& m, const synth::Dataset& data, const std::optional<std::string>& task) {
  auto r = eval::evaluate(*m.model, m.bank.get(), data, task);
  r.config_hash = config_hash(m.experiment);
  Fnv1a h;
  h.update(parameter_hash(*m.model));
  if (m.bank) h.update(parameter_hash(*m.bank));
  r.checkpoint_hash = h.hex();
  return r;
}

}  // namespace tap::train

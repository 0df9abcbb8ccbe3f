#include "tap/train/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "tap/core/errors.hpp"

namespace tap::train {

using nlohmann::json;

namespace {

// Reads keys from a JSON object and rejects anything it did not ask for.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be a JSON object");
  }
  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key " + child(it.key()));
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for " + child(key) + ": " + e.what());
    }
  }
  const json* sub(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const char* placement_name(prompt::Placement p) { return p == prompt::Placement::KeyValue ? "key_value" : "hidden"; }

prompt::Placement parse_placement(const std::string& s) {
  if (s == "key_value") return prompt::Placement::KeyValue;
  if (s == "hidden") return prompt::Placement::Hidden;
  throw ConfigError("prompts.placement must be key_value or hidden, got '" + s + "'");
}

const char* compare_name(prompt::Compare c) { return c == prompt::Compare::Heads ? "heads" : "materialized"; }

prompt::Compare parse_compare(const std::string& s) {
  if (s == "heads") return prompt::Compare::Heads;
  if (s == "materialized") return prompt::Compare::Materialized;
  throw ConfigError("loss.contrast_on must be heads or materialized, got '" + s + "'");
}

void read_model(Fields& f, model::ModelConfig& c) {
  f.get("dims", c.dims);
  f.get("depths", c.depths);
  f.get("heads", c.heads);
  f.get("window", c.window);
  f.get("mlp_ratio", c.mlp_ratio);
  f.get("shifted_windows", c.shifted_windows);
  f.get("decoder_attention_stages", c.decoder_attention_stages);
  f.get("seed", c.seed);
  f.done();
}

void read_bank(Fields& f, prompt::BankConfig& c) {
  f.get("tasks", c.tasks);
  f.get("length", c.length);
  f.get("rank", c.rank);
  std::string placement = placement_name(c.placement);
  f.get("placement", placement);
  c.placement = parse_placement(placement);
  f.get("seed", c.seed);
  f.get("init_std", c.init_std);
  f.done();
}

void read_train(const json& j, const std::string& path, TrainConfig& c) {
  Fields f(j, path);
  f.get("epochs", c.epochs);
  f.get("batch_size", c.batch_size);
  f.get("lr_init", c.lr_init);
  f.get("lr_min_ratio", c.lr_min_ratio);
  f.get("crop_size", c.crop_size);
  f.get("flip_prob", c.flip_prob);
  f.get("seed", c.seed);
  f.get("clip_norm", c.clip_norm);
  f.get("checkpoint_every", c.checkpoint_every);
  f.get("eval_each_epoch", c.eval_each_epoch);
  if (const json* a = f.sub("adam")) {
    Fields af(*a, f.child("adam"));
    af.get("beta1", c.adam.beta1);
    af.get("beta2", c.adam.beta2);
    af.get("eps", c.adam.eps);
    af.get("weight_decay", c.adam.weight_decay);
    af.done();
  }
  f.done();
}

void read_degradation(const json& j, const std::string& path, synth::DegradationSpec& s) {
  Fields f(j, path);
  switch (s.task) {
    case synth::Weather::Haze:
      f.get("t_min", s.haze.t_min);
      f.get("t_max", s.haze.t_max);
      f.get("airlight", s.haze.airlight);
      break;
    case synth::Weather::Rain:
      f.get("streak_count", s.rain.streak_count);
      f.get("angle_deg", s.rain.angle_deg);
      f.get("length_px", s.rain.length_px);
      f.get("intensity", s.rain.intensity);
      break;
    case synth::Weather::Snow:
      f.get("flake_count", s.snow.flake_count);
      f.get("radius_min", s.snow.radius_min);
      f.get("radius_max", s.snow.radius_max);
      f.get("opacity", s.snow.opacity);
      break;
    case synth::Weather::Raindrop:
      f.get("drop_count", s.raindrop.drop_count);
      f.get("radius_min", s.raindrop.radius_min);
      f.get("radius_max", s.raindrop.radius_max);
      f.get("blur_radius", s.raindrop.blur_radius);
      f.get("darkening", s.raindrop.darkening);
      break;
  }
  f.done();
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json degradation_json(const synth::DegradationSpec& s) {
  switch (s.task) {
    case synth::Weather::Haze:
      return {{"t_min", s.haze.t_min}, {"t_max", s.haze.t_max}, {"airlight", s.haze.airlight}};
    case synth::Weather::Rain:
      return {{"streak_count", s.rain.streak_count},
              {"angle_deg", s.rain.angle_deg},
              {"length_px", s.rain.length_px},
              {"intensity", s.rain.intensity}};
    case synth::Weather::Snow:
      return {{"flake_count", s.snow.flake_count},
              {"radius_min", s.snow.radius_min},
              {"radius_max", s.snow.radius_max},
              {"opacity", s.snow.opacity}};
    case synth::Weather::Raindrop:
      return {{"drop_count", s.raindrop.drop_count},
              {"radius_min", s.raindrop.radius_min},
              {"radius_max", s.raindrop.radius_max},
              {"blur_radius", s.raindrop.blur_radius},
              {"darkening", s.raindrop.darkening}};
  }
  return json::object();
}

}  // namespace

std::vector<std::string> DataConfig::task_names() const {
  std::vector<std::string> out;
  for (const auto& t : tasks) out.emplace_back(synth::weather_name(t.task));
  return out;
}

synth::DatasetSpec DataConfig::split(bool test) const {
  synth::DatasetSpec s;
  s.tasks = tasks;
  s.per_task_count = test ? test_per_task : train_per_task;
  s.height = s.width = size;
  s.seed = test ? mix_seed(seed, 0x7e57) : seed;
  return s;
}

std::string DataConfig::split_root(bool test) const {
  return (std::filesystem::path(root) / (test ? "test" : "train")).string();
}

ExperimentConfig ExperimentConfig::defaults(const std::string& profile_name) {
  ExperimentConfig c;
  c.name = profile_name;
  c.data.tasks = synth::DatasetSpec::defaults(1, 64, 1).tasks;
  c.pretrain = profile(profile_name, Stage::Pretrain);
  c.tune = profile(profile_name, Stage::PromptTune);
  c.joint = profile(profile_name, Stage::Joint);
  if (profile_name == "paper") c.data.size = 256;
  c.prompts.tasks = c.data.task_names();
  c.prompts.length = 12;
  c.prompts.rank = 4;
  return c;
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("name must be non-empty");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  synth::DatasetSpec s = data.split(false);
  s.validate();
  if (data.train_per_task == 0) throw ConfigError("data.train_per_task must be >= 1");
  model.validate();
  model.check_input(data.size, data.size);
  prompts.validate();
  if (prompts.tasks != data.task_names()) throw ConfigError("prompts.tasks must list the data tasks in order");
  loss.validate();
  const auto n = data.tasks.size();
  pretrain.validate(n);
  tune.validate(n);
  joint.validate(n);
  for (const auto* t : {&pretrain, &tune, &joint}) {
    if (t->crop_size > data.size) throw ConfigError("crop_size exceeds data.size");
    model.check_input(t->crop_size, t->crop_size);
  }
  graph();
}

prompt::RelatednessGraph ExperimentConfig::graph() const {
  prompt::RelatednessGraph g(data.task_names());
  for (const auto& [a, b] : relations) {
    try {
      g.connect(a, b);
    } catch (const LookupError& e) {
      throw ConfigError(std::string("relations: ") + e.what());
    }
  }
  return g;
}

std::string ExperimentConfig::run_dir(const std::string& sub) const {
  return (std::filesystem::path(output_root) / name / sub).string();
}

json to_json(const model::ModelConfig& c) {
  return {{"dims", c.dims},
          {"depths", c.depths},
          {"heads", c.heads},
          {"window", c.window},
          {"mlp_ratio", c.mlp_ratio},
          {"shifted_windows", c.shifted_windows},
          {"decoder_attention_stages", c.decoder_attention_stages},
          {"seed", c.seed}};
}

json to_json(const prompt::BankConfig& c) {
  return {{"tasks", c.tasks},
          {"length", c.length},
          {"rank", c.rank},
          {"placement", placement_name(c.placement)},
          {"seed", c.seed},
          {"init_std", c.init_std}};
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr_init", c.lr_init},
          {"lr_min_ratio", c.lr_min_ratio},
          {"crop_size", c.crop_size},
          {"flip_prob", c.flip_prob},
          {"seed", c.seed},
          {"clip_norm", c.clip_norm},
          {"checkpoint_every", c.checkpoint_every},
          {"eval_each_epoch", c.eval_each_epoch},
          {"adam",
           {{"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"eps", c.adam.eps},
            {"weight_decay", c.adam.weight_decay}}}};
}

model::ModelConfig model_config_from_json(const json& j) {
  model::ModelConfig c;
  Fields f(j, "model");
  read_model(f, c);
  return c;
}

prompt::BankConfig bank_config_from_json(const json& j) {
  prompt::BankConfig c;
  Fields f(j, "prompts");
  read_bank(f, c);
  return c;
}

json to_json(const ExperimentConfig& c) {
  json tasks = json::array(), params = json::object();
  for (const auto& t : c.data.tasks) {
    tasks.push_back(synth::weather_name(t.task));
    params[synth::weather_name(t.task)] = degradation_json(t);
  }
  json data = {{"root", c.data.root},
               {"train_per_task", c.data.train_per_task},
               {"test_per_task", c.data.test_per_task},
               {"size", c.data.size},
               {"seed", c.data.seed},
               {"tasks", tasks}};
  for (auto it = params.begin(); it != params.end(); ++it) data[it.key()] = it.value();
  json rel = json::array();
  for (const auto& [a, b] : c.relations) rel.push_back({a, b});
  return {{"name", c.name},
          {"output_root", c.output_root},
          {"threads", c.threads},
          {"data", data},
          {"model", to_json(c.model)},
          {"prompts", to_json(c.prompts)},
          {"loss",
           {{"lambda_per", c.loss.lambda_per},
            {"lambda_cont", c.loss.lambda_cont},
            {"tau", c.loss.tau},
            {"perceptual_layers", c.loss.perceptual_layers},
            {"contrast_on", compare_name(c.loss.contrast_on)},
            {"extractor_seed", c.extractor_seed}}},
          {"relations", rel},
          {"pretrain", to_json(c.pretrain)},
          {"tune", to_json(c.tune)},
          {"joint", to_json(c.joint)}};
}

ExperimentConfig experiment_from_json(const json& j, const std::string& profile_name) {
  ExperimentConfig c = ExperimentConfig::defaults(profile_name);
  {
    Fields f(j, "");
    f.get("name", c.name);
    f.get("output_root", c.output_root);
    f.get("threads", c.threads);
    if (const json* d = f.sub("data")) {
      Fields df(*d, "data");
      df.get("root", c.data.root);
      df.get("train_per_task", c.data.train_per_task);
      df.get("test_per_task", c.data.test_per_task);
      df.get("size", c.data.size);
      df.get("seed", c.data.seed);
      std::vector<std::string> names = c.data.task_names();
      df.get("tasks", names);
      std::vector<synth::DegradationSpec> specs;
      for (const auto& n : names) {
        synth::DegradationSpec s;
        s.task = synth::parse_weather(n);
        if (const json* p = df.sub(n)) read_degradation(*p, "data." + n, s);
        specs.push_back(s);
      }
      // Parameter blocks for tasks not listed are still schema keys.
      for (const char* n : {"rain", "snow", "haze", "raindrop"}) df.sub(n);
      df.done();
      c.data.tasks = specs;
      c.prompts.tasks = c.data.task_names();
    }
    if (const json* m = f.sub("model")) {
      Fields mf(*m, "model");
      read_model(mf, c.model);
    }
    if (const json* p = f.sub("prompts")) {
      Fields pf(*p, "prompts");
      read_bank(pf, c.prompts);
    }
    if (const json* l = f.sub("loss")) {
      Fields lf(*l, "loss");
      lf.get("lambda_per", c.loss.lambda_per);
      lf.get("lambda_cont", c.loss.lambda_cont);
      lf.get("tau", c.loss.tau);
      lf.get("perceptual_layers", c.loss.perceptual_layers);
      std::string on = compare_name(c.loss.contrast_on);
      lf.get("contrast_on", on);
      c.loss.contrast_on = parse_compare(on);
      lf.get("extractor_seed", c.extractor_seed);
      lf.done();
    }
    f.get("relations", c.relations);
    if (const json* t = f.sub("pretrain")) read_train(*t, "pretrain", c.pretrain);
    if (const json* t = f.sub("tune")) read_train(*t, "tune", c.tune);
    if (const json* t = f.sub("joint")) read_train(*t, "joint", c.joint);
    f.done();
  }
  c.pretrain.stage = Stage::Pretrain;
  c.tune.stage = Stage::PromptTune;
  c.joint.stage = Stage::Joint;
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::string& path, const std::string& profile_name) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(j, profile_name);
}

void apply_strategy(ExperimentConfig& c, Strategy s, std::optional<std::size_t> rank,
                    std::optional<std::size_t> length) {
  auto& p = c.prompts;
  p.length = length.value_or(12);
  switch (s) {
    case Strategy::None:
      p.length = 0;
      c.loss.lambda_cont = 0.0;
      break;
    case Strategy::PFull:
      p.placement = prompt::Placement::Hidden;
      p.rank = rank.value_or(0);
      c.loss.lambda_cont = 0.0;
      break;
    case Strategy::PAttn:
    case Strategy::PAttnJoint:
      p.placement = prompt::Placement::KeyValue;
      p.rank = rank.value_or(0);
      c.loss.lambda_cont = 0.0;
      break;
    case Strategy::PAttnEnhanced:
      p.placement = prompt::Placement::KeyValue;
      p.rank = rank.value_or(4);
      if (c.loss.lambda_cont == 0.0) c.loss.lambda_cont = 0.1;
      break;
  }
}

}  // namespace tap::train

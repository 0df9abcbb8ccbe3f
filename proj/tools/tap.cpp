// tap: dataset synthesis, two-stage training, evaluation and analysis.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tap/core/errors.hpp"
#include "tap/core/hash.hpp"
#include "tap/eval/analysis.hpp"
#include "tap/eval/evaluate.hpp"
#include "tap/prompt/analysis.hpp"
#include "tap/tensor/tensor.hpp"
#include "tap/train/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tap;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kConfig = 2, kIo = 3, kNumeric = 4 };

struct Common {
  std::string config;
  std::string profile = "desk";
};

train::ExperimentConfig load_config(const Common& c) {
  auto exp = c.config.empty() ? train::experiment_from_json(json::object(), c.profile)
                              : train::load_experiment(c.config, c.profile);
  if (!std::getenv("TAP_THREADS") && exp.threads > 0) set_num_threads(exp.threads);
  return exp;
}

// "length=4,8,12,16 rank=0,4,8" -> {length: [...], rank: [...]}
std::map<std::string, std::vector<std::size_t>> parse_grid(const std::string& spec) {
  std::map<std::string, std::vector<std::size_t>> out;
  std::istringstream in(spec);
  std::string item;
  while (in >> item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("grid entry '" + item + "' must look like key=v1,v2");
    const std::string key = item.substr(0, eq);
    if (key != "length" && key != "rank") throw ConfigError("grid key must be length or rank, got '" + key + "'");
    std::istringstream vals(item.substr(eq + 1));
    std::string v;
    while (std::getline(vals, v, ',')) {
      try {
        std::size_t pos = 0;
        const long n = std::stol(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument(v);
        out[key].push_back(static_cast<std::size_t>(n));
      } catch (const std::exception&) {
        throw ConfigError("grid value '" + v + "' is not a non-negative integer");
      }
    }
  }
  if (!out.count("length")) out["length"] = {12};
  if (!out.count("rank")) out["rank"] = {0};
  return out;
}

int cmd_synth(const Common& c, const std::string& out) {
  auto exp = load_config(c);
  if (!out.empty()) exp.data.root = out;
  const auto manifest = train::synthesize_data(exp);
  std::cout << manifest << '\n';
  std::cout << synth::manifest_path(exp.data.split_root(true)) << '\n';
  return kOk;
}

int cmd_pretrain(const Common& c, const std::string& resume, std::size_t stop_after, bool quiet) {
  const auto exp = load_config(c);
  train::RunOptions opt;
  opt.verbose = !quiet;
  opt.stop_after = stop_after;
  std::optional<train::Checkpoint> r;
  if (!resume.empty()) {
    r = train::load_checkpoint(resume);
    opt.resume = &*r;
  }
  const auto res = train::run_pretrain(exp, opt);
  std::cout << (fs::path(exp.run_dir("pretrain")) / "checkpoint.ckpt").string() << '\n';
  std::cout << "trainable parameters: " << res.trainable_params << '\n';
  return kOk;
}

int cmd_tune(const Common& c, const std::string& strategy, std::optional<std::size_t> rank,
             std::optional<std::size_t> length, const std::string& checkpoint, const std::string& resume,
             std::size_t stop_after, bool quiet) {
  auto exp = load_config(c);
  const auto s = train::parse_strategy(strategy);
  train::apply_strategy(exp, s, rank, length);
  exp.validate();
  std::optional<train::Checkpoint> pre;
  if (s != train::Strategy::PAttnJoint) {
    if (checkpoint.empty()) throw ConfigError("tune needs --checkpoint <pretrain checkpoint>");
    if (!fs::exists(checkpoint)) throw ConfigError("checkpoint " + checkpoint + " does not exist");
    pre = train::load_checkpoint(checkpoint);
  }
  train::RunOptions opt;
  opt.verbose = !quiet;
  opt.stop_after = stop_after;
  std::optional<train::Checkpoint> r;
  if (!resume.empty()) {
    r = train::load_checkpoint(resume);
    opt.resume = &*r;
  }
  const auto res = train::run_tune(exp, s, pre ? &*pre : nullptr, opt);
  std::cout << (fs::path(exp.run_dir(train::strategy_tag(exp, s))) / "checkpoint.ckpt").string() << '\n';
  std::cout << "trainable parameters: " << res.trainable_params << '\n';
  return kOk;
}

std::string data_root(const train::LoadedModel& m, const std::string& override_root, const std::string& split) {
  if (split != "test" && split != "train") throw ConfigError("--split must be test or train");
  auto d = m.experiment.data;
  if (!override_root.empty()) d.root = override_root;
  return d.split_root(split == "test");
}

void print_report(const eval::EvalReport& r) {
  std::printf("%-10s %6s %9s %8s\n", "task", "count", "psnr", "ssim");
  for (const auto& row : r.tasks) std::printf("%-10s %6zu %9.4f %8.5f\n", row.task.c_str(), row.count, row.psnr, row.ssim);
  std::printf("%-10s %6zu %9.4f %8.5f\n", "average", r.average.count, r.average.psnr, r.average.ssim);
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& split,
             const std::string& task, const std::string& out) {
  if (checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  const auto m = train::load_model(checkpoint);
  const auto ds = synth::load_dataset(data_root(m, data, split));
  std::optional<std::string> only;
  if (!task.empty()) only = task;
  const auto r = train::run_eval(m, ds, only);
  const std::string dir = out.empty() ? (fs::path(checkpoint).parent_path() / "eval").string() : out;
  eval::write_report(dir, r);
  print_report(r);
  std::cout << (fs::path(dir) / "report.json").string() << '\n';
  return kOk;
}

int cmd_analyze(const std::string& checkpoint, const std::vector<std::string>& compare, const std::string& data,
                const std::string& out, std::size_t layer, std::size_t sample, const std::string& grid,
                const Common& c, const std::string& grid_strategy, bool quiet) {
  if (checkpoint.empty()) throw ConfigError("analyze needs --checkpoint");
  const std::string dir = out.empty() ? (fs::path(checkpoint).parent_path() / "analysis").string() : out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir);

  if (!grid.empty()) {
    auto base = c.config.empty() ? std::optional<train::ExperimentConfig>() : load_config(c);
    const auto pre = train::load_checkpoint(checkpoint);
    if (pre.stage != "pretrain") throw ConfigError("--grid needs a pretrain checkpoint");
    train::ExperimentConfig exp = base ? *base : train::load_model(pre).experiment;
    if (!data.empty()) exp.data.root = data;
    const auto axes = parse_grid(grid);
    const auto s = train::parse_strategy(grid_strategy);
    if (s == train::Strategy::None || s == train::Strategy::PAttnJoint) {
      throw ConfigError("--grid strategy must tune prompts from the pretrain checkpoint");
    }
    const auto test = synth::load_dataset(exp.data.split_root(true));
    const auto path = (fs::path(dir) / "grid.csv").string();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << "length,rank,trainable_params,psnr,ssim\n";
    for (auto length : axes.at("length"))
      for (auto rank : axes.at("rank")) {
        auto e = exp;
        train::apply_strategy(e, s, rank, length);
        train::RunOptions opt;
        opt.verbose = !quiet;
        opt.run_dir = (fs::path(dir) / "grid" / train::strategy_tag(e, s)).string();
        const auto res = train::run_tune(e, s, &pre, opt);
        const auto r = train::run_eval(train::load_model(res.checkpoint), test);
        f << length << ',' << rank << ',' << res.trainable_params << ',' << std::setprecision(17) << r.average.psnr
          << ',' << r.average.ssim << '\n';
        f.flush();
        std::printf("length %zu rank %zu: %.4f dB\n", length, rank, r.average.psnr);
      }
    std::cout << path << '\n';
    return kOk;
  }

  const auto m = train::load_model(checkpoint);
  const auto ds = synth::load_dataset(data_root(m, data, "test"));
  if (sample >= ds.samples.size()) throw ConfigError("--sample beyond the dataset size");
  if (m.bank && m.bank->config().length > 0) {
    const auto sim = prompt::similarity_matrix(*m.bank, m.experiment.loss.contrast_on);
    eval::write_similarity_csv((fs::path(dir) / "similarity.csv").string(), m.bank->tasks(), sim);
    eval::write_svd_csv((fs::path(dir) / "svd.csv").string(), *m.bank);
  }
  eval::export_embeddings(*m.model, m.bank.get(), ds, "bottleneck", dir);
  const auto& s = ds.samples[sample];
  const std::string& task = ds.tasks[s.task];
  eval::export_attention(*m.model, {{"no_prompt", nullptr}}, task, s.lq, layer, dir);
  if (m.bank) eval::export_attention(*m.model, {{train::strategy_name(m.strategy), m.bank.get()}}, task, s.lq, layer, dir);
  for (const auto& other : compare) {
    const auto o = train::load_model(other);
    if (!o.bank) continue;
    eval::export_attention(*o.model, {{train::strategy_name(o.strategy), o.bank.get()}}, task, s.lq, layer, dir);
  }
  std::cout << dir << '\n';
  return kOk;
}

json component_counts(const train::LoadedModel& m) {
  const bool tuned = m.checkpoint.stage == "tune";
  const std::size_t backbone = m.model->param_count();
  const std::size_t prompts = m.bank ? m.bank->param_count() : 0;
  const std::size_t trainable = m.checkpoint.stage == "pretrain" ? backbone : tuned ? prompts : backbone + prompts;
  json j = {{"stage", m.checkpoint.stage},
            {"strategy", train::strategy_name(m.strategy)},
            {"backbone", backbone},
            {"prompts", prompts},
            {"total", backbone + prompts},
            {"trainable", trainable}};
  if (m.bank) j["prompt_formula"] = m.bank->expected_param_count();
  return j;
}

int cmd_params(const std::string& checkpoint, bool as_json) {
  if (checkpoint.empty()) throw ConfigError("params needs --checkpoint");
  const auto m = train::load_model(checkpoint);
  const json j = component_counts(m);
  if (as_json) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::printf("stage      %s\nstrategy   %s\nbackbone   %zu\nprompts    %zu\ntotal      %zu\ntrainable  %zu\n",
                j["stage"].get<std::string>().c_str(), j["strategy"].get<std::string>().c_str(),
                j["backbone"].get<std::size_t>(), j["prompts"].get<std::size_t>(), j["total"].get<std::size_t>(),
                j["trainable"].get<std::size_t>());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  set_num_threads(0);
  CLI::App app{"Task-aware prompting for all-in-one weather restoration"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "experiment JSON");
    sub->add_option("--profile", common.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  };

  std::string out, resume, checkpoint, strategy = "p_attn_enhanced", data, split = "test", task, grid;
  std::string grid_strategy = "p_attn";
  std::vector<std::string> compare;
  std::optional<std::size_t> rank, length;
  std::size_t stop_after = 0, layer = 0, sample = 0;
  bool quiet = false, as_json = false;

  auto* synth_cmd = app.add_subcommand("synth", "build the train/test datasets");
  add_common(synth_cmd);
  synth_cmd->add_option("--out", out, "dataset root (overrides data.root)");

  auto* pre_cmd = app.add_subcommand("pretrain", "stage 1: supervised backbone training");
  add_common(pre_cmd);
  pre_cmd->add_option("--resume", resume, "checkpoint to resume from");
  pre_cmd->add_option("--stop-after", stop_after, "stop after this many completed epochs");
  pre_cmd->add_flag("--quiet", quiet);

  auto* tune_cmd = app.add_subcommand("tune", "stage 2: prompt tuning (or joint training)");
  add_common(tune_cmd);
  tune_cmd->add_option("--strategy", strategy, "none, p_full, p_attn, p_attn_joint, p_attn_enhanced");
  tune_cmd->add_option("--rank", rank, "prompt rank (0 = unfactorized)");
  tune_cmd->add_option("--length", length, "prompt length m");
  tune_cmd->add_option("--checkpoint", checkpoint, "pretrain checkpoint");
  tune_cmd->add_option("--resume", resume, "checkpoint to resume from");
  tune_cmd->add_option("--stop-after", stop_after, "stop after this many completed epochs");
  tune_cmd->add_flag("--quiet", quiet);

  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM report");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  eval_cmd->add_option("--data", data, "dataset root (default: from the checkpoint config)");
  eval_cmd->add_option("--split", split, "test or train");
  eval_cmd->add_option("--task", task, "restrict to one task");
  eval_cmd->add_option("--out", out, "report directory");

  auto* an_cmd = app.add_subcommand("analyze", "similarity, SVD, attention and embedding exports");
  add_common(an_cmd);
  an_cmd->add_option("--checkpoint", checkpoint, "checkpoint to analyze")->required();
  an_cmd->add_option("--compare", compare, "extra checkpoints for attention maps");
  an_cmd->add_option("--data", data, "dataset root");
  an_cmd->add_option("--out", out, "output directory");
  an_cmd->add_option("--layer", layer, "attention layer for map exports");
  an_cmd->add_option("--sample", sample, "test sample for map exports");
  an_cmd->add_option("--grid", grid, "sweep, e.g. \"length=4,8,12,16 rank=0,4,8\"");
  an_cmd->add_option("--strategy", grid_strategy, "strategy used by --grid");
  an_cmd->add_flag("--quiet", quiet);

  auto* params_cmd = app.add_subcommand("params", "parameter counts per component");
  params_cmd->add_option("--checkpoint", checkpoint, "checkpoint")->required();
  params_cmd->add_flag("--json", as_json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*synth_cmd) return cmd_synth(common, out);
    if (*pre_cmd) return cmd_pretrain(common, resume, stop_after, quiet);
    if (*tune_cmd) return cmd_tune(common, strategy, rank, length, checkpoint, resume, stop_after, quiet);
    if (*eval_cmd) return cmd_eval(checkpoint, data, split, task, out);
    if (*an_cmd)
      return cmd_analyze(checkpoint, compare, data, out, layer, sample, grid, common, grid_strategy, quiet);
    if (*params_cmd) return cmd_params(checkpoint, as_json);
  } catch (const IoError& e) {
    std::cerr << "tap: I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericError& e) {
    std::cerr << "tap: numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const DomainError& e) {
    std::cerr << "tap: numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "tap: config error: " << e.what() << '\n';
    return kConfig;
  }
  return kConfig;
}

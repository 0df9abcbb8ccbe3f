#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "tap/core/errors.hpp"
#include "tap/core/hash.hpp"
#include "tap/eval/metrics.hpp"
#include "tap/objectives/perceptual.hpp"
#include "tap/synth/dataset.hpp"
#include "tap/train/checkpoint.hpp"
#include "tap/train/data.hpp"
#include "tap/train/experiment.hpp"
#include "tap/train/optim.hpp"
#include "tap/train/pipeline.hpp"
#include "tap/tensor/ops.hpp"
#include "tap/train/trainer.hpp"
#include "tmpdir.hpp"

using namespace tap;
using namespace tap::train;
using tap::testing::TempDir;
namespace fs = std::filesystem;

namespace {

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.dims = {4, 8, 8, 8, 4};
  c.depths = {1, 1, 1, 1, 1};
  c.heads = {1, 2, 2, 2, 1};
  c.window = 4;
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Small shared dataset: 4 tasks x 4 images of 16x16.
const synth::Dataset& tiny_data() {
  static TempDir dir("train_data");
  static const synth::Dataset ds = [] {
    synth::build_dataset(dir.str(), synth::DatasetSpec::defaults(4, 16, 5));
    return synth::load_dataset(dir.str());
  }();
  return ds;
}

StageInputs tiny_inputs(Stage stage, std::size_t epochs) {
  StageInputs in;
  in.cfg.stage = stage;
  in.cfg.epochs = epochs;
  in.cfg.batch_size = 4;
  in.cfg.crop_size = 16;
  in.cfg.lr_init = stage == Stage::PromptTune ? 1e-2 : 1e-3;
  in.train = &tiny_data();
  return in;
}

bool same_blobs(const Checkpoint& a, const Checkpoint& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (a.tensors[i].name != b.tensors[i].name || a.tensors[i].data != b.tensors[i].data) return false;
  }
  return true;
}

}  // namespace

TEST(Batches, BalancedAndDeterministic) {
  std::vector<std::vector<std::size_t>> pools(4);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t i = 0; i < 10; ++i) pools[t].push_back(t * 10 + i);
  BalancedBatches b(pools, 8, 3);
  EXPECT_EQ(b.batches_per_epoch(), 5u);
  for (std::size_t e = 0; e < 3; ++e) {
    const auto plan = b.epoch(e);
    ASSERT_EQ(plan.size(), 5u);
    std::set<std::size_t> seen;
    for (const auto& batch : plan) {
      ASSERT_EQ(batch.size(), 8u);
      std::size_t hist[4] = {0, 0, 0, 0};
      for (auto i : batch) ++hist[i / 10], seen.insert(i);
      for (auto h : hist) EXPECT_EQ(h, 2u);
    }
    EXPECT_EQ(seen.size(), 40u);  // no repeats within an epoch
  }
  EXPECT_EQ(b.epoch(1), BalancedBatches(pools, 8, 3).epoch(1));
  EXPECT_NE(b.epoch(1), b.epoch(2));
  EXPECT_THROW(BalancedBatches(pools, 6, 3), ConfigError);
}

TEST(Batches, SmallestPoolBoundsTheEpoch) {
  std::vector<std::vector<std::size_t>> pools{{0, 1, 2, 3, 4, 5}, {6, 7}, {8, 9, 10, 11}};
  EXPECT_EQ(BalancedBatches(pools, 3, 1).batches_per_epoch(), 2u);
  EXPECT_THROW(BalancedBatches({{0}, {}}, 2, 1), ConfigError);
}

TEST(Augment, IdentityAndFlipInvolution) {
  const synth::Image a = synth::gen_clean(1, 24, 24), b = synth::gen_clean(2, 24, 24);
  Rng rng(4);
  const auto p = augment(a, b, 24, 0.0, rng);
  EXPECT_EQ(p.lq.pixels, a.pixels);
  EXPECT_EQ(p.hq.pixels, b.pixels);
  EXPECT_EQ(hflip(hflip(a)).pixels, a.pixels);
  EXPECT_THROW(augment(a, b, 32, 0.5, rng), ConfigError);
}

TEST(Augment, PairsStayAligned) {
  synth::DegradationSpec s;
  s.task = synth::Weather::Snow;
  s.seed = 8;
  const auto d = synth::synthesize(s, 48, 48);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed), replay(seed);
    const auto p = augment(d.lq, d.hq, 16, 0.5, rng);
    // replay the draws to find the window
    const std::size_t y0 = replay.below(48 - 16 + 1), x0 = replay.below(48 - 16 + 1);
    const double ref = eval::psnr(crop(d.lq, y0, x0, 16, 16), crop(d.hq, y0, x0, 16, 16));
    EXPECT_LT(std::abs(eval::psnr(p.lq, p.hq) - ref), 0.01);
  }
}

TEST(Schedule, CosineEndpoints) {
  const double a = 3e-4, b = 3e-6;
  EXPECT_NEAR(cosine_lr(0, 100, a, b), a, 1e-12);
  EXPECT_NEAR(cosine_lr(50, 100, a, b), 0.5 * (a + b), 1e-12);
  EXPECT_NEAR(cosine_lr(100, 100, a, b), b, 1e-12);
  EXPECT_NEAR(cosine_lr(25, 100, a, b), b + 0.5 * (a - b) * (1 + std::cos(std::numbers::pi / 4)), 1e-15);
}

TEST(Adam, MatchesHandComputedSteps) {
  Tensor w = Tensor::from({2}, {1.0, -2.0}, true);
  Adam opt({{"w", w}}, AdamConfig{});
  double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {1.0, -2.0};
  for (int t = 1; t <= 3; ++t) {
    opt.zero_grad();
    sum(square(w)).backward();
    opt.step(0.1);
    for (int i = 0; i < 2; ++i) {
      const double g = 2 * x[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      x[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(w.data()[i], x[i], 1e-14);
    }
  }
  EXPECT_EQ(opt.steps(), 3u);
}

TEST(Adam, ClipGradNorm) {
  Tensor a = Tensor::from({2}, {1.0, 1.0}, true), b = Tensor::from({1}, {1.0}, true);
  // grads (3, 0) and (4): global norm 5
  add(sum(mul(a, Tensor::from({2}, {3.0, 0.0}))), sum(mul_scalar(b, 4.0))).backward();
  std::vector<model::NamedParameter> ps{{"a", a}, {"b", b}};
  EXPECT_NEAR(clip_grad_norm(ps, 0.0), 5.0, 1e-12);
  EXPECT_NEAR(a.grad()[0], 3.0, 1e-12);
  EXPECT_NEAR(clip_grad_norm(ps, 1.0), 5.0, 1e-12);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-12);
  EXPECT_NEAR(clip_grad_norm(ps, 1.0), 1.0, 1e-12);
}

TEST(Checkpoint, RoundTripIsByteExact) {
  TempDir dir("ckpt");
  model::RestorationModel m(tiny_model());
  Checkpoint c;
  c.stage = "pretrain";
  c.epoch = 3;
  c.step = 17;
  c.rng_state = "abc";
  c.extractor_seed = 99;
  c.config = {{"name", "t"}, {"x", 1.5}};
  capture(c, "model", m);
  save_checkpoint(dir / "a.ckpt", c);
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back.config, c.config);
  EXPECT_EQ(back.epoch, 3u);
  EXPECT_EQ(back.extractor_seed, 99u);
  EXPECT_TRUE(same_blobs(back, c));
  save_checkpoint(dir / "b.ckpt", back);
  EXPECT_EQ(read_file(dir / "a.ckpt"), read_file(dir / "b.ckpt"));

  model::ModelConfig other = tiny_model();
  other.seed = 2;
  model::RestorationModel m2(other);
  EXPECT_NE(parameter_hash(m2), parameter_hash(m));
  restore(back, "model", m2);
  EXPECT_EQ(parameter_hash(m2), parameter_hash(m));
}

TEST(Checkpoint, CorruptionIsDetected) {
  TempDir dir("ckpt_bad");
  model::RestorationModel m(tiny_model());
  Checkpoint c;
  c.stage = "pretrain";
  capture(c, "model", m);
  save_checkpoint(dir / "a.ckpt", c);
  const std::string bytes = read_file(dir / "a.ckpt");

  for (std::size_t cut : {std::size_t(4), std::size_t(40), bytes.size() / 2, bytes.size() - 1}) {
    std::ofstream(dir / "t.ckpt", std::ios::binary) << bytes.substr(0, cut);
    EXPECT_THROW(load_checkpoint(dir / "t.ckpt"), CorruptionError) << cut;
  }
  std::string flipped = bytes;
  flipped[flipped.size() - 20] ^= 0x10;
  std::ofstream(dir / "f.ckpt", std::ios::binary) << flipped;
  EXPECT_THROW(load_checkpoint(dir / "f.ckpt"), CorruptionError);

  std::string version = bytes;
  version[8] = 7;  // u32 version right after the magic
  std::ofstream(dir / "v.ckpt", std::ios::binary) << version;
  try {
    load_checkpoint(dir / "v.ckpt");
    FAIL();
  } catch (const CorruptionError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  EXPECT_THROW(load_checkpoint(dir / "none.ckpt"), IoError);

  Checkpoint partial = c;
  partial.tensors.pop_back();
  EXPECT_THROW(restore(partial, "model", m), CorruptionError);
}

TEST(Trainer, PretrainLossDropsAndLrEndsAtMinimum) {
  auto in = tiny_inputs(Stage::Pretrain, 4);
  in.loss.lambda_per = 0.0;
  in.cfg.lr_init = 3e-3;
  model::RestorationModel m(tiny_model());
  const auto r = pretrain(m, in);
  ASSERT_EQ(r.epochs.size(), 4u);
  EXPECT_LT(r.epochs.back().loss, r.epochs.front().loss);
  EXPECT_NEAR(r.epochs.back().lr_last, in.cfg.lr_min(), 1e-15);
  EXPECT_EQ(r.trainable_params, m.param_count());
}

TEST(Trainer, ResumeIsBitwiseIdentical) {
  TempDir full_dir("full"), part_dir("part");
  objectives::RandomConvPyramid ex(3);
  auto in = tiny_inputs(Stage::Pretrain, 3);
  in.extractor = &ex;

  model::RestorationModel a(tiny_model());
  in.run_dir = full_dir.str();
  const auto full = pretrain(a, in);

  model::RestorationModel b(tiny_model());
  in.run_dir = part_dir.str();
  in.stop_after = 1;
  const auto first = pretrain(b, in);
  EXPECT_EQ(first.checkpoint.epoch, 1u);
  const Checkpoint saved = load_checkpoint(part_dir / "checkpoint.ckpt");
  model::RestorationModel c(tiny_model());
  in.stop_after = 0;
  const auto rest = pretrain(c, in, &saved);

  EXPECT_TRUE(same_blobs(full.checkpoint, rest.checkpoint));
  EXPECT_EQ(read_file(full_dir / "metrics.csv"), read_file(part_dir / "metrics.csv"));
  EXPECT_EQ(read_file(full_dir / "checkpoint.ckpt"), read_file(part_dir / "checkpoint.ckpt"));
}

TEST(Trainer, TuningFreezesBackbone) {
  model::RestorationModel m(tiny_model());
  prompt::BankConfig bc;
  bc.length = 4;
  bc.rank = 2;
  prompt::PromptBank bank(bc, m.attention_layers());
  const auto graph = prompt::RelatednessGraph::standard(bc.tasks);
  auto in = tiny_inputs(Stage::PromptTune, 2);
  in.graph = &graph;
  in.val = &tiny_data();
  const std::string before = parameter_hash(m), bank_before = parameter_hash(bank);
  const auto r = prompt_tune(m, bank, in);
  EXPECT_EQ(r.backbone_hash_before, before);
  EXPECT_EQ(r.backbone_hash_after, before);
  EXPECT_EQ(parameter_hash(m), before);
  EXPECT_NE(parameter_hash(bank), bank_before);
  EXPECT_EQ(r.trainable_params, bank.expected_param_count());
  EXPECT_EQ(m.param_count(true), 0u);
  EXPECT_EQ(r.epochs.back().val_psnr.size(), 4u);
  EXPECT_GT(r.epochs.back().contrastive, 0.0);
}

TEST(Trainer, JointTrainsBackboneAndPrompts) {
  model::RestorationModel m(tiny_model());
  prompt::BankConfig bc;
  bc.length = 2;
  prompt::PromptBank bank(bc, m.attention_layers());
  auto in = tiny_inputs(Stage::Joint, 1);
  in.loss.lambda_per = 0.0;
  in.loss.lambda_cont = 0.0;
  const std::string before = parameter_hash(m), bank_before = parameter_hash(bank);
  const auto r = train_stage(m, &bank, in);
  EXPECT_NE(parameter_hash(m), before);
  EXPECT_NE(parameter_hash(bank), bank_before);
  EXPECT_EQ(r.trainable_params, m.param_count() + bank.param_count());
}

TEST(Trainer, NonFiniteLossAborts) {
  model::RestorationModel m(tiny_model());
  m.named_parameters().front().tensor.mutable_data()[0] = std::nan("");
  auto in = tiny_inputs(Stage::Pretrain, 1);
  in.loss.lambda_per = 0.0;
  try {
    pretrain(m, in);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lr"), std::string::npos);
    EXPECT_NE(msg.find("batch seed"), std::string::npos);
  }
}

TEST(Config, ProfilesAndValidation) {
  const auto desk = profile("desk", Stage::Pretrain);
  EXPECT_EQ(desk.epochs, 30u);
  EXPECT_EQ(desk.batch_size, 8u);
  EXPECT_DOUBLE_EQ(desk.lr_init, 3e-4);
  EXPECT_DOUBLE_EQ(profile("desk", Stage::PromptTune).lr_init, 5e-3);
  EXPECT_DOUBLE_EQ(profile("paper", Stage::PromptTune).lr_init, 5e-5);
  EXPECT_EQ(profile("desk", Stage::PromptTune).epochs, 15u);
  const auto paper = profile("paper", Stage::Pretrain);
  EXPECT_EQ(paper.epochs, 200u);
  EXPECT_EQ(paper.batch_size, 32u);
  EXPECT_EQ(paper.crop_size, 256u);
  EXPECT_EQ(profile("paper", Stage::PromptTune).epochs, 100u);
  EXPECT_THROW(profile("laptop", Stage::Pretrain), ConfigError);
  TrainConfig c = desk;
  c.batch_size = 6;
  EXPECT_THROW(c.validate(4), ConfigError);
}

TEST(Config, StrictJsonParsing) {
  auto j = to_json(ExperimentConfig::defaults());
  const auto back = experiment_from_json(j);
  EXPECT_EQ(to_json(back), j);

  auto bad = j;
  bad["model"]["depthz"] = 3;
  try {
    experiment_from_json(bad);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.depthz"), std::string::npos) << e.what();
  }
  auto haze = j;
  haze["data"]["haze"]["t_min"] = 0.0;
  EXPECT_THROW(experiment_from_json(haze), ConfigError);
  EXPECT_THROW(experiment_from_json(nlohmann::json{{"pretrain", {{"epochs", "many"}}}}), ConfigError);
}

TEST(Config, StrategiesSetArmParameters) {
  auto c = ExperimentConfig::defaults();
  apply_strategy(c, Strategy::PAttnEnhanced);
  EXPECT_EQ(c.prompts.rank, 4u);
  EXPECT_EQ(c.prompts.length, 12u);
  EXPECT_DOUBLE_EQ(c.loss.lambda_cont, 0.1);
  EXPECT_EQ(strategy_tag(c, Strategy::PAttnEnhanced), "p_attn_enhanced_m12_r4");
  apply_strategy(c, Strategy::PAttn, 0, 8);
  EXPECT_EQ(c.prompts.rank, 0u);
  EXPECT_EQ(c.prompts.length, 8u);
  EXPECT_EQ(c.loss.lambda_cont, 0.0);
  apply_strategy(c, Strategy::PFull);
  EXPECT_EQ(c.prompts.placement, prompt::Placement::Hidden);
  EXPECT_THROW(parse_strategy("p_magic"), ConfigError);
  EXPECT_EQ(parse_strategy("p_attn_joint"), Strategy::PAttnJoint);
}

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "tap/core/errors.hpp"
#include "tap/core/hash.hpp"
#include "tap/core/rng.hpp"
#include "tap/eval/analysis.hpp"
#include "tap/eval/evaluate.hpp"
#include "tap/eval/metrics.hpp"
#include "tap/prompt/analysis.hpp"
#include "tap/synth/dataset.hpp"
#include "metric_oracles.hpp"
#include "tmpdir.hpp"

using namespace tap;
using namespace tap::eval;
using synth::Image;
using tap::testing::TempDir;
using tap::testing::oracle_psnr;
using tap::testing::oracle_ssim;
using tap::testing::random_image;

namespace {

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.dims = {4, 8, 8, 8, 4};
  c.depths = {1, 1, 1, 1, 1};
  c.heads = {1, 2, 2, 2, 1};
  c.window = 4;
  return c;
}

const synth::Dataset& tiny_data() {
  static TempDir dir("eval_data");
  static const synth::Dataset ds = [] {
    synth::build_dataset(dir.str(), synth::DatasetSpec::defaults(3, 16, 9));
    return synth::load_dataset(dir.str());
  }();
  return ds;
}

}  // namespace

TEST(Metrics, MatchScalarOracles) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Image a = random_image(2 * s, 16, 16), b = random_image(2 * s + 1, 16, 16);
    EXPECT_NEAR(psnr(a, b), oracle_psnr(a, b), 1e-9);
    EXPECT_NEAR(ssim(a, b), oracle_ssim(a, b), 1e-9);
  }
}

TEST(Metrics, AnalyticCases) {
  const Image a = random_image(1, 16, 16);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  Image lo(16, 16, 0.3), hi(16, 16, 0.4);
  EXPECT_NEAR(psnr(lo, hi), 20.0, 1e-9);
  Image z(16, 16, 0.0), t(16, 16, 0.1);
  EXPECT_EQ(psnr(z, t), 20.0);
  const Image b = random_image(2, 16, 16);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_THROW(ssim(Image(8, 8), Image(8, 8)), ShapeError);
  EXPECT_THROW(psnr(Image(16, 16), Image(16, 8)), ShapeError);
}

TEST(Metrics, InvertedBinaryImageHasNegativeSsim) {
  Rng rng(4);
  Image a(32, 32);
  for (std::size_t p = 0; p < 32 * 32; ++p) {
    const double v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    for (int c = 0; c < 3; ++c) a.pixels[p * 3 + c] = v;
  }
  Image inv = a;
  for (auto& v : inv.pixels) v = 1.0 - v;
  EXPECT_LT(ssim(a, inv), 0.0);
}

TEST(Evaluate, ReportRecomputesFromCsv) {
  TempDir dir("report");
  model::RestorationModel m(tiny_model());
  const auto rep = evaluate(m, nullptr, tiny_data());
  ASSERT_EQ(rep.tasks.size(), 4u);
  EXPECT_EQ(rep.samples.size(), 12u);
  write_report(dir.str(), rep);

  std::ifstream csv(dir / "per_sample.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "task,index,psnr,ssim");
  std::map<std::string, std::pair<double, std::size_t>> per_task;
  double all = 0.0;
  std::size_t n = 0;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string task, idx, p, s;
    std::getline(ss, task, ',');
    std::getline(ss, idx, ',');
    std::getline(ss, p, ',');
    std::getline(ss, s, ',');
    per_task[task].first += std::stod(p);
    per_task[task].second += 1;
    all += std::stod(p);
    ++n;
  }
  EXPECT_EQ(n, 12u);
  std::ifstream rj(dir / "report.json");
  const auto j = nlohmann::json::parse(rj);
  for (const auto& row : rep.tasks) {
    EXPECT_NEAR(row.psnr, per_task[row.task].first / per_task[row.task].second, 1e-9);
    EXPECT_EQ(row.count, 3u);
  }
  EXPECT_NEAR(rep.average.psnr, all / n, 1e-9);
  EXPECT_TRUE(j.contains("average"));
  EXPECT_EQ(j["tasks"].size(), 4u);
}

TEST(Evaluate, PureAndTaskFilter) {
  model::RestorationModel m(tiny_model());
  EXPECT_EQ(report_json(evaluate(m, nullptr, tiny_data())), report_json(evaluate(m, nullptr, tiny_data())));
  const auto one = evaluate(m, nullptr, tiny_data(), std::string("snow"));
  ASSERT_EQ(one.tasks.size(), 1u);
  EXPECT_EQ(one.samples.size(), 3u);
  EXPECT_THROW(evaluate(m, nullptr, tiny_data(), std::string("fog")), LookupError);
}

TEST(Evaluate, GroundTruthAgainstItselfIsPerfect) {
  EvalReport rep;
  const auto& data = tiny_data();
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    rep.samples.push_back({data.tasks[s.task], i, psnr(s.hq, s.hq), ssim(s.hq, s.hq)});
  }
  summarize(rep, data.tasks);
  for (const auto& row : rep.tasks) {
    EXPECT_EQ(row.psnr, kPsnrCap);
    EXPECT_NEAR(row.ssim, 1.0, 1e-12);
  }
  EXPECT_EQ(rep.average.psnr, kPsnrCap);
}

TEST(Analysis, AttentionRowsSumToOne) {
  model::RestorationModel m(tiny_model());
  prompt::BankConfig bc;
  bc.length = 3;
  bc.init_std = 0.5;
  prompt::PromptBank bank(bc, m.attention_layers());
  const auto& lq = tiny_data().samples[0].lq;
  for (const prompt::PromptBank* b : std::vector<const prompt::PromptBank*>{nullptr, &bank}) {
    for (std::size_t layer = 0; layer < m.attention_layers().size(); ++layer) {
      const auto s = attention_summary(m, b, "rain", lq, layer);
      EXPECT_EQ(s.prompt_tokens, b ? 3u : 0u);
      for (const auto& w : s.weights) {
        double t = 0.0;
        for (double v : w) t += v;
        EXPECT_NEAR(t, 1.0, 1e-9);
      }
    }
  }
}

TEST(Analysis, ExportConditions) {
  TempDir dir("attn");
  model::RestorationModel m(tiny_model());
  prompt::BankConfig zero;
  zero.length = 0;
  prompt::PromptBank empty(zero, m.attention_layers());
  prompt::BankConfig bc;
  bc.length = 4;
  bc.init_std = 0.5;
  prompt::PromptBank bank(bc, m.attention_layers());
  const auto& lq = tiny_data().indices_of(1).empty() ? tiny_data().samples[0].lq
                                                     : tiny_data().samples[tiny_data().indices_of(1)[0]].lq;
  const auto files = export_attention(m, {{"none", nullptr}, {"zero", &empty}, {"prompt", &bank}}, "snow", lq, 0,
                                      dir.str());
  ASSERT_EQ(files.size(), 3u);  // one head at layer 0, three conditions
  EXPECT_EQ(hash_file(dir / "none/attn/0/0.png"), hash_file(dir / "zero/attn/0/0.png"));

  const auto a = attention_summary(m, nullptr, "snow", lq, 0);
  const auto b = attention_summary(m, &bank, "snow", lq, 0);
  double diff = 0.0;
  for (std::size_t k = 0; k < a.weights[0].size(); ++k) diff += std::abs(a.weights[0][k] - b.weights[0][k + 4]);
  EXPECT_GT(diff / a.weights[0].size(), 0.0);
  EXPECT_NE(hash_file(dir / "none/attn/0/0.png"), hash_file(dir / "prompt/attn/0/0.png"));
}

TEST(Analysis, EmbeddingsOneRowPerSample) {
  TempDir dir("embed");
  model::RestorationModel m(tiny_model());
  const auto e = embeddings(m, nullptr, tiny_data());
  ASSERT_EQ(e.features.size(), tiny_data().samples.size());
  for (const auto& f : e.features) EXPECT_EQ(f.size(), 8u);
  const auto path = export_embeddings(m, nullptr, tiny_data(), "bottleneck", dir.str());
  std::ifstream in(path);
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, tiny_data().samples.size());
  EXPECT_THROW(embeddings(m, nullptr, tiny_data(), "stage0"), ConfigError);
  const auto sep = embedding_separation(e);
  EXPECT_LE(sep.within, 1.0 + 1e-12);
  EXPECT_GE(sep.across, -1.0 - 1e-12);
}

TEST(Analysis, SimilarityAndSvdCsv) {
  TempDir dir("csv");
  model::RestorationModel m(tiny_model());
  prompt::BankConfig bc;
  bc.length = 12;
  bc.rank = 4;
  prompt::PromptBank bank(bc, m.attention_layers());
  const auto sim = prompt::similarity_matrix(bank);
  write_similarity_csv(dir / "similarity.csv", bank.tasks(), sim);
  std::ifstream in(dir / "similarity.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_NE(header.find("raindrop"), std::string::npos);
  write_svd_csv(dir / "svd.csv", bank);
  std::ifstream svd(dir / "svd.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(svd, line);
  EXPECT_EQ(line, "layer,slot,task,k,sigma,cumulative");
  while (std::getline(svd, line)) ++rows;
  std::size_t expect = 0;
  for (const auto& l : m.attention_layers()) expect += 2 * 4 * std::min<std::size_t>(12, l.dim);
  EXPECT_EQ(rows, expect);
}

#include "tap/eval/evaluate.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "tap/core/errors.hpp"
#include "tap/eval/metrics.hpp"

namespace tap::eval {

synth::Image restore_image(const model::RestorationModel& model, const prompt::PromptBank* bank,
                           const std::string& task, const synth::Image& lq) {
  NoGradGuard guard;
  model::ForwardOptions opt;
  prompt::PromptSet prompts;
  if (bank) {
    prompts = bank->for_batch({bank->task_index(task)});
    opt.prompts = &prompts;
  }
  synth::Image out = synth::from_tensor(model.forward(synth::to_tensor(lq), opt));
  out.clamp01();
  return out;
}

void summarize(EvalReport& report, const std::vector<std::string>& task_order) {
  report.tasks.clear();
  for (const auto& t : task_order) {
    TaskRow row;
    row.task = t;
    for (const auto& s : report.samples) {
      if (s.task != t) continue;
      ++row.count;
      row.psnr += s.psnr;
      row.ssim += s.ssim;
    }
    if (row.count == 0) continue;
    row.psnr /= static_cast<double>(row.count);
    row.ssim /= static_cast<double>(row.count);
    report.tasks.push_back(row);
  }
  report.average = TaskRow{"average", report.samples.size(), 0.0, 0.0};
  for (const auto& s : report.samples) {
    report.average.psnr += s.psnr;
    report.average.ssim += s.ssim;
  }
  if (!report.samples.empty()) {
    report.average.psnr /= static_cast<double>(report.samples.size());
    report.average.ssim /= static_cast<double>(report.samples.size());
  }
}

EvalReport evaluate(const model::RestorationModel& model, const prompt::PromptBank* bank, const synth::Dataset& data,
                    const std::optional<std::string>& task) {
  std::optional<std::size_t> only;
  if (task) only = data.task_index(*task);
  EvalReport r;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    if (only && s.task != *only) continue;
    const auto& name = data.tasks[s.task];
    const synth::Image out = restore_image(model, bank, name, s.lq);
    r.samples.push_back({name, i, psnr(out, s.hq), ssim(out, s.hq)});
  }
  summarize(r, data.tasks);
  return r;
}

namespace {

nlohmann::json row_json(const TaskRow& r) {
  return {{"task", r.task}, {"count", r.count}, {"psnr", r.psnr}, {"ssim", r.ssim}};
}

}  // namespace

std::string report_json(const EvalReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.tasks) rows.push_back(row_json(r));
  const nlohmann::json doc = {{"tasks", rows},
                              {"average", row_json(report.average)},
                              {"config_hash", report.config_hash},
                              {"checkpoint_hash", report.checkpoint_hash}};
  return doc.dump(2) + "\n";
}

void write_report(const std::string& dir, const EvalReport& report) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  const auto jpath = (fs::path(dir) / "report.json").string();
  std::ofstream j(jpath, std::ios::binary | std::ios::trunc);
  if (!j) throw IoError("cannot write " + jpath);
  j << report_json(report);
  const auto cpath = (fs::path(dir) / "per_sample.csv").string();
  std::ofstream c(cpath, std::ios::binary | std::ios::trunc);
  if (!c) throw IoError("cannot write " + cpath);
  c << "task,index,psnr,ssim\n" << std::setprecision(17);
  for (const auto& s : report.samples) c << s.task << ',' << s.index << ',' << s.psnr << ',' << s.ssim << '\n';
  if (!j || !c) throw IoError("write failed in " + dir);
}

}  // namespace tap::eval

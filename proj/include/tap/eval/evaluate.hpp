#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "tap/model/backbone.hpp"
#include "tap/prompt/bank.hpp"
#include "tap/synth/dataset.hpp"

namespace tap::eval {

struct SampleScore {
  std::string task;
  std::size_t index = 0;  // position in the dataset
  double psnr = 0.0, ssim = 0.0;
};

struct TaskRow {
  std::string task;
  std::size_t count = 0;
  double psnr = 0.0, ssim = 0.0;
};

struct EvalReport {
  std::vector<TaskRow> tasks;
  TaskRow average;  // over all samples
  std::vector<SampleScore> samples;
  std::string config_hash, checkpoint_hash;
};

// Restores one image: [1,H,W,3] forward with the task's prompts (if any),
// clamped to [0, 1].
synth::Image restore_image(const model::RestorationModel& model, const prompt::PromptBank* bank,
                           const std::string& task, const synth::Image& lq);

// Full images, no augmentation. `task` restricts to one task (LookupError if
// the dataset lacks it).
EvalReport evaluate(const model::RestorationModel& model, const prompt::PromptBank* bank, const synth::Dataset& data,
                    const std::optional<std::string>& task = std::nullopt);

// Per-task and average rows computed from the sample scores.
void summarize(EvalReport& report, const std::vector<std::string>& task_order);

// <dir>/report.json and <dir>/per_sample.csv.
void write_report(const std::string& dir, const EvalReport& report);
std::string report_json(const EvalReport& report);

}  // namespace tap::eval

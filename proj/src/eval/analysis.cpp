#include "tap/eval/analysis.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include "tap/core/errors.hpp"
#include "tap/prompt/analysis.hpp"
#include "tap/tensor/ops.hpp"

namespace tap::eval {

namespace fs = std::filesystem;

namespace {

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create " + p.string() + ": " + ec.message());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << std::setprecision(17);
  return f;
}

}  // namespace

AttentionSummary attention_summary(const model::RestorationModel& model, const prompt::PromptBank* bank,
                                   const std::string& task, const synth::Image& lq, std::size_t layer) {
  NoGradGuard guard;
  model::AttentionProbe probe;
  probe.layer = layer;
  model::ForwardOptions opt;
  opt.probe = &probe;
  prompt::PromptSet prompts;
  if (bank) {
    prompts = bank->for_batch({bank->task_index(task)});
    opt.prompts = &prompts;
  }
  model.forward(synth::to_tensor(lq), opt);
  const Tensor& p = probe.probs;  // [1, nW, heads, rows, keys]
  if (!p.defined() || p.dim() != 5) throw Error("attention probe captured nothing for layer " + std::to_string(layer));
  const std::size_t nw = p.size(1), heads = p.size(2), rows = p.size(3), keys = p.size(4);
  AttentionSummary s;
  s.layer = layer;
  s.heads = heads;
  s.prompt_tokens = probe.prompt_tokens;
  const std::size_t spatial = keys - s.prompt_tokens;
  s.side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(spatial))));
  // Hidden placement adds prompt queries at the front; keep spatial queries.
  const std::size_t q0 = rows - spatial;
  const auto d = p.data();
  s.weights.assign(heads, std::vector<double>(keys, 0.0));
  const double norm = 1.0 / static_cast<double>(nw * spatial);
  for (std::size_t w = 0; w < nw; ++w)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t q = q0; q < rows; ++q) {
        const double* row = d.data() + (((w * heads + h) * rows + q) * keys);
        for (std::size_t k = 0; k < keys; ++k) s.weights[h][k] += row[k] * norm;
      }
  return s;
}

std::vector<double> attention_map(const AttentionSummary& s, std::size_t head, std::size_t& height,
                                  std::size_t& width) {
  if (head >= s.heads) throw LookupError("attention head " + std::to_string(head) + " out of range");
  const auto& w = s.weights[head];
  width = s.side;
  const std::size_t prompt_rows = (s.prompt_tokens + s.side - 1) / s.side;
  height = prompt_rows + s.side;
  std::vector<double> img(height * width, 0.0);
  for (std::size_t k = 0; k < s.prompt_tokens; ++k) img[k] = w[k];
  for (std::size_t k = 0; k < s.side * s.side; ++k) img[prompt_rows * width + k] = w[s.prompt_tokens + k];
  double mx = 0.0;
  for (double v : img) mx = std::max(mx, v);
  if (mx > 0.0)
    for (auto& v : img) v /= mx;
  return img;
}

std::vector<std::string> export_attention(const model::RestorationModel& model,
                                          const std::vector<std::pair<std::string, const prompt::PromptBank*>>& conditions,
                                          const std::string& task, const synth::Image& lq, std::size_t layer,
                                          const std::string& dir) {
  std::vector<std::string> written;
  for (const auto& [name, bank] : conditions) {
    const auto s = attention_summary(model, bank, task, lq, layer);
    const fs::path out = fs::path(dir) / name / "attn" / std::to_string(layer);
    make_dirs(out);
    for (std::size_t h = 0; h < s.heads; ++h) {
      std::size_t ih = 0, iw = 0;
      const auto img = attention_map(s, h, ih, iw);
      const auto path = (out / (std::to_string(h) + ".png")).string();
      synth::write_gray_png(path, ih, iw, img);
      written.push_back(path);
    }
  }
  return written;
}

Embeddings embeddings(const model::RestorationModel& model, const prompt::PromptBank* bank,
                      const synth::Dataset& data, const std::string& layer) {
  if (layer != "bottleneck") throw ConfigError("embedding layer must be 'bottleneck', got '" + layer + "'");
  NoGradGuard guard;
  Embeddings e;
  for (const auto& s : data.samples) {
    Tensor feat;
    model::ForwardOptions opt;
    opt.bottleneck = &feat;
    prompt::PromptSet prompts;
    if (bank) {
      prompts = bank->for_batch({bank->task_index(data.tasks[s.task])});
      opt.prompts = &prompts;
    }
    model.forward(synth::to_tensor(s.lq), opt);
    const std::size_t c = feat.size(-1);
    const Tensor pooled = mean(reshape(feat, {feat.numel() / c, c}), 0, false);
    e.task.push_back(data.tasks[s.task]);
    e.features.push_back(pooled.to_vector());
  }
  return e;
}

std::string export_embeddings(const model::RestorationModel& model, const prompt::PromptBank* bank,
                              const synth::Dataset& data, const std::string& layer, const std::string& dir) {
  const auto e = embeddings(model, bank, data, layer);
  const fs::path out = fs::path(dir) / "embed";
  make_dirs(out);
  const auto path = (out / (layer + ".csv")).string();
  auto f = open_out(path);
  f << "task";
  const std::size_t dim = e.features.empty() ? 0 : e.features[0].size();
  for (std::size_t k = 0; k < dim; ++k) f << ",f" << k;
  f << '\n';
  for (std::size_t i = 0; i < e.task.size(); ++i) {
    f << e.task[i];
    for (double v : e.features[i]) f << ',' << v;
    f << '\n';
  }
  if (!f) throw IoError("write failed for " + path);
  return path;
}

Separation embedding_separation(const Embeddings& e) {
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) ab += a[k] * b[k], aa += a[k] * a[k], bb += b[k] * b[k];
    return ab / std::sqrt(aa * bb);
  };
  Separation s;
  std::size_t nw = 0, na = 0;
  for (std::size_t i = 0; i < e.task.size(); ++i)
    for (std::size_t j = i + 1; j < e.task.size(); ++j) {
      const double c = cosine(e.features[i], e.features[j]);
      if (e.task[i] == e.task[j]) {
        s.within += c;
        ++nw;
      } else {
        s.across += c;
        ++na;
      }
    }
  if (nw) s.within /= static_cast<double>(nw);
  if (na) s.across /= static_cast<double>(na);
  return s;
}

void write_similarity_csv(const std::string& path, const std::vector<std::string>& tasks,
                          const std::vector<std::vector<double>>& sim) {
  auto f = open_out(path);
  f << "task";
  for (const auto& t : tasks) f << ',' << t;
  f << '\n';
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    f << tasks[i];
    for (double v : sim[i]) f << ',' << v;
    f << '\n';
  }
  if (!f) throw IoError("write failed for " + path);
}

void write_svd_csv(const std::string& path, const prompt::PromptBank& bank) {
  auto f = open_out(path);
  f << "layer,slot,task,k,sigma,cumulative\n";
  if (bank.config().length > 0) {
    for (std::size_t l = 0; l < bank.layer_count(); ++l)
      for (auto slot : bank.slots())
        for (std::size_t t = 0; t < bank.task_count(); ++t) {
          const auto e = prompt::svd_energy(bank.materialize(t, l, slot));
          for (std::size_t k = 0; k < e.singular_values.size(); ++k) {
            f << l << ',' << prompt::slot_name(slot) << ',' << bank.tasks()[t] << ',' << k + 1 << ','
              << e.singular_values[k] << ',' << e.cumulative[k] << '\n';
          }
        }
  }
  if (!f) throw IoError("write failed for " + path);
}

}  // namespace tap::eval

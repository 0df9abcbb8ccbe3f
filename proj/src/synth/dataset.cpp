#include "tap/synth/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tap/core/errors.hpp"
#include "tap/core/rng.hpp"

namespace tap::synth {

namespace fs = std::filesystem;
using nlohmann::json;

void DatasetSpec::validate() const {
  if (tasks.empty()) throw ConfigError("dataset needs at least one task");
  if (height < 16 || width < 16) throw ConfigError("dataset images must be at least 16x16");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    tasks[i].validate();
    for (std::size_t j = 0; j < i; ++j)
      if (tasks[j].task == tasks[i].task) throw ConfigError(std::string("duplicate task ") + weather_name(tasks[i].task));
  }
}

DatasetSpec DatasetSpec::defaults(std::size_t per_task_count, std::size_t size, std::uint64_t seed) {
  DatasetSpec d;
  for (Weather w : {Weather::Rain, Weather::Snow, Weather::Haze, Weather::Raindrop}) {
    DegradationSpec s;
    s.task = w;
    d.tasks.push_back(s);
  }
  d.per_task_count = per_task_count;
  d.height = d.width = size;
  d.seed = seed;
  return d;
}

std::size_t Manifest::count(const std::string& task) const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.task == task;
  return n;
}

std::string manifest_path(const std::string& root) { return (fs::path(root) / "manifest.json").string(); }

namespace {

json truth_to_json(const DegradationSample& s) {
  json t = json::object();
  switch (s.task) {
    case Weather::Haze: {
      double lo = 1.0, hi = 0.0;
      for (double v : s.truth.transmission) lo = std::min(lo, v), hi = std::max(hi, v);
      t["airlight"] = s.truth.airlight;
      t["transmission_min"] = lo;
      t["transmission_max"] = hi;
      break;
    }
    default: {
      double mx = 0.0, acc = 0.0;
      for (double v : s.truth.layer) mx = std::max(mx, v), acc += v;
      t["layer_max"] = mx;
      t["layer_mean"] = s.truth.layer.empty() ? 0.0 : acc / static_cast<double>(s.truth.layer.size());
      break;
    }
  }
  return t;
}

json params_to_json(const DegradationSpec& s) {
  switch (s.task) {
    case Weather::Haze:
      return {{"t_min", s.haze.t_min}, {"t_max", s.haze.t_max}, {"airlight", s.haze.airlight}};
    case Weather::Rain:
      return {{"streak_count", s.rain.streak_count},
              {"angle_deg", s.rain.angle_deg},
              {"length_px", s.rain.length_px},
              {"intensity", s.rain.intensity}};
    case Weather::Snow:
      return {{"flake_count", s.snow.flake_count},
              {"radius_min", s.snow.radius_min},
              {"radius_max", s.snow.radius_max},
              {"opacity", s.snow.opacity}};
    case Weather::Raindrop:
      return {{"drop_count", s.raindrop.drop_count},
              {"radius_min", s.raindrop.radius_min},
              {"radius_max", s.raindrop.radius_max},
              {"blur_radius", s.raindrop.blur_radius},
              {"darkening", s.raindrop.darkening}};
  }
  return json::object();
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

}  // namespace

Manifest build_dataset(const std::string& root, const DatasetSpec& spec) {
  spec.validate();
  const fs::path base(root);
  Manifest m;
  json jsamples = json::array();
  json jparams = json::object();
  for (const auto& ts : spec.tasks) {
    const std::string name = weather_name(ts.task);
    m.tasks.push_back(name);
    jparams[name] = params_to_json(ts);
    ensure_dir(base / name / "lq");
    ensure_dir(base / name / "hq");
    for (std::size_t i = 0; i < spec.per_task_count; ++i) {
      DegradationSpec s = ts;
      s.seed = mix_seed(spec.seed, static_cast<std::uint64_t>(ts.task) + 1, i);
      const auto sample = synthesize(s, spec.height, spec.width);
      ManifestSample ms;
      ms.task = name;
      ms.seed = s.seed;
      ms.lq = name + "/lq/" + std::to_string(i) + ".png";
      ms.hq = name + "/hq/" + std::to_string(i) + ".png";
      write_png((base / ms.lq).string(), sample.lq);
      write_png((base / ms.hq).string(), sample.hq);
      const json truth = truth_to_json(sample);
      ms.truth_json = truth.dump();
      jsamples.push_back({{"task", ms.task}, {"lq", ms.lq}, {"hq", ms.hq}, {"seed", ms.seed}, {"truth", truth}});
      m.samples.push_back(std::move(ms));
    }
  }
  const json doc = {{"version", m.version},
                    {"tasks", m.tasks},
                    {"size", {spec.height, spec.width}},
                    {"seed", spec.seed},
                    {"params", jparams},
                    {"samples", jsamples}};
  const auto path = manifest_path(root);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path);
  return m;
}

Manifest read_manifest(const std::string& root) {
  const auto path = manifest_path(root);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
    Manifest m;
    m.version = doc.at("version").get<int>();
    m.tasks = doc.at("tasks").get<std::vector<std::string>>();
    for (const auto& js : doc.at("samples")) {
      ManifestSample s;
      s.task = js.at("task").get<std::string>();
      s.lq = js.at("lq").get<std::string>();
      s.hq = js.at("hq").get<std::string>();
      s.seed = js.at("seed").get<std::uint64_t>();
      s.truth_json = js.value("truth", json::object()).dump();
      m.samples.push_back(std::move(s));
    }
    return m;
  } catch (const json::exception& e) {
    throw CorruptionError("malformed manifest " + path + ": " + e.what());
  }
}

std::size_t Dataset::task_index(const std::string& name) const {
  for (std::size_t i = 0; i < tasks.size(); ++i)
    if (tasks[i] == name) return i;
  throw LookupError("task '" + name + "' is not in dataset " + root);
}

std::vector<std::size_t> Dataset::indices_of(std::size_t task) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].task == task) out.push_back(i);
  return out;
}

Dataset load_dataset(const std::string& root) {
  const Manifest m = read_manifest(root);
  Dataset d;
  d.root = root;
  d.tasks = m.tasks;
  const fs::path base(root);
  for (const auto& ms : m.samples) {
    Sample s;
    s.task = d.task_index(ms.task);
    s.seed = ms.seed;
    s.lq = read_png((base / ms.lq).string());
    s.hq = read_png((base / ms.hq).string());
    if (s.lq.height != s.hq.height || s.lq.width != s.hq.width) throw CorruptionError("lq/hq size mismatch for " + ms.lq);
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace tap::synth

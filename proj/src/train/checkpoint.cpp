#include "tap/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tap/core/errors.hpp"
#include "tap/core/hash.hpp"

namespace tap::train {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'T', 'A', 'P', 'C', 'K', 'P', 'T', '1'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : b_(bytes), path_(path) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > b_.size() - pos_) throw CorruptionError("checkpoint " + path_ + " is truncated");
  }
  const std::string& b_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string header_text(const Checkpoint& c) {
  nlohmann::json h = {{"version", c.version},      {"stage", c.stage},
                      {"epoch", c.epoch},          {"step", c.step},
                      {"rng", c.rng_state},        {"extractor_seed", c.extractor_seed},
                      {"config", c.config}};
  return h.dump();
}

}  // namespace

const TensorBlob* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
  for (const auto& t : tensors)
    if (t.name.rfind(prefix + ".", 0) == 0) return true;
  return false;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.version));
  const std::string header = header_text(ckpt);
  put<std::uint64_t>(out, header.size());
  out += header;
  put<std::uint64_t>(out, fnv1a(header));
  const std::size_t payload_start = out.size();
  put<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    if (shape_numel(t.shape) != t.data.size()) throw ShapeError("checkpoint blob " + t.name + " size mismatch");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
  }
  put<std::uint64_t>(out, fnv1a(std::string_view(out).substr(payload_start)));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();
  Reader r(bytes, path);
  if (r.take(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw CorruptionError(path + " is not a checkpoint (bad magic)");
  }
  Checkpoint c;
  c.version = static_cast<int>(r.get<std::uint32_t>());
  if (c.version != kCheckpointVersion) {
    throw CorruptionError("checkpoint " + path + " has version " + std::to_string(c.version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const auto header_len = r.get<std::uint64_t>();
  const std::string header = r.take(header_len);
  if (r.get<std::uint64_t>() != fnv1a(header)) throw CorruptionError("checkpoint " + path + ": header hash mismatch");
  try {
    const auto h = nlohmann::json::parse(header);
    c.stage = h.at("stage").get<std::string>();
    c.epoch = h.at("epoch").get<std::size_t>();
    c.step = h.at("step").get<std::uint64_t>();
    c.rng_state = h.at("rng").get<std::string>();
    c.extractor_seed = h.at("extractor_seed").get<std::uint64_t>();
    c.config = h.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError("checkpoint " + path + ": bad header: " + e.what());
  }
  const std::size_t payload_start = r.pos();
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    TensorBlob t;
    t.name = r.take(r.get<std::uint32_t>());
    const auto nd = r.get<std::uint32_t>();
    if (nd > 16) throw CorruptionError("checkpoint " + path + ": implausible rank for " + t.name);
    for (std::uint32_t k = 0; k < nd; ++k) t.shape.push_back(r.get<std::uint64_t>());
    const std::size_t n = shape_numel(t.shape);
    const std::string raw = r.take(n * sizeof(double));
    t.data.resize(n);
    std::memcpy(t.data.data(), raw.data(), raw.size());
    c.tensors.push_back(std::move(t));
  }
  const std::size_t payload_end = r.pos();
  const auto stored = r.get<std::uint64_t>();
  if (stored != fnv1a(std::string_view(bytes).substr(payload_start, payload_end - payload_start))) {
    throw CorruptionError("checkpoint " + path + ": payload hash mismatch");
  }
  if (!r.done()) throw CorruptionError("checkpoint " + path + ": trailing bytes");
  return c;
}

void capture(Checkpoint& ckpt, const std::string& prefix, const model::Module& module) {
  for (const auto& p : module.named_parameters()) {
    const auto d = p.tensor.data();
    ckpt.tensors.push_back({prefix + "." + p.name, p.tensor.shape(), std::vector<double>(d.begin(), d.end())});
  }
}

void restore(const Checkpoint& ckpt, const std::string& prefix, model::Module& module) {
  for (auto& p : module.named_parameters()) {
    const std::string name = prefix + "." + p.name;
    const TensorBlob* b = ckpt.find(name);
    if (!b) throw CorruptionError("checkpoint lacks parameter " + name);
    if (b->shape != p.tensor.shape()) {
      throw CorruptionError("checkpoint parameter " + name + " has shape " + shape_str(b->shape) + ", model expects " +
                            shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    std::copy(b->data.begin(), b->data.end(), dst.begin());
  }
}

std::string parameter_hash(const model::Module& module) {
  Fnv1a h;
  for (const auto& p : module.named_parameters()) {
    h.update(p.name);
    for (auto d : p.tensor.shape()) h.update(&d, sizeof(d));
    h.update(p.tensor.data());
  }
  return h.hex();
}

}  // namespace tap::train

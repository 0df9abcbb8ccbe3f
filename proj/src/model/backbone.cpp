#include "tap/model/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "tap/core/errors.hpp"
#include "tap/tensor/ops.hpp"

namespace tap::model {

void ModelConfig::validate() const {
  if (window == 0) throw ConfigError("model.window must be positive");
  if (mlp_ratio <= 0.0) throw ConfigError("model.mlp_ratio must be positive");
  for (std::size_t s = 0; s < kStages; ++s) {
    if (dims[s] == 0 || heads[s] == 0 || depths[s] == 0) {
      throw ConfigError("model stage " + std::to_string(s) + ": dims, heads and depths must be positive");
    }
    if (dims[s] % heads[s]) {
      throw ConfigError("model stage " + std::to_string(s) + ": embed dim " + std::to_string(dims[s]) +
                        " not divisible by heads " + std::to_string(heads[s]));
    }
  }
  if (dims[3] != dims[1] || dims[4] != dims[0]) {
    throw ConfigError("model.dims: decoder stages must mirror encoder widths for skip fusion");
  }
  for (auto s : decoder_attention_stages) {
    if (s != 3 && s != 4) throw ConfigError("model.decoder_attention_stages may only contain 3 and 4");
  }
}

void ModelConfig::check_input(std::size_t height, std::size_t width) const {
  const std::size_t unit = 4 * window;
  if (height == 0 || width == 0 || height % unit || width % unit) {
    throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                      " incompatible with window " + std::to_string(window) +
                      ": every stage resolution must be divisible by the window (multiple of " +
                      std::to_string(unit) + ")");
  }
}

bool ModelConfig::stage_has_attention(std::size_t stage) const {
  if (stage < 3) return true;
  return std::find(decoder_attention_stages.begin(), decoder_attention_stages.end(), stage) !=
         decoder_attention_stages.end();
}

WindowAttention::WindowAttention(std::size_t dim_, std::size_t heads_, std::size_t window_, Rng& rng)
    : dim(dim_), heads(heads_), window(window_), qkv(dim_, 3 * dim_, rng), proj(dim_, dim_, rng),
      rel_bias(window_, heads_, rng) {
  register_module("qkv", qkv);
  register_module("proj", proj);
  register_module("rel_bias", rel_bias);
}

namespace {

// Pads a [h, l, l] (or broadcastable) bias/mask to [.., m+l, m+l] with zero
// rows and columns for prepended hidden-state prompts.
Tensor pad_square(const Tensor& t, std::size_t m) {
  Shape rows = t.shape();
  rows[rows.size() - 2] = m;
  const Tensor r = concat({Tensor::zeros(rows), t}, -2);
  return prompt::pad_bias(r, m);
}

}  // namespace

Tensor WindowAttention::forward(const Tensor& x, std::size_t shift, const prompt::LayerPrompt* prompt,
                                AttentionProbe* probe) const {
  const auto& s = x.shape();
  if (s.size() != 4 || s[3] != dim) {
    throw ShapeError("attention expects [B,H,W," + std::to_string(dim) + "], got " + shape_str(s));
  }
  const std::size_t b = s[0], h = s[1], w = s[2];
  const std::size_t nw = (h / window) * (w / window), l = window * window, hd = dim / heads;
  const long sh = static_cast<long>(shift);

  Tensor shifted = shift ? roll(roll(x, 1, -sh), 2, -sh) : x;
  Tensor tokens = reshape(window_partition(shifted, window), {b, nw, l, dim});

  std::size_t m_hidden = 0;
  if (prompt && prompt->placement == prompt::Placement::Hidden && prompt->hidden.defined()) {
    const Tensor& p = prompt->hidden;
    if (p.dim() != 3 || p.size(0) != b || p.size(2) != dim) {
      throw ShapeError("hidden prompt " + shape_str(p.shape()) + " does not match batch/dim");
    }
    m_hidden = p.size(1);
    tokens = concat({broadcast_to(reshape(p, {b, 1, m_hidden, dim}), {b, nw, m_hidden, dim}), tokens}, 2);
  }
  const std::size_t t = l + m_hidden;

  const Tensor packed = permute(reshape(qkv.forward(tokens), {b, nw, t, 3, heads, hd}), {3, 0, 1, 4, 2, 5});
  auto parts = split(packed, {1, 1, 1}, 0);
  const Shape head_shape{b, nw, heads, t, hd};
  const Tensor q = reshape(parts[0], head_shape);
  const Tensor k = reshape(parts[1], head_shape);
  const Tensor v = reshape(parts[2], head_shape);

  Tensor bias = rel_bias.materialize();
  Tensor mask;
  if (shift) {
    mask = broadcast_to(reshape(shifted_window_mask(h, w, window, shift), {nw, 1, l, l}), {nw, heads, l, l});
  }
  if (m_hidden) {
    bias = pad_square(bias, m_hidden);
    if (mask.defined()) mask = pad_square(mask, m_hidden);
  }

  Tensor pk, pv;
  if (prompt && prompt->placement == prompt::Placement::KeyValue && prompt->key.defined()) {
    auto expand = [&](const Tensor& p) {
      if (p.dim() != 3 || p.size(0) != b || p.size(2) != dim) {
        throw ShapeError("key/value prompt " + shape_str(p.shape()) + " does not match batch/dim");
      }
      const std::size_t m = p.size(1);
      const Tensor per_head = permute(reshape(p, {b, m, heads, hd}), {0, 2, 1, 3});
      return broadcast_to(reshape(per_head, {b, 1, heads, m, hd}), {b, nw, heads, m, hd});
    };
    pk = expand(prompt->key);
    pv = expand(prompt->value);
  }

  Tensor* probs = probe ? &probe->probs : nullptr;
  Tensor out = prompt::prompted_attention(q, k, v, bias, pk, pv, mask.defined() ? &mask : nullptr, probs);
  if (probe) {
    probe->prompt_tokens = pk.defined() ? pk.size(-2) : m_hidden;
    probe->height = h;
    probe->width = w;
    probe->window = window;
    probe->shift = shift;
  }

  out = reshape(permute(out, {0, 1, 3, 2, 4}), {b, nw, t, dim});
  if (m_hidden) out = slice(out, 2, m_hidden, l);
  out = reshape(proj.forward(out), {b * nw, l, dim});
  Tensor image = window_reverse(out, window, b, h, w);
  return shift ? roll(roll(image, 1, sh), 2, sh) : image;
}

TransformerBlock::TransformerBlock(std::size_t dim, std::size_t heads, std::size_t window, std::size_t shift_,
                                   double mlp_ratio, bool use_attention_, Rng& rng)
    : shift(shift_), use_attention(use_attention_), norm1(dim), norm2(dim),
      mlp(dim, static_cast<std::size_t>(std::lround(static_cast<double>(dim) * mlp_ratio)), rng) {
  if (use_attention) {
    attn = std::make_unique<WindowAttention>(dim, heads, window, rng);
    register_module("norm1", norm1);
    register_module("attn", *attn);
  }
  register_module("norm2", norm2);
  register_module("mlp", mlp);
}

Tensor TransformerBlock::forward(const Tensor& x, const prompt::LayerPrompt* prompt, AttentionProbe* probe) const {
  Tensor y = x;
  if (use_attention) {
    // Shifting is pointless when one window covers the whole feature map.
    const std::size_t s = (x.size(1) > attn->window && x.size(2) > attn->window) ? shift : 0;
    const NormState st = norm1.normalize(y);
    y = norm1.reinject(add(st.normed, attn->forward(st.normed, s, prompt, probe)), st);
  }
  const NormState st = norm2.normalize(y);
  return norm2.reinject(add(st.normed, mlp.forward(st.normed)), st);
}

Tensor soft_reconstruct(const Tensor& head_output, const Tensor& lq) {
  const auto& so = head_output.shape();
  const auto& sl = lq.shape();
  if (so.size() != 4 || so.back() != 4 || sl.size() != 4 || sl.back() != 3 ||
      !std::equal(so.begin(), so.end() - 1, sl.begin())) {
    throw ShapeError("soft_reconstruct: O " + shape_str(so) + " vs X_lq " + shape_str(sl));
  }
  const Tensor k = slice(head_output, 3, 0, 1);
  const Tensor r = slice(head_output, 3, 1, 3);
  return add(add(mul(k, lq), r), lq);
}

RestorationModel::RestorationModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  const auto& d = config_.dims;
  embed_ = std::make_unique<Conv2d>(3, d[0], 3, 1, 1, rng);
  register_module("embed", *embed_);
  for (std::size_t s = 0; s < kStages; ++s) {
    const bool attn = config_.stage_has_attention(s);
    for (std::size_t j = 0; j < config_.depths[s]; ++j) {
      const std::size_t shift = (config_.shifted_windows && j % 2 == 1) ? config_.window / 2 : 0;
      blocks_[s].push_back(std::make_unique<TransformerBlock>(d[s], config_.heads[s], config_.window, shift,
                                                              config_.mlp_ratio, attn, rng));
      const std::string name = "stage" + std::to_string(s) + ".block" + std::to_string(j);
      register_module(name, *blocks_[s].back());
      if (attn) attention_layers_.push_back({name + ".attn", s, d[s], config_.heads[s]});
    }
    if (s == 0 || s == 1) {
      down_[s] = std::make_unique<Linear>(4 * d[s], d[s + 1], rng);
      register_module("down" + std::to_string(s), *down_[s]);
    }
  }
  up_[0] = std::make_unique<Linear>(d[2], 4 * d[3], rng);
  up_[1] = std::make_unique<Linear>(d[3], 4 * d[4], rng);
  fuse_[0] = std::make_unique<SkFusion>(d[3], rng);
  fuse_[1] = std::make_unique<SkFusion>(d[4], rng);
  head_ = std::make_unique<Conv2d>(d[4], 4, 3, 1, 1, rng);
  register_module("up0", *up_[0]);
  register_module("up1", *up_[1]);
  register_module("fuse0", *fuse_[0]);
  register_module("fuse1", *fuse_[1]);
  register_module("head", *head_);
}

Tensor RestorationModel::run_stage(std::size_t stage, Tensor x, std::size_t& layer_index,
                                   const ForwardOptions& options) const {
  for (const auto& block : blocks_[stage]) {
    const prompt::LayerPrompt* p = nullptr;
    AttentionProbe* probe = nullptr;
    if (block->use_attention) {
      if (options.prompts && !options.prompts->empty()) p = &(*options.prompts)[layer_index];
      if (options.probe && options.probe->layer == layer_index) probe = options.probe;
      ++layer_index;
    }
    x = block->forward(x, p, probe);
  }
  return x;
}

Tensor RestorationModel::forward(const Tensor& lq, const ForwardOptions& options) const {
  const auto& s = lq.shape();
  if (s.size() != 4 || s[3] != 3) throw ShapeError("model input must be [B,H,W,3], got " + shape_str(s));
  config_.check_input(s[1], s[2]);
  if (options.prompts && !options.prompts->empty() && options.prompts->size() != attention_layers_.size()) {
    throw ShapeError("prompt set has " + std::to_string(options.prompts->size()) + " layers, model has " +
                     std::to_string(attention_layers_.size()));
  }
  if (options.probe && options.probe->layer >= attention_layers_.size()) {
    throw ConfigError("attention probe layer " + std::to_string(options.probe->layer) + " out of range");
  }
  std::size_t layer = 0;
  const Tensor e0 = run_stage(0, embed_->forward(lq), layer, options);
  const Tensor e1 = run_stage(1, down_[0]->forward(space_to_depth(e0, 2)), layer, options);
  const Tensor mid = run_stage(2, down_[1]->forward(space_to_depth(e1, 2)), layer, options);
  if (options.bottleneck) *options.bottleneck = mid;
  Tensor u = depth_to_space(up_[0]->forward(mid), 2);
  u = run_stage(3, fuse_[0]->forward(e1, u), layer, options);
  u = depth_to_space(up_[1]->forward(u), 2);
  u = run_stage(4, fuse_[1]->forward(e0, u), layer, options);
  const Tensor o = head_->forward(u);
  if (options.head_output) *options.head_output = o;
  return soft_reconstruct(o, lq);
}

}  // namespace tap::model

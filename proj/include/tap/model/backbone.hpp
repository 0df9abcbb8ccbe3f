#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tap/model/layers.hpp"
#include "tap/model/module.hpp"
#include "tap/model/window.hpp"
#include "tap/prompt/prompted_attention.hpp"

namespace tap::model {

inline constexpr std::size_t kStages = 5;

// Stage order: encoder 0, encoder 1, bottleneck 2, decoder 3, decoder 4.
struct ModelConfig {
  std::array<std::size_t, kStages> dims{16, 32, 64, 32, 16};
  std::array<std::size_t, kStages> depths{2, 2, 2, 1, 1};
  std::array<std::size_t, kStages> heads{2, 4, 8, 4, 2};
  std::size_t window = 8;
  double mlp_ratio = 2.0;
  bool shifted_windows = true;
  // Decoder stages (3 and/or 4) that keep their attention sublayer.
  std::vector<std::size_t> decoder_attention_stages{3};
  std::uint64_t seed = 1;

  void validate() const;
  // Throws ConfigError unless an HxW input fits every stage's window grid.
  void check_input(std::size_t height, std::size_t width) const;
  bool stage_has_attention(std::size_t stage) const;
};

// Captures attention weights of one attention layer during a forward pass.
struct AttentionProbe {
  std::size_t layer = 0;
  Tensor probs;        // [B, nW, heads, l(+m), L]
  std::size_t prompt_tokens = 0;  // key positions occupied by prompts
  std::size_t height = 0, width = 0, window = 0, shift = 0;
};

struct ForwardOptions {
  const prompt::PromptSet* prompts = nullptr;
  AttentionProbe* probe = nullptr;
  Tensor* bottleneck = nullptr;  // receives the bottleneck stage output
  Tensor* head_output = nullptr; // receives O before reconstruction
};

// Windowed multi-head self-attention over [B,H,W,C] with optional cyclic
// shift and task prompts.
class WindowAttention : public Module {
 public:
  WindowAttention(std::size_t dim, std::size_t heads, std::size_t window, Rng& rng);

  Tensor forward(const Tensor& x, std::size_t shift, const prompt::LayerPrompt* prompt,
                 AttentionProbe* probe) const;

  std::size_t dim, heads, window;
  Linear qkv;
  Linear proj;
  RelPosBias rel_bias;
};

class TransformerBlock : public Module {
 public:
  TransformerBlock(std::size_t dim, std::size_t heads, std::size_t window, std::size_t shift, double mlp_ratio,
                   bool use_attention, Rng& rng);

  Tensor forward(const Tensor& x, const prompt::LayerPrompt* prompt, AttentionProbe* probe) const;

  std::size_t shift;
  bool use_attention;
  RescaleNorm norm1;
  std::unique_ptr<WindowAttention> attn;  // null when the sublayer is removed
  RescaleNorm norm2;
  Mlp mlp;
};

// X_hq = K o X_lq + R + X_lq with O split into K (1 channel, broadcast over
// RGB) and R (3 channels). No clamping.
Tensor soft_reconstruct(const Tensor& head_output, const Tensor& lq);

struct AttentionLayerInfo {
  std::string name;
  std::size_t stage;
  std::size_t dim;
  std::size_t heads;
};

// Five-stage windowed-attention U-Net predicting the 4-channel
// reconstruction map.
class RestorationModel : public Module {
 public:
  explicit RestorationModel(const ModelConfig& config);

  // lq: [B,H,W,3] -> restored [B,H,W,3] (unclamped).
  Tensor forward(const Tensor& lq, const ForwardOptions& options = {}) const;

  const ModelConfig& config() const { return config_; }
  const std::vector<AttentionLayerInfo>& attention_layers() const { return attention_layers_; }

 private:
  Tensor run_stage(std::size_t stage, Tensor x, std::size_t& layer_index, const ForwardOptions& options) const;

  ModelConfig config_;
  std::vector<AttentionLayerInfo> attention_layers_;
  std::unique_ptr<Conv2d> embed_;
  std::vector<std::unique_ptr<TransformerBlock>> blocks_[kStages];
  std::unique_ptr<Linear> down_[2];
  std::unique_ptr<Linear> up_[2];
  std::unique_ptr<SkFusion> fuse_[2];
  std::unique_ptr<Conv2d> head_;
};

}  // namespace tap::model

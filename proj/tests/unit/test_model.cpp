#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "tap/core/errors.hpp"
#include "tap/model/backbone.hpp"
#include "tap/model/layers.hpp"
#include "tap/model/window.hpp"
#include "tap/objectives/losses.hpp"
#include "tap/prompt/bank.hpp"
#include "tap/tensor/ops.hpp"

using namespace tap;
using namespace tap::model;
using tap::testing::rand_tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.dims = {4, 8, 8, 8, 4};
  c.depths = {1, 1, 2, 1, 1};
  c.heads = {1, 2, 2, 2, 1};
  c.window = 4;
  c.decoder_attention_stages = {3, 4};
  return c;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace

TEST(Window, PartitionRoundTripAndCounts) {
  const Tensor x = rand_tensor({1, 4, 4, 1}, 1);
  const Tensor w = window_partition(x, 2);
  EXPECT_EQ(w.shape(), (Shape{4, 4, 1}));
  EXPECT_EQ(window_reverse(w, 2, 1, 4, 4).to_vector(), x.to_vector());

  const Tensor y = rand_tensor({2, 8, 8, 3}, 2);
  const Tensor wy = window_partition(y, 4);
  EXPECT_EQ(wy.size(0), 2u * 64 / 16);
  EXPECT_EQ(window_reverse(wy, 4, 2, 8, 8).to_vector(), y.to_vector());
  EXPECT_THROW(window_partition(rand_tensor({1, 6, 6, 1}, 3), 4), ConfigError);
}

TEST(Window, ConstantImageGivesIdenticalWindows) {
  const Tensor w = window_partition(Tensor::full({1, 8, 8, 2}, 0.3), 4);
  for (double v : w.data()) EXPECT_EQ(v, 0.3);
}

TEST(Window, AttentionSingleTokenReturnsV) {
  const Tensor q = rand_tensor({3, 1, 2}, 1), k = rand_tensor({3, 1, 2}, 2), v = rand_tensor({3, 1, 2}, 3);
  const Tensor out = window_attention(q, k, v, rand_tensor({1, 1}, 4));
  for (std::size_t i = 0; i < v.numel(); ++i) EXPECT_NEAR(out.data()[i], v.data()[i], 1e-15);
}

TEST(Window, AttentionZeroQueryAveragesValues) {
  const Tensor v = rand_tensor({2, 5, 3}, 5);
  const Tensor out = window_attention(Tensor::zeros({2, 5, 3}), rand_tensor({2, 5, 3}, 6), v, Tensor::zeros({5, 5}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0;
      for (std::size_t j = 0; j < 5; ++j) m += v.at({b, j, c}) / 5.0;
      for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(out.at({b, i, c}), m, 1e-12);
    }
}

TEST(Window, AttentionMatchesScalarOracle) {
  const std::size_t l = 3, d = 2;
  const Tensor q = rand_tensor({1, l, d}, 7), k = rand_tensor({1, l, d}, 8), v = rand_tensor({1, l, d}, 9);
  const Tensor b = rand_tensor({l, l}, 10);
  const Tensor out = window_attention(q, k, v, b);
  for (std::size_t i = 0; i < l; ++i) {
    double logits[l], z = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += q.at({0, i, c}) * k.at({0, j, c});
      logits[j] = std::exp(s / std::sqrt(double(d)) + b.at({i, j}));
      z += logits[j];
    }
    for (std::size_t c = 0; c < d; ++c) {
      double o = 0.0;
      for (std::size_t j = 0; j < l; ++j) o += logits[j] / z * v.at({0, j, c});
      EXPECT_NEAR(out.at({0, i, c}), o, 1e-12);
    }
  }
}

TEST(Window, RelPosBiasIsOffsetConsistent) {
  Rng rng(3);
  RelPosBias rb(4, 2, rng);
  const Tensor b = rb.materialize();
  ASSERT_EQ(b.shape(), (Shape{2, 16, 16}));
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j)
        for (std::size_t i2 = 0; i2 < 16; ++i2)
          for (std::size_t j2 = 0; j2 < 16; ++j2) {
            const long dy = long(i / 4) - long(j / 4), dx = long(i % 4) - long(j % 4);
            const long dy2 = long(i2 / 4) - long(j2 / 4), dx2 = long(i2 % 4) - long(j2 % 4);
            if (dy == dy2 && dx == dx2) ASSERT_EQ(b.at({h, i, j}), b.at({h, i2, j2}));
          }
}

TEST(Window, ShiftMaskBlocksCrossRegionPairs) {
  const Tensor m = shifted_window_mask(8, 8, 4, 2);
  EXPECT_EQ(m.shape(), (Shape{4, 16, 16}));
  // the first window never needs masking
  for (std::size_t i = 0; i < 16 * 16; ++i) EXPECT_EQ(m.data()[i], 0.0);
  // in the last window token 0 and token 15 come from different regions
  EXPECT_EQ(m.at({3, 0, 15}), kMaskedLogit);
}

TEST(Layers, LinearParamCount) {
  Rng rng(1);
  Linear l(4, 4, rng);
  EXPECT_EQ(l.param_count(), 20u);
}

TEST(Layers, RescaleNormIdentityAtInit) {
  RescaleNorm n(6);
  const Tensor x = rand_tensor({2, 3, 6}, 11, -3, 3);
  const Tensor y = n.forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-9);
  const Tensor c = n.forward(Tensor::full({1, 6}, 2.5));
  for (double v : c.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Layers, SkFusionConvexCombination) {
  Rng rng(2);
  SkFusion f(8, rng);
  const Tensor a = rand_tensor({2, 4, 4, 8}, 12);
  const Tensor same = f.forward(a, a);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(same.data()[i], a.data()[i], 1e-12);

  const Tensor b = rand_tensor({2, 4, 4, 8}, 13);
  const Tensor w = f.branch_weights(a, b);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(w.at({n, 0, c}) + w.at({n, 1, c}), 1.0, 1e-9);

  // saturate the branch logits toward the skip input
  for (auto& v : f.expand.weight.mutable_data()) v = 0.0;
  auto bias = f.expand.bias.mutable_data();
  for (std::size_t c = 0; c < 8; ++c) bias[c] = 50.0, bias[8 + c] = -50.0;
  const Tensor out = f.forward(a, b);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_LT(std::abs(out.data()[i] - a.data()[i]), 1e-6);
  EXPECT_THROW(f.forward(a, rand_tensor({2, 4, 4, 4}, 1)), ShapeError);
}

TEST(SoftReconstruct, Examples) {
  const Tensor lq = rand_tensor({1, 4, 4, 3}, 14, 0, 1);
  EXPECT_TRUE(bitwise_equal(soft_reconstruct(Tensor::zeros({1, 4, 4, 4}), lq), lq));
  // K = 1, R = -lq
  std::vector<double> o(4 * 4 * 4);
  for (std::size_t p = 0; p < 16; ++p) {
    o[p * 4] = 1.0;
    for (std::size_t c = 0; c < 3; ++c) o[p * 4 + 1 + c] = -lq.data()[p * 3 + c];
  }
  const Tensor out = soft_reconstruct(Tensor::from({1, 4, 4, 4}, o), lq);
  for (std::size_t i = 0; i < lq.numel(); ++i) EXPECT_NEAR(out.data()[i], lq.data()[i], 1e-15);
  EXPECT_THROW(soft_reconstruct(Tensor::zeros({1, 4, 4, 3}), lq), ShapeError);
}

TEST(Model, OutputShapeMatchesInput) {
  RestorationModel m(ModelConfig{});
  NoGradGuard g;
  for (std::size_t s : {32u, 64u}) {
    const Tensor x = rand_tensor({1, s, s, 3}, s, 0, 1);
    EXPECT_EQ(m.forward(x).shape(), x.shape());
  }
  EXPECT_THROW(m.forward(rand_tensor({1, 24, 24, 3}, 1)), ConfigError);
}

TEST(Model, ZeroLengthPromptsAreBitwiseNoOp) {
  RestorationModel m(ModelConfig{});
  prompt::BankConfig bc;
  bc.length = 0;
  prompt::PromptBank bank(bc, m.attention_layers());
  NoGradGuard g;
  for (int i = 0; i < 3; ++i) {
    const Tensor x = rand_tensor({2, 32, 32, 3}, 100 + i, 0, 1);
    const auto set = bank.for_batch({0, 1});
    ForwardOptions opt;
    opt.prompts = &set;
    EXPECT_TRUE(bitwise_equal(m.forward(x), m.forward(x, opt)));
    // explicit per-layer entries without prompt tensors
    prompt::PromptSet empty(m.attention_layers().size());
    opt.prompts = &empty;
    EXPECT_TRUE(bitwise_equal(m.forward(x), m.forward(x, opt)));
  }
}

TEST(Model, DeterministicForward) {
  RestorationModel a(ModelConfig{}), b(ModelConfig{});
  NoGradGuard g;
  const Tensor x = rand_tensor({1, 32, 32, 3}, 5, 0, 1);
  EXPECT_TRUE(bitwise_equal(a.forward(x), b.forward(x)));
}

TEST(Model, DecoderAttentionRemovedWhereConfigured) {
  RestorationModel m(ModelConfig{});
  // stages 0..3 have attention (2 + 2 + 2 + 1 blocks); stage 4 does not
  EXPECT_EQ(m.attention_layers().size(), 7u);
  for (const auto& l : m.attention_layers()) EXPECT_NE(l.stage, 4u);
}

TEST(Model, EveryParameterReceivesGradient) {
  RestorationModel m(ModelConfig{});
  const Tensor x = rand_tensor({2, 32, 32, 3}, 21, 0, 1);
  const Tensor y = rand_tensor({2, 32, 32, 3}, 22, 0, 1);
  objectives::l1_loss(m.forward(x), y).backward();
  for (const auto& p : m.named_parameters()) {
    bool nonzero = false;
    if (p.tensor.has_grad())
      for (double g : p.tensor.grad()) nonzero = nonzero || g != 0.0;
    EXPECT_TRUE(nonzero) << p.name;
  }
}

TEST(Model, EndToEndGradientMatchesFiniteDifferences) {
  RestorationModel m(tiny_config());
  const Tensor x = rand_tensor({1, 16, 16, 3}, 31, 0, 1);
  const Tensor y = rand_tensor({1, 16, 16, 3}, 32, 0, 1);
  auto loss = [&] { return objectives::l1_loss(m.forward(x), y); };
  m.zero_grad();
  loss().backward();

  auto params = m.named_parameters();
  std::size_t total = 0;
  for (const auto& p : params) total += p.tensor.numel();
  const std::size_t samples = std::max<std::size_t>(total / 100, 20);
  Rng rng(77);
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    auto& p = params[rng.below(params.size())];
    const std::size_t k = rng.below(p.tensor.numel());
    const double analytic = p.tensor.has_grad() ? p.tensor.grad()[k] : 0.0;
    const double keep = p.tensor.data()[k];
    const double eps = 1e-5;
    NoGradGuard g;
    p.tensor.mutable_data()[k] = keep + eps;
    const double up = loss().item();
    p.tensor.mutable_data()[k] = keep - eps;
    const double down = loss().item();
    p.tensor.mutable_data()[k] = keep;
    const double num = (up - down) / (2 * eps);
    const double rel = std::abs(analytic - num) / std::max({std::abs(analytic), std::abs(num), 1e-6});
    worst = std::max(worst, rel);
    EXPECT_LT(rel, 1e-3) << p.name << "[" << k << "] analytic " << analytic << " numeric " << num;
  }
  RecordProperty("max_rel", std::to_string(worst));
}

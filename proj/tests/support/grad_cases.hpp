#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "tap/model/backbone.hpp"
#include "tap/model/layers.hpp"
#include "tap/model/window.hpp"
#include "tap/prompt/prompted_attention.hpp"
#include "tap/tensor/ops.hpp"

// Finite-difference cases covering every differentiable op and the composed
// layers built from them. Shared by the unit suite and the acceptance run.
namespace tap::testing {

using Ins = std::vector<Tensor>;

struct GradCase {
  std::string group;
  std::string name;
  std::function<Tensor(const Ins&)> f;
  Ins inputs;
};

inline std::vector<GradCase> grad_cases() {
  std::vector<GradCase> cs;
  auto add_case = [&cs](std::string g, std::string n, std::function<Tensor(const Ins&)> f, Ins in) {
    cs.push_back({std::move(g), std::move(n), std::move(f), std::move(in)});
  };

  // same shape, tiled operand, row operand, and a general broadcast
  const std::vector<std::pair<Shape, Shape>> shapes = {
      {{2, 3, 4}, {2, 3, 4}}, {{2, 3, 4}, {4}}, {{4}, {2, 3, 4}}, {{2, 3, 4}, {2, 3, 1}},
      {{2, 3, 1}, {2, 3, 4}}, {{2, 3, 1}, {4}},  {{2, 1, 4}, {3, 1}}};
  for (const auto& [sa, sb] : shapes) {
    const std::string tag = shape_str(sa) + shape_str(sb);
    add_case("binary", "add" + tag, [](const Ins& x) { return weighted_sum(add(x[0], x[1])); },
             {rand_tensor(sa, 1), rand_tensor(sb, 2)});
    add_case("binary", "sub" + tag, [](const Ins& x) { return weighted_sum(sub(x[0], x[1])); },
             {rand_tensor(sa, 3), rand_tensor(sb, 4)});
    add_case("binary", "mul" + tag, [](const Ins& x) { return weighted_sum(mul(x[0], x[1])); },
             {rand_tensor(sa, 5), rand_tensor(sb, 6)});
    add_case("binary", "div" + tag, [](const Ins& x) { return weighted_sum(div(x[0], x[1])); },
             {rand_tensor(sa, 7), rand_tensor(sb, 8, 0.5, 2.0)});
  }

  const Shape s{3, 5};
  add_case("unary", "add_scalar", [](const Ins& x) { return weighted_sum(add_scalar(x[0], 0.7)); }, {rand_tensor(s, 1)});
  add_case("unary", "mul_scalar", [](const Ins& x) { return weighted_sum(mul_scalar(x[0], -1.3)); },
           {rand_tensor(s, 2)});
  add_case("unary", "neg", [](const Ins& x) { return weighted_sum(neg(x[0])); }, {rand_tensor(s, 3)});
  add_case("unary", "exp", [](const Ins& x) { return weighted_sum(exp(x[0])); }, {rand_tensor(s, 4)});
  add_case("unary", "log", [](const Ins& x) { return weighted_sum(log(x[0])); }, {rand_tensor(s, 5, 0.2, 2.0)});
  add_case("unary", "sqrt", [](const Ins& x) { return weighted_sum(sqrt(x[0])); }, {rand_tensor(s, 6, 0.2, 2.0)});
  add_case("unary", "abs", [](const Ins& x) { return weighted_sum(abs(x[0])); }, {rand_away_from_zero(s, 7)});
  add_case("unary", "square", [](const Ins& x) { return weighted_sum(square(x[0])); }, {rand_tensor(s, 8)});
  add_case("unary", "relu", [](const Ins& x) { return weighted_sum(relu(x[0])); }, {rand_away_from_zero(s, 9)});
  add_case("unary", "gelu", [](const Ins& x) { return weighted_sum(gelu(x[0])); }, {rand_tensor(s, 10, -3, 3)});
  add_case("unary", "tanh", [](const Ins& x) { return weighted_sum(tanh(x[0])); }, {rand_tensor(s, 11, -2, 2)});
  // inputs away from the clamp edges
  Tensor c = rand_away_from_zero(s, 12, 0.1);
  for (auto& v : c.mutable_data()) v = v > 0 ? v * 0.4 : v * 2.0;
  add_case("unary", "clamp", [](const Ins& x) { return weighted_sum(clamp(x[0], -0.2, 0.5)); }, {c});

  const Shape r{2, 3, 4};
  add_case("reduce", "sum", [](const Ins& x) { return mul_scalar(sum(x[0]), 1.5); }, {rand_tensor(r, 1)});
  add_case("reduce", "mean", [](const Ins& x) { return mul_scalar(mean(x[0]), 2.5); }, {rand_tensor(r, 2)});
  for (int axis : {0, 1, 2, -1}) {
    const std::string a = std::to_string(axis);
    add_case("reduce", "sum_axis" + a, [axis](const Ins& x) { return weighted_sum(sum(x[0], axis, false)); },
             {rand_tensor(r, 3)});
    add_case("reduce", "mean_axis" + a, [axis](const Ins& x) { return weighted_sum(mean(x[0], axis, true)); },
             {rand_tensor(r, 4)});
    add_case("reduce", "variance_axis" + a,
             [axis](const Ins& x) { return weighted_sum(variance(x[0], axis, true)); }, {rand_tensor(r, 5)});
    add_case("reduce", "softmax_axis" + a, [axis](const Ins& x) { return weighted_sum(softmax(x[0], axis)); },
             {rand_tensor(r, 6, -2, 2)});
  }
  add_case("reduce", "l1_norm", [](const Ins& x) { return l1_norm(x[0]); }, {rand_away_from_zero(r, 7)});
  add_case("reduce", "l2_norm", [](const Ins& x) { return l2_norm(x[0]); }, {rand_tensor(r, 8)});
  add_case("reduce", "cosine_similarity", [](const Ins& x) { return cosine_similarity(x[0], x[1]); },
           {rand_tensor(r, 9), rand_tensor(r, 10)});

  add_case("linalg", "matmul_2d", [](const Ins& x) { return weighted_sum(matmul(x[0], x[1])); },
           {rand_tensor({3, 4}, 1), rand_tensor({4, 5}, 2)});
  add_case("linalg", "matmul_batched", [](const Ins& x) { return weighted_sum(matmul(x[0], x[1])); },
           {rand_tensor({2, 3, 4}, 3), rand_tensor({2, 4, 5}, 4)});
  add_case("linalg", "matmul_shared_rhs", [](const Ins& x) { return weighted_sum(matmul(x[0], x[1])); },
           {rand_tensor({2, 3, 4}, 5), rand_tensor({4, 2}, 6)});
  add_case("linalg", "linear", [](const Ins& x) { return weighted_sum(linear(x[0], x[1], x[2])); },
           {rand_tensor({2, 3, 4}, 7), rand_tensor({4, 5}, 8), rand_tensor({5}, 9)});
  add_case("linalg", "linear_nobias", [](const Ins& x) { return weighted_sum(linear(x[0], x[1], Tensor())); },
           {rand_tensor({6, 4}, 10), rand_tensor({4, 3}, 11)});
  for (std::size_t stride : {1, 2}) {
    add_case("linalg", "conv2d_stride" + std::to_string(stride),
             [stride](const Ins& x) { return weighted_sum(conv2d(x[0], x[1], stride, 1)); },
             {rand_tensor({2, 6, 6, 3}, 12), rand_tensor({3, 3, 3, 4}, 13)});
  }

  add_case("shape", "reshape", [](const Ins& x) { return weighted_sum(reshape(x[0], {6, 4})); }, {rand_tensor(r, 1)});
  add_case("shape", "permute", [](const Ins& x) { return weighted_sum(permute(x[0], {2, 0, 1})); },
           {rand_tensor(r, 2)});
  add_case("shape", "transpose", [](const Ins& x) { return weighted_sum(transpose(x[0], 0, 2)); }, {rand_tensor(r, 3)});
  add_case("shape", "broadcast_to", [](const Ins& x) { return weighted_sum(broadcast_to(x[0], {2, 3, 4})); },
           {rand_tensor({3, 1}, 4)});
  add_case("shape", "concat", [](const Ins& x) { return weighted_sum(concat({x[0], x[1]}, 1)); },
           {rand_tensor(r, 5), rand_tensor({2, 2, 4}, 6)});
  add_case(
      "shape", "split",
      [](const Ins& x) {
        auto parts = split(x[0], {1, 3}, 2);
        return add(weighted_sum(parts[0], 1), weighted_sum(parts[1], 2));
      },
      {rand_tensor(r, 7)});
  add_case("shape", "slice", [](const Ins& x) { return weighted_sum(slice(x[0], 1, 1, 2)); }, {rand_tensor(r, 8)});
  add_case("shape", "stack", [](const Ins& x) { return weighted_sum(stack({x[0], x[1]})); },
           {rand_tensor(r, 9), rand_tensor(r, 10)});
  add_case("shape", "gather_rows", [](const Ins& x) { return weighted_sum(gather_rows(x[0], {2, 0, 2, 1})); },
           {rand_tensor({3, 4}, 11)});
  add_case("shape", "roll_neg", [](const Ins& x) { return weighted_sum(roll(x[0], 1, -1)); }, {rand_tensor(r, 12)});
  add_case("shape", "roll_pos", [](const Ins& x) { return weighted_sum(roll(x[0], 2, 3)); }, {rand_tensor(r, 13)});
  add_case("shape", "space_to_depth", [](const Ins& x) { return weighted_sum(space_to_depth(x[0], 2)); },
           {rand_tensor({1, 4, 4, 3}, 14)});
  add_case("shape", "depth_to_space", [](const Ins& x) { return weighted_sum(depth_to_space(x[0], 2)); },
           {rand_tensor({1, 2, 2, 8}, 15)});

  add_case("fused", "standardize", [](const Ins& x) { return weighted_sum(standardize(x[0], 1e-6)); },
           {rand_tensor({3, 5}, 1)});
  add_case("fused", "affine_channel", [](const Ins& x) { return weighted_sum(affine(x[0], x[1], x[2])); },
           {rand_tensor({2, 3, 5}, 2), rand_tensor({5}, 3), rand_tensor({5}, 4)});
  add_case("fused", "affine_row", [](const Ins& x) { return weighted_sum(affine(x[0], x[1], x[2])); },
           {rand_tensor({2, 3, 5}, 5), rand_tensor({2, 3, 1}, 6), rand_tensor({2, 3, 1}, 7)});
  add_case("fused", "restore_stats",
           [](const Ins& x) { return weighted_sum(restore_stats(x[0], x[1], x[2], x[3], x[4], x[5], x[6])); },
           {rand_tensor({2, 3, 5}, 8), rand_tensor({2, 3, 1}, 9, 0.5, 1.5), rand_tensor({5}, 10),
            rand_tensor({5}, 11), rand_tensor({2, 3, 1}, 12), rand_tensor({5}, 13), rand_tensor({5}, 14)});
  // q [2,3,d], k/v [2,5,d]; bias tiles [3,5]
  add_case("fused", "attention_bias",
           [](const Ins& x) { return weighted_sum(attention(x[0], x[1], x[2], 0.5, x[3], Tensor())); },
           {rand_tensor({2, 3, 4}, 1), rand_tensor({2, 5, 4}, 2), rand_tensor({2, 5, 6}, 3),
            rand_tensor({3, 5}, 4)});
  Tensor mask = Tensor::zeros({3, 5});
  mask.mutable_data()[2] = -1e9;
  add_case("fused", "attention_mask",
           [mask](const Ins& x) { return weighted_sum(attention(x[0], x[1], x[2], 0.5, Tensor(), mask)); },
           {rand_tensor({2, 3, 4}, 5), rand_tensor({2, 5, 4}, 6), rand_tensor({2, 5, 4}, 7)});

  Rng rng(3);
  auto rb = std::make_shared<model::RelPosBias>(2, 2, rng);
  add_case(
      "window", "window_attention",
      [rb](const Ins& x) { return weighted_sum(model::window_attention(x[0], x[1], x[2], rb->materialize())); },
      {rand_tensor({2, 2, 4, 3}, 1), rand_tensor({2, 2, 4, 3}, 2), rand_tensor({2, 2, 4, 3}, 3)});
  add_case(
      "window", "relative_bias_table",
      [rb](const Ins& x) {
        rb->table = x[0];
        return weighted_sum(model::window_attention(rand_tensor({1, 2, 4, 3}, 5), rand_tensor({1, 2, 4, 3}, 6),
                                                    rand_tensor({1, 2, 4, 3}, 7), rb->materialize()));
      },
      {rand_tensor({9, 2}, 4)});
  add_case(
      "window", "partition_reverse",
      [](const Ins& x) { return weighted_sum(model::window_reverse(model::window_partition(x[0], 2), 2, 1, 4, 4)); },
      {rand_tensor({1, 4, 4, 2}, 8)});

  // q/k/v [B, heads, l, d]; shared prompts [m, d]
  const Tensor bias = rand_tensor({2, 4, 4}, 30);
  add_case(
      "prompted", "shared_prompts",
      [bias](const Ins& x) { return weighted_sum(prompt::prompted_attention(x[0], x[1], x[2], bias, x[3], x[4])); },
      {rand_tensor({2, 2, 4, 3}, 1), rand_tensor({2, 2, 4, 3}, 2), rand_tensor({2, 2, 4, 3}, 3),
       rand_tensor({3, 3}, 4), rand_tensor({3, 3}, 5)});
  add_case(
      "prompted", "expanded_prompts",
      [bias](const Ins& x) { return weighted_sum(prompt::prompted_attention(x[0], x[1], x[2], bias, x[3], x[4])); },
      {rand_tensor({2, 2, 4, 3}, 6), rand_tensor({2, 2, 4, 3}, 7), rand_tensor({2, 2, 4, 3}, 8),
       rand_tensor({2, 2, 3, 3}, 9), rand_tensor({2, 2, 3, 3}, 10)});
  // full shifted-window layer with per-image key/value prompts; inputs are
  // the features, the prompts and the projection weights
  auto wa = std::make_shared<model::WindowAttention>(4, 2, 2, rng);
  add_case(
      "prompted", "window_layer_keyvalue",
      [wa](const Ins& x) {
        wa->qkv.weight = x[3];
        wa->proj.weight = x[4];
        prompt::LayerPrompt p;
        p.placement = prompt::Placement::KeyValue;
        p.key = x[1];
        p.value = x[2];
        return weighted_sum(wa->forward(x[0], 1, &p, nullptr));
      },
      {rand_tensor({2, 4, 4, 4}, 11), rand_tensor({2, 3, 4}, 12), rand_tensor({2, 3, 4}, 13),
       rand_tensor({4, 12}, 14, -0.5, 0.5), rand_tensor({4, 4}, 15, -0.5, 0.5)});
  add_case(
      "prompted", "window_layer_hidden",
      [wa](const Ins& x) {
        prompt::LayerPrompt p;
        p.placement = prompt::Placement::Hidden;
        p.hidden = x[1];
        return weighted_sum(wa->forward(x[0], 1, &p, nullptr));
      },
      {rand_tensor({2, 4, 4, 4}, 16), rand_tensor({2, 3, 4}, 17)});

  auto norm = std::make_shared<model::RescaleNorm>(4);
  // move the norm away from its identity initialization
  for (Tensor* t : {&norm->gamma, &norm->beta, &norm->std_scale, &norm->std_shift, &norm->mean_scale,
                    &norm->mean_shift})
    for (auto& v : t->mutable_data()) v += rng.uniform(-0.3, 0.3);
  add_case("layers", "rescale_norm", [norm](const Ins& x) { return weighted_sum(norm->forward(x[0])); },
           {rand_tensor({2, 3, 4}, 1)});
  add_case(
      "layers", "rescale_norm_params",
      [norm](const Ins& x) {
        norm->gamma = x[1];
        norm->std_scale = x[2];
        norm->mean_shift = x[3];
        return weighted_sum(norm->forward(x[0]));
      },
      {rand_tensor({2, 3, 4}, 2), rand_tensor({4}, 3), rand_tensor({4}, 4), rand_tensor({4}, 5)});
  auto sk = std::make_shared<model::SkFusion>(8, rng, 4);
  add_case("layers", "sk_fusion", [sk](const Ins& x) { return weighted_sum(sk->forward(x[0], x[1])); },
           {rand_tensor({1, 2, 2, 8}, 6), rand_tensor({1, 2, 2, 8}, 7)});
  auto mlp = std::make_shared<model::Mlp>(4, 8, rng);
  add_case("layers", "mlp", [mlp](const Ins& x) { return weighted_sum(mlp->forward(x[0])); },
           {rand_tensor({3, 4}, 8)});
  return cs;
}

}  // namespace tap::testing

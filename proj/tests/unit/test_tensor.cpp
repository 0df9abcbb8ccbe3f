#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "tap/core/errors.hpp"
#include "tap/core/hash.hpp"
#include "tap/core/rng.hpp"
#include "tap/tensor/ops.hpp"

using namespace tap;
using tap::testing::rand_tensor;

TEST(Tensor, FactoriesAndAccess) {
  const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.size(-1), 3u);
  EXPECT_DOUBLE_EQ(t.at({1, 2}), 6.0);
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(t.item(), Error);
  EXPECT_DOUBLE_EQ(Tensor::scalar(2.5).item(), 2.5);
}

TEST(Tensor, BroadcastShapes) {
  EXPECT_EQ(broadcast_shapes({2, 1, 4}, {3, 1}), (Shape{2, 3, 4}));
  EXPECT_THROW(broadcast_shapes({2, 3}, {4}), ShapeError);
  const Tensor a = Tensor::from({2, 1}, {1, 2});
  const Tensor b = Tensor::from({3}, {10, 20, 30});
  const Tensor c = add(a, b);
  EXPECT_EQ(c.to_vector(), (std::vector<double>{11, 21, 31, 12, 22, 32}));
}

TEST(Tensor, MatmulMatchesScalarLoop) {
  const Tensor a = rand_tensor({3, 4}, 1), b = rand_tensor({4, 5}, 2);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 4; ++k) acc += a.at({i, k}) * b.at({k, j});
      EXPECT_NEAR(c.at({i, j}), acc, 1e-12);
    }
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Tensor, ReshapeSharesStorageAndCopiesOnWrite) {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor v = reshape(a, {4});
  EXPECT_EQ(v.data().data(), a.data().data());
  v.mutable_data()[0] = 9.0;
  EXPECT_DOUBLE_EQ(a.at({0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(v.at({0}), 9.0);
  EXPECT_THROW(reshape(a, {3}), ShapeError);
}

TEST(Tensor, BackwardRules) {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  const Tensor y = mul(x, x);
  EXPECT_THROW(y.backward(), UsageError);  // not a scalar
  const Tensor s = sum(y);
  s.backward();
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{2, 4, 6}));
  EXPECT_THROW(s.backward(), UsageError);  // tape already freed
  // a second graph accumulates into the same leaf
  sum(x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Tensor, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard g;
    y = sum(mul(x, x));
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_THROW(y.backward(), UsageError);
}

TEST(Tensor, DomainErrors) {
  EXPECT_THROW(log(Tensor::from({2}, {1.0, 0.0})), DomainError);
  EXPECT_THROW(sqrt(Tensor::from({1}, {-1.0})), DomainError);
  EXPECT_THROW(cosine_similarity(Tensor::zeros({3}), Tensor::ones({3})), DomainError);
}

TEST(Tensor, CheckFiniteFlagsNaN) {
  set_check_finite(true);
  const Tensor big = Tensor::from({1}, {1000.0});
  EXPECT_THROW(exp(big), NumericError);
  set_check_finite(false);
  EXPECT_TRUE(std::isinf(exp(big).item()));
}

TEST(Tensor, SoftmaxRowsSumToOne) {
  const Tensor p = softmax(rand_tensor({4, 7}, 3, -20, 20), -1);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) s += p.at({r, c});
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Tensor, FusedAttentionMatchesComposedOps) {
  const Tensor q = rand_tensor({2, 3, 4}, 1), k = rand_tensor({2, 5, 4}, 2), v = rand_tensor({2, 5, 6}, 3);
  const Tensor bias = rand_tensor({3, 5}, 4);
  Tensor probs;
  const Tensor fused = attention(q, k, v, 0.5, bias, Tensor(), &probs);
  const Tensor ref = matmul(softmax(add(mul_scalar(matmul(q, transpose(k, -1, -2)), 0.5), bias), -1), v);
  ASSERT_EQ(fused.shape(), ref.shape());
  for (std::size_t i = 0; i < fused.numel(); ++i) EXPECT_NEAR(fused.data()[i], ref.data()[i], 1e-12);
  EXPECT_EQ(probs.shape(), (Shape{2, 3, 5}));
  EXPECT_THROW(attention(q, k, v, 0.5, rand_tensor({4, 5}, 5), Tensor()), ShapeError);
}

TEST(Tensor, RollAndSpaceToDepthInvert) {
  const Tensor x = rand_tensor({1, 4, 4, 3}, 9);
  EXPECT_EQ(roll(roll(x, 1, 3), 1, -3).to_vector(), x.to_vector());
  EXPECT_EQ(depth_to_space(space_to_depth(x, 2), 2).to_vector(), x.to_vector());
}

TEST(Rng, DeterministicAndSerializable) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  const auto s = a.serialize();
  Rng c = Rng::deserialize(s);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), c.next_u64());
  EXPECT_NE(mix_seed(1, 2), mix_seed(1, 3));
  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
    EXPECT_LT(u.below(5), 5u);
  }
}

TEST(Hash, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a(""), 14695981039346656037ull);
  EXPECT_EQ(to_hex(fnv1a("a")), "af63dc4c8601ec8c");
}

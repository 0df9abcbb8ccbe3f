#include <gtest/gtest.h>

#include "grad_cases.hpp"

using tap::testing::GradCase;

namespace {

constexpr double kTol = 1e-4;

class Gradcheck : public ::testing::TestWithParam<std::string> {};

TEST_P(Gradcheck, MatchesCentralDifferences) {
  std::size_t n = 0;
  for (auto& c : tap::testing::grad_cases()) {
    if (c.group != GetParam()) continue;
    ++n;
    const auto r = tap::testing::gradcheck(c.f, c.inputs);
    EXPECT_LT(r.max_rel, kTol) << c.name << ": " << r.where;
  }
  EXPECT_GT(n, 0u);
}

INSTANTIATE_TEST_SUITE_P(Ops, Gradcheck,
                         ::testing::Values("binary", "unary", "reduce", "linalg", "shape", "fused", "window",
                                           "prompted", "layers"));

}  // namespace

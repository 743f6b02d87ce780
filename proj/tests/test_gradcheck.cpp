#include <gtest/gtest.h>

#include <algorithm>

#include "support/gradcheck.hpp"

using namespace stunet::testkit;

class GradCheck : public ::testing::TestWithParam<std::string> {};

TEST_P(GradCheck, CentralDifferences) {
  const auto& ops = differentiable_ops();
  Rng rng(100 + (std::find(ops.begin(), ops.end(), GetParam()) - ops.begin()));
  const auto cases = gradient_cases(GetParam(), 24, rng);
  ASSERT_GE(cases.size(), 20u);
  for (const auto& c : cases) {
    const GradReport r = check_gradients(c);
    EXPECT_LT(r.max_rel_error, 1e-3) << c.op << " " << c.shape << " input " << r.worst_input;
  }
}

INSTANTIATE_TEST_SUITE_P(Ops, GradCheck, ::testing::ValuesIn(differentiable_ops()),
                         [](const auto& info) { return info.param; });

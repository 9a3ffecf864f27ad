// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "dualfield/optim.hpp"

using namespace dualfield;

TEST(Schedule, StepsAtDecayPoints) {
  StepSchedule s;
  EXPECT_DOUBLE_EQ(s(0), 1.0);
  EXPECT_DOUBLE_EQ(s(9999), 1.0);
  EXPECT_DOUBLE_EQ(s(10000), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(s(14999), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(s(15000), 1.0 / 9.0);
  EXPECT_DOUBLE_EQ(s(19999), 1.0 / 9.0);
  EXPECT_THROW(s(-1), std::invalid_argument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ad::Parameter w("w", {1, 2}, ad::Group::mlp), g("g", {1, 1}, ad::Group::grid),
      p("p", {1, 1}, ad::Group::pose);
  w.grad = {0.3, -2.0};
  g.grad = {5.0};
  p.grad = {-1e-3};
  Adam adam({&w, &g, &p});
  adam.step(0);
  // Bias correction makes the first update lr * sign(grad).
  EXPECT_NEAR(w.value[0], -1e-3, 1e-10);
  EXPECT_NEAR(w.value[1], 1e-3, 1e-10);
  EXPECT_NEAR(g.value[0], -1e-2, 1e-10);
  EXPECT_NEAR(p.value[0], 1e-3, 1e-7);
  EXPECT_EQ(w.grad[0], 0.0);
  EXPECT_EQ(adam.slots()[0].step, 1);
}

TEST(Adam, MatchesReferenceRecurrence) {
  ad::Parameter x("x", {1, 1}, ad::Group::mlp);
  x.value = {1.0};
  AdamConfig cfg;
  Adam adam({&x}, cfg);
  double m = 0, v = 0, ref = 1.0;
  for (int t = 1; t <= 50; ++t) {
    const double grad = 2 * x.value[0] - 0.5;
    x.grad = {grad};
    adam.step(t - 1);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    ref -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    ASSERT_NEAR(x.value[0], ref, 1e-14);
  }
}

TEST(Adam, ScheduleScalesStep) {
  ad::Parameter a("a", {1, 1}, ad::Group::grid), b("b", {1, 1}, ad::Group::grid);
  a.grad = {1.0};
  b.grad = {1.0};
  Adam early({&a}), late({&b});
  early.step(0);
  late.step(15000);
  EXPECT_NEAR(b.value[0] / a.value[0], 1.0 / 9.0, 1e-9);
}

TEST(Adam, NonFiniteGradientSkipsParameter) {
  ad::Parameter a("a", {1, 2}, ad::Group::mlp), b("b", {1, 1}, ad::Group::mlp);
  a.grad = {1.0, std::numeric_limits<double>::quiet_NaN()};
  b.grad = {1.0};
  Adam adam({&a, &b});
  adam.step(0);
  EXPECT_EQ(a.value[0], 0.0);
  EXPECT_EQ(a.grad[1], 0.0);
  EXPECT_NE(b.value[0], 0.0);
  EXPECT_EQ(adam.skipped(), 1u);
}

TEST(Adam, RejectsInvertedSchedule) {
  ad::Parameter a("a", {1, 1}, ad::Group::mlp);
  EXPECT_THROW(Adam({&a}, AdamConfig{}, StepSchedule{10, 5, 0.5}), std::invalid_argument);
}

// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dualfield/losses.hpp"

using namespace dualfield;

namespace {

DualField small_field() {
  Box box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  return DualField(box, DenseGridConfig{{0.5, 0.25}, 4, 0.3}, HashGridConfig{4, 2, 4, 32, 10, 1e-4},
                   FieldConfig{}, 5);
}

}  // namespace

TEST(Losses, SelfSupervisedStopsDensityGradient) {
  ad::Tape tape;
  auto a = tape.variable({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  auto b = tape.variable({2, 3}, {0.0, 0.4, 0.3, 0.1, 0.9, 0.2});
  auto l = loss_self_supervised(a, b);
  EXPECT_NEAR(l.item(), (0.1 + 0.2 + 0.0 + 0.3 + 0.4 + 0.4) / 6.0, 1e-15);
  tape.backward(l);
  for (double g : tape.grad(b)) EXPECT_EQ(g, 0.0);
  EXPECT_NEAR(tape.grad(a)[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(tape.grad(a)[1], -1.0 / 6.0, 1e-15);
}

TEST(Losses, DepthIsMaskedMean) {
  ad::Tape tape;
  auto d = tape.variable({3, 1}, {1.0, 2.0, 3.0});
  const std::vector<double> gt{1.5, 0.0, 2.0};
  const std::vector<std::uint8_t> valid{1, 0, 1};
  EXPECT_NEAR(loss_depth(d, gt, valid).item(), 0.75, 1e-15);
  const std::vector<std::uint8_t> none{0, 0, 0};
  EXPECT_EQ(loss_depth(d, gt, none).item(), 0.0);
  EXPECT_THROW(loss_depth(d, std::vector<double>{1.0}, valid), ad::ShapeError);
}

TEST(Losses, SigmaCombinesColorAndAlignment) {
  ad::Tape tape;
  LossWeights w;
  auto c = tape.variable({1, 3}, {0.5, 0.5, 0.5});
  auto d = tape.variable({1, 1}, {2.0});
  const std::vector<double> cgt{0.4, 0.6, 0.5}, dgt{2.5};
  const std::vector<std::uint8_t> valid{1};
  const double expect = 50.0 * (0.2 / 3.0) + 1.0 * 0.5;
  EXPECT_NEAR(loss_sigma(c, cgt, d, dgt, valid, w).item(), expect, 1e-12);
  w.lambda_align = 0;
  EXPECT_NEAR(loss_sigma(c, cgt, d, dgt, valid, w).item(), 50.0 * (0.2 / 3.0), 1e-12);
}

TEST(Losses, GradientAxesMatchFiniteDifferences) {
  auto field = small_field();
  ad::Tape tape;
  const std::vector<Vec3> pts{Vec3(0.1, -0.2, 0.3), Vec3(-0.6, 0.55, 0.05)};
  auto x = tape.constant({2, 3}, {0.1, -0.2, 0.3, -0.6, 0.55, 0.05});
  const double eps = 0.005;
  const auto g = sdf_gradient(field, tape, x, eps, false).values();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      Vec3 up = pts[i], down = pts[i];
      up[a] += eps;
      down[a] -= eps;
      const std::vector<Vec3> pair{up, down};
      const auto phi = field.sdf_values(pair);
      EXPECT_NEAR(g[i * 3 + a], (phi[0] - phi[1]) / (2 * eps), 1e-12);
    }
}

TEST(Losses, RegularizersMatchManualTerms) {
  auto field = small_field();
  ad::Tape tape;
  std::vector<Ray> rays{Ray{Vec3(0, 0, -0.9), Vec3(0, 0, 1), 0.05, 1.85},
                        Ray{Vec3(0.2, 0.1, -0.9), Vec3(0, 0.6, 0.8), 0.05, 1.2}};
  SamplingConfig sampling{24, 1, 8, 0.05};
  auto bundle = render_rays(field, tape, make_render_inputs(tape, rays), sampling, {}, true);
  LossWeights w;
  w.truncation = 0.2;
  const std::vector<double> depth{0.9, 0.7};
  const std::vector<std::uint8_t> valid{1, 1};
  Rng rng(1);
  const auto reg = loss_sdf_regularizers(field, tape, bundle, depth, valid, w, rng, true);

  const auto phi = bundle.sdf.values();
  double band = 0, fs = 0;
  int nb = 0, nf = 0;
  const double a = w.free_space_exponent();
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < bundle.samples_per_ray; ++i) {
      const std::size_t k = r * bundle.samples_per_ray + i;
      const double b = truncation_target(depth[r], bundle.z[k]);
      if (std::abs(b) <= w.truncation) {
        band += std::abs(phi[k] - b);
        ++nb;
      } else if (b > w.truncation) {
        fs += std::max({0.0, std::exp(-a * phi[k]) - 1.0, phi[k] - b});
        ++nf;
      }
    }
  ASSERT_GT(nb, 0);
  ASSERT_GT(nf, 0);
  EXPECT_NEAR(reg.sdf.item(), band / nb, 1e-12);
  EXPECT_NEAR(reg.free_space.item(), fs / nf, 1e-12);
  EXPECT_GE(reg.eikonal.item(), 0.0);
  EXPECT_GE(reg.smooth.item(), 0.0);
  const double total = w.lambda_eik * reg.eikonal.item() + w.lambda_smooth * reg.smooth.item() +
                       w.lambda_sdf * reg.sdf.item() + w.lambda_fs * reg.free_space.item();
  EXPECT_NEAR(reg.total.item(), total, 1e-12);

  // Invalid depth removes the band and free-space rows.
  const std::vector<std::uint8_t> none{0, 0};
  Rng rng2(1);
  const auto reg0 = loss_sdf_regularizers(field, tape, bundle, depth, none, w, rng2, true);
  EXPECT_EQ(reg0.sdf.item(), 0.0);
  EXPECT_EQ(reg0.free_space.item(), 0.0);
}

TEST(Losses, TotalComposition) {
  ad::Tape tape;
  LossWeights w;
  LossParts p{tape.constant(0.1), tape.constant(0.2), tape.constant(0.3), tape.constant(0.4)};
  EXPECT_NEAR(total_loss(p, w).item(), 5 * 0.1 + 1 * 0.2 + 0.3 + 0.4, 1e-15);
  p.sigma = ad::Tensor();
  EXPECT_THROW(total_loss(p, w), std::invalid_argument);
}

TEST(Losses, WeightValidation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.lambda_sdf = -1;
  EXPECT_THROW(w.validate(), std::invalid_argument);
  LossWeights t;
  t.truncation = 0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  EXPECT_DOUBLE_EQ(LossWeights{}.free_space_exponent(), 40.0);
}

// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dualfield/metrics.hpp"

using namespace dualfield;

namespace {

Image textured(int w, int h, std::uint64_t seed) {
  Image img(w, h, 3);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  for (double& v : img.data) v = u(rng);
  return img;
}

TriangleMesh square(double z, double size = 1.0) {
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, z), Vec3(size, 0, z), Vec3(size, size, z), Vec3(0, size, z)};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

}  // namespace

TEST(Psnr, KnownValues) {
  Image a(8, 8, 3, 0.5), b(8, 8, 3, 0.6);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_THROW(psnr(a, Image(4, 4, 3)), std::invalid_argument);
}

TEST(Ssim, Properties) {
  const Image a = textured(32, 32, 1), b = textured(32, 32, 2);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_LT(ssim(a, Image(32, 32, 3, 0.5)), 0.2);
  EXPECT_THROW(ssim(Image(8, 8, 3), Image(8, 8, 3)), std::invalid_argument);
}

TEST(KdTree, MatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> pts(500);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  pts[10] = pts[400];  // duplicate: ties go to the lower index
  const KdTree tree(pts);
  for (int q = 0; q < 1000; ++q) {
    const Vec3 x = q == 0 ? pts[400] : Vec3(1.5 * u(rng), 1.5 * u(rng), 1.5 * u(rng));
    const auto a = tree.nearest(x);
    const auto b = brute_force_nearest(pts, x);
    ASSERT_EQ(a.first, b.first);
    ASSERT_EQ(a.second, b.second);
  }
  EXPECT_EQ(tree.nearest(pts[400]).first, 10u);
  EXPECT_THROW(KdTree(std::vector<Vec3>{}).nearest(Vec3::Zero()), std::logic_error);
}

TEST(SurfaceSampling, UniformAndOnSurface) {
  const auto s = sample_surface(square(0.2), 20000, 4);
  ASSERT_EQ(s.points.size(), 20000u);
  int left = 0;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    EXPECT_NEAR(s.points[i].z(), 0.2, 1e-12);
    EXPECT_NEAR(std::abs(s.normals[i].z()), 1.0, 1e-12);
    left += s.points[i].x() < 0.5;
  }
  EXPECT_NEAR(left / 20000.0, 0.5, 0.02);
}

TEST(GeometryMetrics, IdenticalMeshes) {
  const auto m = square(0.0);
  const auto r = geometry_metrics(m, m, 5000, 0.05, 1);
  EXPECT_LT(r.chamfer_l1, 0.01);
  EXPECT_DOUBLE_EQ(r.fscore, 1.0);
  EXPECT_NEAR(r.nc, 1.0, 1e-12);
}

TEST(GeometryMetrics, OffsetPlane) {
  const auto r = geometry_metrics(square(0.01), square(0.0), 5000, 0.05, 2);
  EXPECT_NEAR(r.acc, 0.01, 1e-12);
  EXPECT_NEAR(r.comp, 0.01, 1e-12);
  EXPECT_NEAR(r.chamfer_l1, 0.01, 1e-12);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  const auto tight = geometry_metrics(square(0.01), square(0.0), 5000, 0.005, 2);
  EXPECT_DOUBLE_EQ(tight.fscore, 0.0);
}

TEST(GeometryMetrics, SwapExchangesAccuracyAndCompleteness) {
  const auto small = square(0.0, 0.5), big = square(0.0, 1.0);
  const auto a = geometry_metrics(small, big, 4000, 0.05, 7);
  const auto b = geometry_metrics(big, small, 4000, 0.05, 7);
  EXPECT_LT(a.acc, 0.02);
  EXPECT_GT(a.comp, 0.1);
  EXPECT_NEAR(a.acc, b.comp, 1e-12);
  EXPECT_NEAR(a.comp, b.acc, 1e-12);
  EXPECT_NEAR(a.precision, b.recall, 1e-12);
  EXPECT_NEAR(a.recall, b.precision, 1e-12);
  EXPECT_NEAR(a.chamfer_l1, b.chamfer_l1, 1e-12);
}

TEST(GeometryMetrics, EmptyPrediction) {
  const auto r = geometry_metrics(TriangleMesh{}, square(0.0), 1000);
  EXPECT_TRUE(std::isinf(r.chamfer_l1));
  EXPECT_EQ(r.fscore, 0.0);
  EXPECT_EQ(format_metric(r.chamfer_l1), "inf");
}

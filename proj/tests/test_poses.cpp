// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dualfield/poses.hpp"

using namespace dualfield;

namespace {

Mat4 random_pose(std::mt19937_64& rng, double rot = 3.0, double trans = 2.0) {
  std::uniform_real_distribution<double> r(-rot, rot), t(-trans, trans);
  PoseParam p;
  p.euler = Vec3(r(rng), 0.45 * r(rng), r(rng));
  p.translation = Vec3(t(rng), t(rng), t(rng));
  return p.to_matrix();
}

double max_abs(const Mat4& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Poses, EulerConvention) {
  const double a = 0.3, b = -0.2, c = 0.7;
  const Mat3 expect = (Eigen::AngleAxisd(c, Vec3::UnitZ()) * Eigen::AngleAxisd(b, Vec3::UnitY()) *
                       Eigen::AngleAxisd(a, Vec3::UnitX()))
                          .toRotationMatrix();
  EXPECT_LT((euler_to_rotation(Vec3(a, b, c)) - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Poses, MatrixRoundTrip) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Mat4 m = random_pose(rng);
    EXPECT_LT(max_abs(PoseParam::from_matrix(m).to_matrix() - m), 1e-12);
  }
}

TEST(Poses, RotationJacobianMatchesFiniteDifferences) {
  const Vec3 e(0.4, -0.3, 1.1);
  const auto jac = euler_rotation_jacobian(e);
  const double h = 1e-6;
  for (int k = 0; k < 3; ++k) {
    Vec3 up = e, down = e;
    up[k] += h;
    down[k] -= h;
    const Mat3 fd = (euler_to_rotation(up) - euler_to_rotation(down)) / (2 * h);
    EXPECT_LT((fd - jac[k]).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Poses, PfaIdentityWhenUnoptimized) {
  std::mt19937_64 rng(2);
  const Mat4 test = random_pose(rng), adj = random_pose(rng);
  EXPECT_LT(max_abs(pfa_calibrate(test, adj, adj) - test), 1e-12);
}

TEST(Poses, PfaRecoversGlobalDrift) {
  std::mt19937_64 rng(3);
  const Mat4 g = random_pose(rng, 0.5, 0.5);
  const Mat4 test = random_pose(rng), adj = random_pose(rng);
  EXPECT_LT(max_abs(pfa_calibrate(test, adj, g * adj) - g * test), 1e-12);
}

TEST(Poses, PfaRejectsNonRigid) {
  Mat4 bad = Mat4::Identity();
  bad(0, 0) = 2;
  EXPECT_THROW(pfa_calibrate(bad, Mat4::Identity(), Mat4::Identity()), std::invalid_argument);
}

TEST(Poses, InterpolationMidpoint) {
  PoseParam a, b;
  a.euler = Vec3(0, 0, 0.2);
  b.euler = Vec3(0, 0, 0.6);
  a.translation = Vec3(0, 0, 0);
  b.translation = Vec3(2, 0, 0);
  const Mat4 mid = interpolate_pose(a.to_matrix(), b.to_matrix());
  PoseParam expect;
  expect.euler = Vec3(0, 0, 0.4);
  expect.translation = Vec3(1, 0, 0);
  EXPECT_LT(max_abs(mid - expect.to_matrix()), 1e-12);
}

TEST(Poses, AdjacentFrame) {
  const std::vector<int> train{0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 11};
  EXPECT_EQ(adjacent_frame(9, train), 10);
  EXPECT_EQ(adjacent_frame(12, train), 11);
  EXPECT_EQ(adjacent_frame(3, train), 3);
  EXPECT_THROW(adjacent_frame(1, std::vector<int>{}), std::invalid_argument);
}

TEST(Poses, RigidInverse) {
  std::mt19937_64 rng(4);
  const Mat4 m = random_pose(rng);
  EXPECT_LT(max_abs(rigid_inverse(m) * m - Mat4::Identity()), 1e-12);
}

TEST(PoseTable, StoresAndRecovers) {
  std::mt19937_64 rng(5);
  std::vector<Mat4> poses{random_pose(rng), random_pose(rng)};
  PoseTable table(poses);
  EXPECT_EQ(table.size(), 2u);
  EXPECT_LT(max_abs(table.matrix(1) - poses[1]), 1e-12);
  EXPECT_EQ(table.parameter().group(), ad::Group::pose);
  EXPECT_THROW(table.pose(2), std::out_of_range);
}

TEST(PoseRays, MatchRigidTransform) {
  std::mt19937_64 rng(6);
  std::vector<Mat4> poses{random_pose(rng), random_pose(rng)};
  PoseTable table(poses);
  ad::Tape tape;
  auto t = tape.parameter(table.parameter());
  const std::vector<std::uint32_t> frame_of{1, 0};
  const std::vector<Vec3> dirs{Vec3(0.1, -0.2, 1.0), Vec3(0, 0, 1)};
  const auto rays = pose_rays(t, frame_of, dirs);
  for (std::size_t i = 0; i < 2; ++i) {
    const Mat4& m = poses[frame_of[i]];
    const Vec3 d = (m.topLeftCorner<3, 3>() * dirs[i]).normalized();
    for (int a = 0; a < 3; ++a) {
      EXPECT_NEAR(rays.origins.values()[i * 3 + a], m(a, 3), 1e-12);
      EXPECT_NEAR(rays.directions.values()[i * 3 + a], d[a], 1e-12);
    }
  }
}

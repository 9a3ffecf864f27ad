// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dualfield/data.hpp"
#include "dualfield/metrics.hpp"

using namespace dualfield;
namespace fs = std::filesystem;

namespace {

SceneSpec tiny_scene(bool specular = false) {
  SceneSpec s = default_scene(specular);
  s.width = 24;
  s.height = 20;
  return s;
}

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dualfield_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Scene, WallDepthAtImageCenter) {
  SceneSpec s = default_scene();
  s.primitives.clear();
  const Vec3 eye(-0.5, 0.0, 1.25);
  const Mat4 pose = look_at(eye, Vec3(1.5, 0.0, 1.25));
  const Camera cam{32, 32, 16, 16, 32, 32};
  const Vec3 dc = cam.pixel_direction(16, 16);
  const Vec3 dir = (pose.topLeftCorner<3, 3>() * dc).normalized();
  const auto t = sphere_trace(s, eye, dir);
  ASSERT_TRUE(t);
  EXPECT_NEAR(*t / dc.norm(), 2.0, 1e-9);
  EXPECT_FALSE(sphere_trace(s, eye, dir, 1.0));
}

TEST(Scene, LookAtIsRigidAndFacesTarget) {
  const Mat4 m = look_at(Vec3(0.2, -0.3, 1.0), Vec3(1.0, 0.5, 0.4));
  EXPECT_NO_THROW(validate_rigid(m));
  const Vec3 fwd = m.block<3, 1>(0, 2);
  EXPECT_NEAR(fwd.dot((Vec3(0.8, 0.8, -0.6)).normalized()), 1.0, 1e-12);
  // Image rows grow downward in the world.
  EXPECT_LT(m(2, 1), 0.0);
}

TEST(Scene, LabelsAndValidation) {
  SceneSpec s = default_scene(true);
  const auto& ball = s.primitives[0];
  EXPECT_EQ(s.closest_label(ball.center + Vec3(ball.size[0], 0, 0)), 1);
  EXPECT_EQ(s.closest_label(Vec3(1.44, 0.1, 1.25)), 4);
  EXPECT_EQ(s.closest_label(Vec3(0.0, 1.49, 2.0)), 0);
  EXPECT_LT(s.sdf(ball.center), 0.0);
  EXPECT_LT(s.sdf(Vec3(0, 0, -1)), 0.0);
  EXPECT_NO_THROW(s.validate());
  s.lights[0].position = Vec3(10, 0, 0);
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Scene, SpecTextRoundTrip) {
  const SceneSpec s = default_scene(true);
  const SceneSpec back = parse_scene_spec(s.to_text());
  EXPECT_EQ(back.to_text(), s.to_text());
  EXPECT_EQ(back.primitives.size(), 4u);
  EXPECT_THROW(parse_scene_spec("bogus x=1"), std::invalid_argument);
}

TEST(Generate, DepthLiesOnSurfaces) {
  const SceneSpec s = tiny_scene(true);
  const auto g = generate_scene(s, 4, 3, false);
  ASSERT_EQ(g.frames.frames.size(), 4u);
  int valid = 0;
  for (const auto& f : g.frames.frames)
    for (int v = 0; v < f.camera.height; ++v)
      for (int u = 0; u < f.camera.width; ++u) {
        const double d = f.depth.at(u, v, 0);
        if (d <= 0) continue;
        ++valid;
        const Vec3 pc = d * f.camera.pixel_direction(u, v);
        const Vec3 pw = (f.true_pose * pc.homogeneous()).head<3>();
        ASSERT_LT(std::abs(s.sdf(pw)), 1e-4);
        for (int c = 0; c < 3; ++c) {
          ASSERT_GE(f.rgb.at(u, v, c), 0.0);
          ASSERT_LE(f.rgb.at(u, v, c), 1.0);
        }
      }
  EXPECT_EQ(valid, 4 * 24 * 20);
}

TEST(Generate, Deterministic) {
  SceneSpec s = tiny_scene();
  s.depth_noise = 0.01;
  s.pose_noise_rot = 0.01;
  const auto a = generate_scene(s, 3, 11, false), b = generate_scene(s, 3, 11, false);
  const auto c = generate_scene(s, 3, 12, false);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.frames.frames[i].rgb.data, b.frames.frames[i].rgb.data);
    EXPECT_EQ(a.frames.frames[i].depth.data, b.frames.frames[i].depth.data);
    EXPECT_EQ(a.frames.frames[i].pose, b.frames.frames[i].pose);
  }
  EXPECT_NE(a.frames.frames[1].depth.data, c.frames.frames[1].depth.data);
  EXPECT_NE(a.frames.frames[1].pose, a.frames.frames[1].true_pose);
  EXPECT_THROW(generate_scene(s, 1, 0, false), std::invalid_argument);
}

TEST(Generate, GroundTruthMeshMatchesScene) {
  const SceneSpec s = tiny_scene();
  const auto g = generate_scene(s, 2, 0, true);
  ASSERT_FALSE(g.gt_mesh.empty());
  EXPECT_TRUE(g.gt_mesh.watertight());
  const auto samples = sample_surface(g.gt_mesh, 5000, 1);
  double worst = 0;
  for (const Vec3& p : samples.points) worst = std::max(worst, std::abs(s.sdf(p)));
  // Chords across sharp box edges stay within one voxel.
  EXPECT_LT(worst, s.mesh_voxel);
}

TEST(Split, EveryTenthFrameValidates) {
  const auto s = split_frames(100);
  ASSERT_EQ(s.validation.size(), 10u);
  EXPECT_EQ(s.train.size(), 90u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(s.validation[i], static_cast<int>(10 * i + 9));
  const auto small = split_frames(9);
  EXPECT_TRUE(small.validation.empty());
  EXPECT_EQ(small.train.size(), 9u);
  EXPECT_EQ(split_frames(10).validation, std::vector<int>{9});
}

TEST(Dataset, RoundTripWithinQuantization) {
  SceneSpec s = tiny_scene();
  s.pose_noise_trans = 0.02;
  const auto g = generate_scene(s, 3, 5, false);
  const auto dir = scratch_dir("dataset_roundtrip");
  write_dataset(g.frames, dir.string());
  const auto back = load_dataset(dir.string());
  ASSERT_EQ(back.frames.size(), 3u);
  EXPECT_EQ(back.camera.width, 24);
  EXPECT_DOUBLE_EQ(back.camera.fx, g.frames.camera.fx);
  EXPECT_EQ(back.bounds.min, g.frames.bounds.min);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& a = g.frames.frames[i];
    const auto& b = back.frames[i];
    EXPECT_EQ(b.pose, a.pose);
    EXPECT_EQ(b.true_pose, a.true_pose);
    for (std::size_t k = 0; k < a.rgb.data.size(); ++k)
      ASSERT_LE(std::abs(a.rgb.data[k] - b.rgb.data[k]), 0.5 / 255 + 1e-12);
    for (std::size_t k = 0; k < a.depth.data.size(); ++k)
      ASSERT_LE(std::abs(a.depth.data[k] - b.depth.data[k]), 0.5e-3 + 1e-12);
  }
  fs::remove(dir / "pose" / "00001.txt");
  try {
    load_dataset(dir.string());
    FAIL() << "expected a missing pose error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("missing pose"), std::string::npos);
  }
  fs::remove_all(dir);
  EXPECT_THROW(load_dataset(dir.string()), std::runtime_error);
}

TEST(Dataset, PoseFileRejectsNonRigid) {
  const auto dir = scratch_dir("pose_file");
  fs::create_directories(dir);
  Mat4 m = Mat4::Identity();
  m(0, 0) = 3;
  write_pose_file((dir / "p.txt").string(), m);
  EXPECT_THROW(read_pose_file((dir / "p.txt").string()), std::invalid_argument);
  fs::remove_all(dir);
}

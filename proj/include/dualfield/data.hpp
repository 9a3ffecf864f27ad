// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dualfield/geometry.hpp"
#include "dualfield/image_io.hpp"
#include "dualfield/meshing.hpp"
#include "dualfield/renderer.hpp"

namespace dualfield {

enum class TextureKind { flat, checker, stripes };

struct Texture {
  TextureKind kind = TextureKind::flat;
  Vec3 color = Vec3(0.7, 0.7, 0.7);
  Vec3 color2 = Vec3(0.3, 0.3, 0.3);
  double period = 0.25;  // meters
  int axis = 0;          // stripes vary along this world axis

  Vec3 albedo(const Vec3& p) const;
};

enum class PrimitiveKind { sphere, box };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::sphere;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3(0.3, 0.3, 0.3);  // sphere: size[0] is the radius; box: full extents
  Texture texture;
  double ks = 0.0;
  double shininess = 32.0;

  double sdf(const Vec3& p) const;
  Box bounds() const;
};

struct Light {
  Vec3 position = Vec3::Zero();
  double intensity = 1.0;
};

struct SceneSpec {
  Box room{Vec3(-1.5, -1.5, 0.0), Vec3(1.5, 1.5, 2.5)};
  Texture room_texture;
  double room_ks = 0.0, room_shininess = 32.0;
  std::vector<Primitive> primitives;
  std::vector<Light> lights;
  int width = 64, height = 64;
  double fov_deg = 75.0;
  double orbit_scale = 0.6;   // eye ring radius relative to the room half extent
  double eye_height = 0.55;   // relative height of the eye ring in the room
  double depth_noise = 0.0;   // meters
  double pose_noise_rot = 0.0;    // radians
  double pose_noise_trans = 0.0;  // meters
  double bounds_margin = 0.1;     // meters added around the room for the scene box
  double mesh_voxel = 0.02;

  void validate() const;
  Box scene_bounds() const { return room.expanded(bounds_margin); }
  // Positive in free space, negative inside objects and outside the room.
  double sdf(const Vec3& p) const;
  // Label of the closest surface: 0 room shell, i + 1 for primitive i.
  int closest_label(const Vec3& p) const;
  std::string to_text() const;
};

SceneSpec parse_scene_spec(const std::string& text);
SceneSpec load_scene_spec(const std::string& path);
// Lambertian box room with a few textured primitives. With specular_patch a
// thin plate with ks = 0.8 is mounted on one wall.
SceneSpec default_scene(bool specular_patch = false);

struct Frame {
  int index = 0;
  Camera camera;
  Image rgb;    // W x H x 3
  Image depth;  // W x H x 1, z-depth in meters, 0 = invalid
  Mat4 pose = Mat4::Identity();       // camera-to-world, as given to training
  Mat4 true_pose = Mat4::Identity();  // noise-free pose when known
  std::vector<std::int16_t> labels;   // surface label per pixel, -1 for misses
};

struct FrameSet {
  std::vector<Frame> frames;
  Box bounds;
  Camera camera;
};

struct GeneratedScene {
  FrameSet frames;
  TriangleMesh gt_mesh;
  SceneSpec spec;
};

// First hit distance along a unit ray, or nullopt when nothing is hit
// before max_t.
std::optional<double> sphere_trace(const SceneSpec& spec, const Vec3& origin, const Vec3& dir,
                                   double max_t = 100.0);

// Camera-to-world transform for an eye looking at target with world +z up.
Mat4 look_at(const Vec3& eye, const Vec3& target);

GeneratedScene generate_scene(const SceneSpec& spec, int views, std::uint64_t seed,
                              bool with_mesh = true);

struct Split {
  std::vector<int> train, validation;
};
// Validation holds 0-based indices 9, 19, 29, ...
Split split_frames(int frame_count);

void write_dataset(const FrameSet& set, const std::string& dir);
FrameSet load_dataset(const std::string& dir);

Mat4 read_pose_file(const std::string& path);
void write_pose_file(const std::string& path, const Mat4& pose);

}  // namespace dualfield

// SPDX-License-Identifier: Apache-2.0
#include "dualfield/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dualfield/log.hpp"

namespace fs = std::filesystem;

namespace dualfield {

namespace {

double box_sdf(const Vec3& p, const Vec3& center, const Vec3& half) {
  const Vec3 q = (p - center).cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

constexpr double kAttenuation = 0.2;

std::string frame_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", index);
  return buf;
}

// ---- spec text format ----

std::string vec_text(const Vec3& v) {
  std::ostringstream s;
  s.precision(17);
  s << v.x() << ',' << v.y() << ',' << v.z();
  return s.str();
}

std::string num_text(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

Vec3 parse_vec(const std::string& s, const std::string& where) {
  Vec3 v;
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> v.x() >> c1 >> v.y() >> c2 >> v.z()) || c1 != ',' || c2 != ',')
    throw std::invalid_argument(where + ": expected x,y,z but got '" + s + "'");
  return v;
}

double parse_num(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(where + ": expected a number but got '" + s + "'");
  }
}

std::string texture_text(const Texture& t) {
  static const char* names[] = {"flat", "checker", "stripes"};
  return std::string("texture=") + names[static_cast<int>(t.kind)] + " color=" + vec_text(t.color) +
         " color2=" + vec_text(t.color2) + " period=" + num_text(t.period) +
         " axis=" + std::to_string(t.axis);
}

bool apply_texture_key(Texture& t, const std::string& key, const std::string& value,
                       const std::string& where) {
  if (key == "texture") {
    if (value == "flat") t.kind = TextureKind::flat;
    else if (value == "checker") t.kind = TextureKind::checker;
    else if (value == "stripes") t.kind = TextureKind::stripes;
    else throw std::invalid_argument(where + ": unknown texture '" + value + "'");
  } else if (key == "color") {
    t.color = parse_vec(value, where);
  } else if (key == "color2") {
    t.color2 = parse_vec(value, where);
  } else if (key == "period") {
    t.period = parse_num(value, where);
  } else if (key == "axis") {
    t.axis = static_cast<int>(parse_num(value, where));
  } else {
    return false;
  }
  return true;
}

}  // namespace

Vec3 Texture::albedo(const Vec3& p) const {
  switch (kind) {
    case TextureKind::flat: return color;
    case TextureKind::checker: {
      const long parity = static_cast<long>(std::floor(p.x() / period)) +
                          static_cast<long>(std::floor(p.y() / period)) +
                          static_cast<long>(std::floor(p.z() / period));
      return (parity & 1) ? color2 : color;
    }
    case TextureKind::stripes:
      return (static_cast<long>(std::floor(p[axis] / period)) & 1) ? color2 : color;
  }
  return color;
}

double Primitive::sdf(const Vec3& p) const {
  if (kind == PrimitiveKind::sphere) return (p - center).norm() - size[0];
  return box_sdf(p, center, 0.5 * size);
}

Box Primitive::bounds() const {
  const Vec3 half = kind == PrimitiveKind::sphere ? Vec3::Constant(size[0]) : Vec3(0.5 * size);
  return {center - half, center + half};
}

void SceneSpec::validate() const {
  if (!((room.extent().array() > 0).all())) throw std::invalid_argument("scene: room has no volume");
  if (width < 1 || height < 1) throw std::invalid_argument("scene: image size must be positive");
  if (!(fov_deg > 0 && fov_deg < 180)) throw std::invalid_argument("scene: fov must be in (0, 180)");
  if (lights.empty()) throw std::invalid_argument("scene: at least one light is required");
  if (!(orbit_scale >= 0 && orbit_scale < 1)) throw std::invalid_argument("scene: orbit_scale must be in [0,1)");
  if (!(eye_height > 0 && eye_height < 1)) throw std::invalid_argument("scene: eye_height must be in (0,1)");
  if (depth_noise < 0 || pose_noise_rot < 0 || pose_noise_trans < 0)
    throw std::invalid_argument("scene: noise levels must be non-negative");
  if (!(mesh_voxel > 0)) throw std::invalid_argument("scene: mesh_voxel must be positive");
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const auto& p = primitives[i];
    const std::string name = "scene: primitive " + std::to_string(i);
    if (!(p.ks >= 0 && p.ks <= 1)) throw std::invalid_argument(name + " ks must be in [0,1]");
    if (!((p.size.array() > 0).all()) && p.kind == PrimitiveKind::box)
      throw std::invalid_argument(name + " has non-positive size");
    if (p.kind == PrimitiveKind::sphere && !(p.size[0] > 0))
      throw std::invalid_argument(name + " has non-positive radius");
    const Box b = p.bounds();
    if (!room.contains(b.min) || !room.contains(b.max))
      throw std::invalid_argument(name + " is not inside the room");
    if (!(p.texture.period > 0)) throw std::invalid_argument(name + " texture period must be positive");
  }
  for (const auto& l : lights)
    if (!room.contains(l.position)) throw std::invalid_argument("scene: light outside the room");
}

double SceneSpec::sdf(const Vec3& p) const {
  double d = -box_sdf(p, room.center(), 0.5 * room.extent());
  for (const auto& prim : primitives) d = std::min(d, prim.sdf(p));
  return d;
}

int SceneSpec::closest_label(const Vec3& p) const {
  int label = 0;
  double best = std::abs(box_sdf(p, room.center(), 0.5 * room.extent()));
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const double d = std::abs(primitives[i].sdf(p));
    if (d < best) {
      best = d;
      label = static_cast<int>(i) + 1;
    }
  }
  return label;
}

std::string SceneSpec::to_text() const {
  std::ostringstream s;
  s << "room min=" << vec_text(room.min) << " max=" << vec_text(room.max) << ' '
    << texture_text(room_texture) << " ks=" << num_text(room_ks)
    << " shininess=" << num_text(room_shininess) << '\n';
  for (const auto& p : primitives) {
    if (p.kind == PrimitiveKind::sphere)
      s << "sphere center=" << vec_text(p.center) << " radius=" << num_text(p.size[0]);
    else
      s << "box center=" << vec_text(p.center) << " size=" << vec_text(p.size);
    s << ' ' << texture_text(p.texture) << " ks=" << num_text(p.ks)
      << " shininess=" << num_text(p.shininess) << '\n';
  }
  for (const auto& l : lights)
    s << "light position=" << vec_text(l.position) << " intensity=" << num_text(l.intensity) << '\n';
  s << "camera width=" << width << " height=" << height << " fov=" << num_text(fov_deg)
    << " orbit_scale=" << num_text(orbit_scale) << " eye_height=" << num_text(eye_height) << '\n';
  s << "noise depth=" << num_text(depth_noise) << " rot=" << num_text(pose_noise_rot)
    << " trans=" << num_text(pose_noise_trans) << '\n';
  s << "output bounds_margin=" << num_text(bounds_margin) << " mesh_voxel=" << num_text(mesh_voxel)
    << '\n';
  return s.str();
}

SceneSpec parse_scene_spec(const std::string& text) {
  SceneSpec spec;
  spec.primitives.clear();
  spec.lights.clear();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream words(line);
    std::string kind;
    if (!(words >> kind)) continue;
    const std::string where = "scene line " + std::to_string(lineno);
    std::map<std::string, std::string> kv;
    std::string tok;
    while (words >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument(where + ": expected key=value, got '" + tok + "'");
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto unknown = [&](const std::string& key) {
      return std::invalid_argument(where + ": unknown key '" + key + "' for " + kind);
    };
    if (kind == "room") {
      for (const auto& [k, v] : kv) {
        if (k == "min") spec.room.min = parse_vec(v, where);
        else if (k == "max") spec.room.max = parse_vec(v, where);
        else if (k == "ks") spec.room_ks = parse_num(v, where);
        else if (k == "shininess") spec.room_shininess = parse_num(v, where);
        else if (!apply_texture_key(spec.room_texture, k, v, where)) throw unknown(k);
      }
    } else if (kind == "sphere" || kind == "box") {
      Primitive p;
      p.kind = kind == "sphere" ? PrimitiveKind::sphere : PrimitiveKind::box;
      for (const auto& [k, v] : kv) {
        if (k == "center") p.center = parse_vec(v, where);
        else if (k == "radius" && kind == "sphere") p.size = Vec3::Constant(parse_num(v, where));
        else if (k == "size" && kind == "box") p.size = parse_vec(v, where);
        else if (k == "ks") p.ks = parse_num(v, where);
        else if (k == "shininess") p.shininess = parse_num(v, where);
        else if (!apply_texture_key(p.texture, k, v, where)) throw unknown(k);
      }
      spec.primitives.push_back(p);
    } else if (kind == "light") {
      Light l;
      for (const auto& [k, v] : kv) {
        if (k == "position") l.position = parse_vec(v, where);
        else if (k == "intensity") l.intensity = parse_num(v, where);
        else throw unknown(k);
      }
      spec.lights.push_back(l);
    } else if (kind == "camera") {
      for (const auto& [k, v] : kv) {
        if (k == "width") spec.width = static_cast<int>(parse_num(v, where));
        else if (k == "height") spec.height = static_cast<int>(parse_num(v, where));
        else if (k == "fov") spec.fov_deg = parse_num(v, where);
        else if (k == "orbit_scale") spec.orbit_scale = parse_num(v, where);
        else if (k == "eye_height") spec.eye_height = parse_num(v, where);
        else throw unknown(k);
      }
    } else if (kind == "noise") {
      for (const auto& [k, v] : kv) {
        if (k == "depth") spec.depth_noise = parse_num(v, where);
        else if (k == "rot") spec.pose_noise_rot = parse_num(v, where);
        else if (k == "trans") spec.pose_noise_trans = parse_num(v, where);
        else throw unknown(k);
      }
    } else if (kind == "output") {
      for (const auto& [k, v] : kv) {
        if (k == "bounds_margin") spec.bounds_margin = parse_num(v, where);
        else if (k == "mesh_voxel") spec.mesh_voxel = parse_num(v, where);
        else throw unknown(k);
      }
    } else {
      throw std::invalid_argument(where + ": unknown entry '" + kind + "'");
    }
  }
  spec.validate();
  return spec;
}

SceneSpec load_scene_spec(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read scene file " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_scene_spec(buf.str());
}

SceneSpec default_scene(bool specular_patch) {
  SceneSpec s;
  s.room_texture = {TextureKind::checker, Vec3(0.75, 0.72, 0.65), Vec3(0.45, 0.5, 0.55), 0.5, 0};
  Primitive ball;
  ball.kind = PrimitiveKind::sphere;
  ball.center = Vec3(0.45, 0.35, 0.45);
  ball.size = Vec3::Constant(0.4);
  ball.texture = {TextureKind::stripes, Vec3(0.85, 0.35, 0.25), Vec3(0.95, 0.85, 0.4), 0.15, 2};
  Primitive crate;
  crate.kind = PrimitiveKind::box;
  crate.center = Vec3(-0.5, -0.35, 0.4);
  crate.size = Vec3(0.6, 0.5, 0.8);
  crate.texture = {TextureKind::checker, Vec3(0.3, 0.55, 0.8), Vec3(0.9, 0.9, 0.9), 0.2, 0};
  Primitive pillar;
  pillar.kind = PrimitiveKind::box;
  pillar.center = Vec3(1.0, -1.0, 0.9);
  pillar.size = Vec3(0.3, 0.3, 1.8);
  pillar.texture = {TextureKind::flat, Vec3(0.35, 0.75, 0.4), Vec3(0.3, 0.3, 0.3), 0.25, 0};
  s.primitives = {ball, crate, pillar};
  if (specular_patch) {
    Primitive plate;
    plate.kind = PrimitiveKind::box;
    plate.center = Vec3(1.47, 0.1, 1.25);
    plate.size = Vec3(0.06, 1.0, 0.8);
    plate.texture = {TextureKind::flat, Vec3(0.45, 0.45, 0.5), Vec3(0.3, 0.3, 0.3), 0.25, 0};
    plate.ks = 0.8;
    plate.shininess = 8.0;
    s.primitives.push_back(plate);
  }
  s.lights = {{Vec3(0.0, 0.0, 2.35), 1.6}, {Vec3(-0.6, 0.2, 1.3), 1.0}};
  return s;
}

std::optional<double> sphere_trace(const SceneSpec& spec, const Vec3& origin, const Vec3& dir,
                                   double max_t) {
  double t = 0;
  for (int step = 0; step < 4096; ++step) {
    const double d = spec.sdf(origin + t * dir);
    if (d < 1e-10) return d < -1e-6 ? std::nullopt : std::optional<double>(t);
    t += d;
    if (t > max_t) return std::nullopt;
  }
  return t;
}

Mat4 look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 up(0, 0, 1);
  if (std::abs(forward.dot(up)) > 0.999) up = Vec3(0, 1, 0);
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Mat4 m = Mat4::Identity();
  m.block<3, 1>(0, 0) = right;
  m.block<3, 1>(0, 1) = down;
  m.block<3, 1>(0, 2) = forward;
  m.block<3, 1>(0, 3) = eye;
  return m;
}

namespace {

Vec3 scene_normal(const SceneSpec& spec, const Vec3& p) {
  constexpr double h = 1e-6;
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 d = Vec3::Zero();
    d[a] = h;
    g[a] = spec.sdf(p + d) - spec.sdf(p - d);
  }
  return g.normalized();
}

Vec3 shade(const SceneSpec& spec, const Vec3& p, const Vec3& eye, int label) {
  const Vec3 n = scene_normal(spec, p);
  const Texture& tex = label == 0 ? spec.room_texture : spec.primitives[label - 1].texture;
  const double ks = label == 0 ? spec.room_ks : spec.primitives[label - 1].ks;
  const double shine = label == 0 ? spec.room_shininess : spec.primitives[label - 1].shininess;
  const Vec3 albedo = tex.albedo(p);
  const Vec3 v = (eye - p).normalized();
  Vec3 c = Vec3::Zero();
  for (const auto& light : spec.lights) {
    const Vec3 to_light = light.position - p;
    const double dist2 = to_light.squaredNorm();
    const Vec3 l = to_light / std::sqrt(dist2);
    const double atten = light.intensity / (1.0 + kAttenuation * dist2);
    const double ndl = std::max(0.0, n.dot(l));
    c += albedo * (ndl * atten);
    if (ks > 0 && ndl > 0) {
      const Vec3 r = 2.0 * n.dot(l) * n - l;
      c += Vec3::Constant(ks * std::pow(std::max(0.0, r.dot(v)), shine) * atten);
    }
  }
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace

GeneratedScene generate_scene(const SceneSpec& spec, int views, std::uint64_t seed, bool with_mesh) {
  spec.validate();
  if (views < 2) throw std::invalid_argument("generate_scene: at least 2 views are required");
  GeneratedScene out;
  out.spec = spec;
  Camera cam;
  cam.width = spec.width;
  cam.height = spec.height;
  cam.fx = cam.fy = 0.5 * spec.width / std::tan(0.5 * spec.fov_deg * std::numbers::pi / 180.0);
  cam.cx = 0.5 * spec.width;
  cam.cy = 0.5 * spec.height;
  out.frames.camera = cam;
  out.frames.bounds = spec.scene_bounds();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vec3 center = spec.room.center();
  const Vec3 half = 0.5 * spec.room.extent();
  const double eye_z = spec.room.min.z() + spec.eye_height * spec.room.extent().z();
  for (int i = 0; i < views; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / views;
    const Vec3 eye(center.x() + spec.orbit_scale * half.x() * std::cos(theta),
                   center.y() + spec.orbit_scale * half.y() * std::sin(theta),
                   eye_z + 0.15 * half.z() * std::sin(3.0 * theta));
    const Vec3 target(center.x() + 0.3 * half.x() * std::cos(2.0 * theta + 1.0),
                      center.y() + 0.3 * half.y() * std::sin(2.0 * theta + 1.0),
                      spec.room.min.z() + spec.room.extent().z() * (0.35 + 0.1 * std::sin(theta)));
    if (spec.sdf(eye) <= 0.05)
      throw std::invalid_argument("generate_scene: camera " + std::to_string(i) +
                                  " is inside or touching scene geometry");
    Frame f;
    f.index = i;
    f.camera = cam;
    f.true_pose = look_at(eye, target);
    f.pose = f.true_pose;
    f.rgb = Image(cam.width, cam.height, 3);
    f.depth = Image(cam.width, cam.height, 1);
    f.labels.assign(static_cast<std::size_t>(cam.width) * cam.height, -1);
    const Mat3 r = f.true_pose.topLeftCorner<3, 3>();
    for (int v = 0; v < cam.height; ++v)
      for (int u = 0; u < cam.width; ++u) {
        const Vec3 dc = cam.pixel_direction(u, v);
        const Vec3 dir = (r * dc).normalized();
        const auto t = sphere_trace(spec, eye, dir);
        if (!t) continue;
        const Vec3 hit = eye + *t * dir;
        const int label = spec.closest_label(hit);
        const Vec3 c = shade(spec, hit, eye, label);
        for (int ch = 0; ch < 3; ++ch) f.rgb.at(u, v, ch) = c[ch];
        f.depth.at(u, v, 0) = *t / dc.norm();  // along-ray distance to z-depth
        f.labels[static_cast<std::size_t>(v) * cam.width + u] = static_cast<std::int16_t>(label);
      }
    if (spec.depth_noise > 0)
      for (double& d : f.depth.data)
        if (d > 0) d = std::max(0.0, d + spec.depth_noise * normal(rng));
    if (spec.pose_noise_rot > 0 || spec.pose_noise_trans > 0) {
      const Vec3 axis(normal(rng), normal(rng), normal(rng));
      const double angle = spec.pose_noise_rot * normal(rng);
      const Vec3 dt(normal(rng), normal(rng), normal(rng));
      if (axis.norm() > 1e-12) f.pose.topLeftCorner<3, 3>() = axis_angle(axis, angle) * r;
      f.pose.topRightCorner<3, 1>() += spec.pose_noise_trans * dt;
    }
    out.frames.frames.push_back(std::move(f));
  }
  if (with_mesh) {
    out.gt_mesh = extract_mesh(
        [&spec](std::span<const Vec3> pts) {
          std::vector<double> v(pts.size());
          for (std::size_t i = 0; i < pts.size(); ++i) v[i] = spec.sdf(pts[i]);
          return v;
        },
        spec.scene_bounds(), spec.mesh_voxel);
  }
  return out;
}

Split split_frames(int frame_count) {
  Split s;
  if (frame_count < 10) {
    log::warn("fewer than 10 frames: every frame is used for training, validation is empty");
    for (int i = 0; i < frame_count; ++i) s.train.push_back(i);
    return s;
  }
  for (int i = 0; i < frame_count; ++i) ((i % 10 == 9) ? s.validation : s.train).push_back(i);
  return s;
}

void write_pose_file(const std::string& path, const Mat4& pose) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.precision(17);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) f << pose(r, c) << (c < 3 ? ' ' : '\n');
  }
}

Mat4 read_pose_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("missing pose file " + path);
  Mat4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      if (!(f >> m(r, c))) throw std::runtime_error("malformed pose file " + path);
  std::string extra;
  if (f >> extra) throw std::runtime_error("malformed pose file " + path + ": trailing data");
  validate_rigid(m);
  return m;
}

void write_dataset(const FrameSet& set, const std::string& dir) {
  const fs::path root(dir);
  for (const char* sub : {"rgb", "depth", "pose", "pose_true"}) fs::create_directories(root / sub);
  {
    std::ofstream f(root / "intrinsics.txt");
    f.precision(17);
    const auto& c = set.camera;
    f << c.fx << ' ' << c.fy << ' ' << c.cx << ' ' << c.cy << ' ' << c.width << ' ' << c.height << '\n';
    if (!f) throw std::runtime_error("cannot write intrinsics in " + dir);
  }
  {
    std::ofstream f(root / "bounds.txt");
    f.precision(17);
    f << set.bounds.min.x() << ' ' << set.bounds.min.y() << ' ' << set.bounds.min.z() << '\n'
      << set.bounds.max.x() << ' ' << set.bounds.max.y() << ' ' << set.bounds.max.z() << '\n';
    if (!f) throw std::runtime_error("cannot write bounds in " + dir);
  }
  for (const auto& fr : set.frames) {
    const std::string name = frame_name(fr.index);
    write_png_rgb((root / "rgb" / (name + ".png")).string(), fr.rgb);
    write_png_depth((root / "depth" / (name + ".png")).string(), fr.depth);
    write_pose_file((root / "pose" / (name + ".txt")).string(), fr.pose);
    write_pose_file((root / "pose_true" / (name + ".txt")).string(), fr.true_pose);
  }
}

FrameSet load_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw std::runtime_error("dataset directory not found: " + dir);
  FrameSet set;
  {
    std::ifstream f(root / "intrinsics.txt");
    if (!f) throw std::runtime_error("missing intrinsics.txt in " + dir);
    auto& c = set.camera;
    if (!(f >> c.fx >> c.fy >> c.cx >> c.cy >> c.width >> c.height))
      throw std::runtime_error("malformed intrinsics.txt in " + dir);
    c.validate();
  }
  {
    std::ifstream f(root / "bounds.txt");
    if (!f) throw std::runtime_error("missing bounds.txt in " + dir);
    auto& b = set.bounds;
    if (!(f >> b.min.x() >> b.min.y() >> b.min.z() >> b.max.x() >> b.max.y() >> b.max.z()) ||
        !((b.extent().array() > 0).all()))
      throw std::runtime_error("malformed bounds.txt in " + dir);
  }
  std::vector<int> indices;
  if (fs::is_directory(root / "rgb"))
    for (const auto& e : fs::directory_iterator(root / "rgb")) {
      if (e.path().extension() != ".png") continue;
      const std::string stem = e.path().stem().string();
      if (stem.empty() || stem.find_first_not_of("0123456789") != std::string::npos) continue;
      indices.push_back(std::stoi(stem));
    }
  if (indices.empty()) throw std::runtime_error("dataset has no frames: " + dir);
  std::sort(indices.begin(), indices.end());
  for (int idx : indices) {
    const std::string name = frame_name(idx);
    Frame fr;
    fr.index = idx;
    fr.camera = set.camera;
    fr.rgb = read_png_rgb((root / "rgb" / (name + ".png")).string());
    const fs::path depth_path = root / "depth" / (name + ".png");
    if (!fs::exists(depth_path)) throw std::runtime_error("frame " + name + ": missing depth image");
    fr.depth = read_png_depth(depth_path.string());
    const fs::path pose_path = root / "pose" / (name + ".txt");
    if (!fs::exists(pose_path)) throw std::runtime_error("frame " + name + ": missing pose file");
    try {
      fr.pose = read_pose_file(pose_path.string());
    } catch (const std::exception& e) {
      throw std::runtime_error("frame " + name + ": " + e.what());
    }
    const fs::path true_path = root / "pose_true" / (name + ".txt");
    fr.true_pose = fs::exists(true_path) ? read_pose_file(true_path.string()) : fr.pose;
    if (fr.rgb.width != set.camera.width || fr.rgb.height != set.camera.height)
      throw std::runtime_error("frame " + name + ": rgb size does not match intrinsics");
    if (fr.depth.width != fr.rgb.width || fr.depth.height != fr.rgb.height)
      throw std::runtime_error("frame " + name + ": rgb/depth size mismatch");
    set.frames.push_back(std::move(fr));
  }
  return set;
}

}  // namespace dualfield

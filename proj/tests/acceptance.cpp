// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dualfield/config.hpp"
#include "dualfield/data.hpp"
#include "dualfield/encoders.hpp"
#include "dualfield/fields.hpp"
#include "dualfield/meshing.hpp"
#include "dualfield/metrics.hpp"
#include "dualfield/optim.hpp"
#include "dualfield/poses.hpp"
#include "dualfield/renderer.hpp"
#include "dualfield/trainer.hpp"
#include "op_cases.hpp"

using namespace dualfield;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

// Light left after the last sample, as an independent running product.
double final_transmittance(std::span<const double> alphas) {
  double t = 1.0;
  for (double a : alphas) t *= 1.0 - a;
  return t;
}

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Runs a check and turns an escaping exception into a failure line.
void guarded(int id, const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

void autodiff_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  double worst = 0.0;
  std::string worst_op = "none";
  const auto cases = testing::op_cases();
  for (const auto& c : cases)
    for (int trial = 0; trial < 100; ++trial) {
      auto t = c.make(rng);
      const double err = testing::max_gradient_error(t.build, t.inputs, t.params);
      if (!(err <= worst)) {
        worst = err;
        worst_op = c.name;
      }
    }
  double stop = 0.0;
  for (int trial = 0; trial < 100; ++trial) stop = std::max(stop, testing::stop_gradient_violation(rng));
  const double secs = seconds_since(t0);
  report(1, "autodiff finite differences", worst < 1e-5 && stop == 0.0 && secs < 30.0,
         std::to_string(cases.size() + 1) + " ops x 100 trials, worst " + fmt("%.2e", worst) + " (" + worst_op +
             "), stop_gradient " + fmt("%.1e", stop) + fmt(", %.1f s", secs));
}

void compositing_conservation() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1), phi(-1, 1), sharp(1, 1000);
  double worst_density = 0.0, worst_sdf = 0.0;
  for (int seq = 0; seq < 10000; ++seq) {
    const std::size_t n = 1 + rng() % 160;
    // Density branch: alpha = 1 - exp(-sigma * delta).
    std::vector<double> a(n);
    for (double& x : a) x = density_alpha(-std::log(u(rng) + 1e-300) * 2.0, u(rng));
    auto w = transmittance_weights(a);
    worst_density = std::max(
        worst_density, std::abs(std::accumulate(w.begin(), w.end(), 0.0) + final_transmittance(a) - 1.0));
    // SDF branch from a random profile.
    std::vector<double> p(n + 1);
    for (double& x : p) x = phi(rng);
    const double s = sharp(rng);
    for (std::size_t i = 0; i < n; ++i) a[i] = sdf_alpha(p[i], p[i + 1], s);
    w = transmittance_weights(a);
    worst_sdf =
        std::max(worst_sdf, std::abs(std::accumulate(w.begin(), w.end(), 0.0) + final_transmittance(a) - 1.0));
  }
  report(2, "compositing conservation", worst_density < 1e-9 && worst_sdf < 1e-9,
         fmt("10000 sequences, density %.2e, sdf %.2e", worst_density, worst_sdf));
}

void sdf_unbiasedness() {
  bool brackets = true;
  std::string where;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (double s : {10.0, 100.0, 1000.0})
    for (int trial = 0; trial < 20; ++trial) {
      const double z0 = 0.8 + 1.5 * u(rng), slope = 0.5 + 1.5 * u(rng);
      const std::size_t n = 64 + rng() % 96;
      std::vector<double> z(n), p(n);
      for (std::size_t i = 0; i < n; ++i) {
        z[i] = 0.3 + 3.0 * static_cast<double>(i) / static_cast<double>(n - 1);
        p[i] = slope * (z0 - z[i]);
      }
      std::vector<double> alpha(n, 0.0);
      for (std::size_t i = 0; i + 1 < n; ++i) alpha[i] = sdf_alpha(p[i], p[i + 1], s);
      const auto w = transmittance_weights(alpha);
      const auto k = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
      if (!(z[k] <= z0 && k + 1 < n && z[k + 1] >= z0)) {
        brackets = false;
        where = fmt(" (s=%g, crossing %.4f)", s, z0);
      }
    }
  double worst_scale = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const double a = 2 * u(rng) - 1, b = 2 * u(rng) - 1, s = 1 + 999 * u(rng), k = std::pow(2.0, 8 * u(rng) - 4);
    worst_scale = std::max(worst_scale, std::abs(sdf_alpha(k * a, k * b, s / k) - sdf_alpha(a, b, s)));
  }
  report(3, "sdf weight unbiasedness", brackets && worst_scale < 1e-12,
         std::string(brackets ? "argmax brackets crossing for s=10,100,1000" : "argmax misses crossing" + where) +
             fmt(", scale invariance %.2e", worst_scale));
}

void interpolation() {
  const Box box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  DenseMultiGrid g(box, DenseGridConfig{{0.5, 0.3, 0.07}, 3, 1e-4}, 4);
  for (auto* p : g.parameters()) std::fill(p->value.begin(), p->value.end(), 1.0);
  HashGridConfig hc;
  hc.log2_table_size = 12;
  HashMultiGrid h(box, hc, 5);
  for (auto* p : h.parameters()) std::fill(p->value.begin(), p->value.end(), 1.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst_unity = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const Vec3 x(u(rng), u(rng), u(rng));
    for (double v : g.query(x)) worst_unity = std::max(worst_unity, std::abs(v - 1.0));
    for (double v : h.query(x)) worst_unity = std::max(worst_unity, std::abs(v - 1.0));
  }

  DenseMultiGrid c(box, DenseGridConfig{{0.25}, 2, 1.0}, 9);
  const auto& level = c.levels()[0];
  const auto& table = level.features.value;
  double worst_center = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::uint32_t cx = rng() % (level.dims[0] - 1), cy = rng() % (level.dims[1] - 1),
                        cz = rng() % (level.dims[2] - 1);
    std::array<double, 2> mean{};
    for (int k = 0; k < 8; ++k) {
      const std::uint32_t x = cx + (k & 1), y = cy + ((k >> 1) & 1), z = cz + ((k >> 2) & 1);
      const std::size_t row = (static_cast<std::size_t>(z) * level.dims[1] + y) * level.dims[0] + x;
      for (int f = 0; f < 2; ++f) mean[f] += table[row * 2 + f] / 8.0;
    }
    const Vec3 q = box.min + Vec3(cx + 0.5, cy + 0.5, cz + 0.5) * 0.25;
    const auto got = c.query(q);
    for (int f = 0; f < 2; ++f) worst_center = std::max(worst_center, std::abs(got[f] - mean[f]));
  }

  const HashGridConfig def;
  const int r0 = level_resolution(def, 0), r15 = level_resolution(def, 15);
  const double b = growth_factor(def);
  const bool ladder = def.levels == 16 && r0 == 16 && r15 == 2048 && std::abs(b - 1.38191) < 5e-6;
  report(4, "grid interpolation", worst_unity < 1e-12 && worst_center < 1e-12 && ladder,
         fmt("unity %.2e, cell center %.2e", worst_unity, worst_center) +
             fmt(", hash R0=%g R15=%g", r0, r15) + fmt(" b=%.6f", b));
}

void meshing_oracle() {
  const auto t0 = Clock::now();
  const Box box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
  ScalarField sphere = [](std::span<const Vec3> p) {
    std::vector<double> v(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) v[i] = p[i].norm() - 0.5;
    return v;
  };
  const auto ball = extract_mesh(sphere, box, 0.02);
  double radial = 0.0;
  for (const Vec3& v : ball.vertices) radial = std::max(radial, std::abs(v.norm() - 0.5));
  const bool closed = ball.watertight();

  const Vec3 n = Vec3(0.3, -0.5, 0.8).normalized();
  const double offset = 0.0731;
  ScalarField plane = [n, offset](std::span<const Vec3> p) {
    std::vector<double> v(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) v[i] = n.dot(p[i]) - offset;
    return v;
  };
  const auto flat = extract_mesh(plane, box, 0.02);
  double planar = 0.0;
  for (const Vec3& v : flat.vertices) planar = std::max(planar, std::abs(n.dot(v) - offset));
  const double secs = seconds_since(t0);
  report(5, "marching cubes", !ball.empty() && radial < 0.02 && closed && !flat.empty() && planar < 1e-6 &&
                                  secs < 60.0,
         fmt("sphere radial %.4f m", radial) + (closed ? " watertight" : " open") +
             fmt(", plane %.2e m, %.1f s", planar, secs));
}

Mat4 random_pose(std::mt19937_64& rng, double rot, double trans) {
  std::uniform_real_distribution<double> r(-rot, rot), t(-trans, trans);
  PoseParam p;
  p.euler = Vec3(r(rng), 0.45 * r(rng), r(rng));
  p.translation = Vec3(t(rng), t(rng), t(rng));
  return p.to_matrix();
}

void pose_alignment() {
  std::mt19937_64 rng(6);
  // A trajectory of noisy poses whose optimized copies drift by one global G.
  const int frames = 41;  // every validation frame has two neighbors
  std::vector<Mat4> noisy(frames);
  for (int i = 0; i < frames; ++i) {
    PoseParam p;
    const double t = 0.15 * i;
    p.euler = Vec3(0.3 * std::sin(t), 0.2 * std::cos(1.3 * t), t);
    p.translation = Vec3(std::cos(t), std::sin(t), 1.0 + 0.1 * std::sin(2 * t));
    noisy[i] = p.to_matrix() * random_pose(rng, 0.02, 0.02);
  }
  const Split split = split_frames(frames);
  double pfa_worst = 0.0, ia_worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Mat4 g = random_pose(rng, 0.4, 0.4);
    for (int k : split.validation) {
      const int adj = adjacent_frame(k, split.train);
      const Mat4 expect = g * noisy[k];
      const Mat4 pfa = pfa_calibrate(noisy[k], noisy[adj], g * noisy[adj]);
      pfa_worst = std::max(pfa_worst, (pfa - expect).cwiseAbs().maxCoeff());
      const Mat4 ia = interpolate_pose(g * noisy[k - 1], g * noisy[k + 1]);
      ia_worst = std::max(ia_worst, (ia - expect).cwiseAbs().maxCoeff());
    }
  }
  report(6, "pose alignment", pfa_worst < 1e-12 && ia_worst > pfa_worst,
         fmt("PFA %.2e, interpolation %.2e", pfa_worst, ia_worst));
}

// Generates a toy dataset through the on-disk format the command-line tool uses.
FrameSet toy_dataset(bool specular, const std::string& name, GeneratedScene* out) {
  const SceneSpec spec = default_scene(specular);
  GeneratedScene scene = generate_scene(spec, 50, 0, true);
  const fs::path dir = fs::temp_directory_path() / ("dualfield_acceptance_" + name);
  fs::remove_all(dir);
  write_dataset(scene.frames, dir.string());
  FrameSet back = load_dataset(dir.string());
  fs::remove_all(dir);
  if (out) *out = std::move(scene);
  return back;
}

struct ViewStats {
  double psnr = 0, sdf_mae = 0, density_mae = 0, specular_mean = 0;
  double patch_mean = 0, rest_mean = 0;
  long patch_pixels = 0;
};

// Held-out statistics over the validation frames. Depth errors use pixels with
// valid ground truth; specular magnitude is the mean absolute channel value.
ViewStats view_stats(Trainer& t, const SceneSpec* spec, int patch_label) {
  ViewStats s;
  double sdf = 0, den = 0, spec_sum = 0, in_sum = 0, out_sum = 0;
  long depth_n = 0, spec_n = 0, out_n = 0;
  const auto& data = t.data();
  for (int f : t.split().validation) {
    const auto& fr = data.frames[f];
    const auto v = render_view(t.field(), data.camera, t.evaluation_pose(f), t.config().sampling, 512);
    s.psnr += psnr(v.color, fr.rgb);
    for (int y = 0; y < fr.rgb.height; ++y)
      for (int x = 0; x < fr.rgb.width; ++x) {
        const double d = fr.depth.at(x, y, 0);
        double m = 0;
        for (int c = 0; c < 3; ++c) m += std::abs(v.specular.at(x, y, c)) / 3.0;
        spec_sum += m;
        ++spec_n;
        if (d <= 0) continue;
        sdf += std::abs(v.depth_sdf.at(x, y, 0) - d);
        den += std::abs(v.depth.at(x, y, 0) - d);
        ++depth_n;
        if (!spec) continue;
        const Vec3 pw = (fr.true_pose * (d * fr.camera.pixel_direction(x, y)).homogeneous()).head<3>();
        if (spec->closest_label(pw) == patch_label) {
          in_sum += m;
          ++s.patch_pixels;
        } else {
          out_sum += m;
          ++out_n;
        }
      }
  }
  const double views = static_cast<double>(t.split().validation.size());
  s.psnr /= views;
  s.sdf_mae = sdf / static_cast<double>(std::max(1L, depth_n));
  s.density_mae = den / static_cast<double>(std::max(1L, depth_n));
  s.specular_mean = spec_sum / static_cast<double>(std::max(1L, spec_n));
  s.patch_mean = in_sum / static_cast<double>(std::max(1L, s.patch_pixels));
  s.rest_mean = out_sum / static_cast<double>(std::max(1L, out_n));
  return s;
}

// Chamfer distance after culling both meshes to the training views.
GeometryReport culled_geometry(Trainer& t, const TriangleMesh& gt) {
  std::vector<ObservedFrame> frames;
  for (int f : t.split().train) {
    const auto& fr = t.data().frames[f];
    frames.push_back({fr.camera, fr.true_pose, fr.depth.data});
  }
  const double voxel = t.config().mesh.voxel, slack = t.config().mesh.cull_slack_voxels * voxel;
  const auto pred = cull_unobserved(extract_mesh(t.field(), voxel), frames, slack);
  const auto ref = cull_unobserved(gt, frames, slack);
  return geometry_metrics(pred, ref, 100000, 0.05, 0);
}

struct ToyRun {
  bool done = false;
  ViewStats stats;
};

ToyRun lambertian_run;

void end_to_end() {
  const auto t0 = Clock::now();
  GeneratedScene scene;
  FrameSet data = toy_dataset(false, "lambertian", &scene);
  Trainer t(std::move(data), toy_config(2000));
  t.run();
  const double secs = seconds_since(t0);
  const ViewStats s = view_stats(t, nullptr, -1);
  const GeometryReport g = culled_geometry(t, scene.gt_mesh);
  lambertian_run = {true, s};
  report(7, "toy scene reconstruction",
         s.psnr >= 25.0 && s.sdf_mae < 0.06 && g.chamfer_l1 < 0.03 && secs < 20 * 60.0,
         fmt("PSNR %.2f dB, depth MAE %.4f m, Chamfer %.4f m", s.psnr, s.sdf_mae, g.chamfer_l1) +
             fmt(", %.0f s", secs));
}

void color_decomposition() {
  if (!lambertian_run.done) throw std::runtime_error("toy reconstruction run did not finish");
  const double lambertian = lambertian_run.stats.specular_mean;

  GeneratedScene scene;
  FrameSet data = toy_dataset(true, "specular", &scene);
  const SceneSpec spec = default_scene(true);
  const int patch = static_cast<int>(spec.primitives.size());  // label of the last primitive
  Trainer t(std::move(data), toy_config(2000));
  t.run();
  const ViewStats s = view_stats(t, &spec, patch);
  const double ratio = s.patch_mean / std::max(1e-12, s.rest_mean);
  report(8, "color decomposition", lambertian < 0.05 && s.patch_pixels > 0 && ratio >= 3.0,
         fmt("Lambertian view-dependent mean %.4f, patch %.4f vs rest %.4f", lambertian, s.patch_mean,
             s.rest_mean) +
             fmt(" (ratio %.2f over %g patch pixels)", ratio, static_cast<double>(s.patch_pixels)));
}

void align_ablation() {
  if (!lambertian_run.done) throw std::runtime_error("toy reconstruction run did not finish");
  FrameSet data = toy_dataset(false, "no_align", nullptr);
  RunConfig c = toy_config(2000);
  c.losses.lambda_align = 0.0;
  Trainer t(std::move(data), c);
  t.run();
  const ViewStats s = view_stats(t, nullptr, -1);
  const double with = lambertian_run.stats.density_mae;
  report(9, "depth alignment ablation", s.density_mae >= with,
         fmt("density depth MAE without %.4f m, with %.4f m", s.density_mae, with));
}

void schedule_and_defaults() {
  const StepSchedule sched;
  const bool steps = sched(0) == 1.0 && std::abs(sched(10000) - 1.0 / 3.0) < 1e-15 &&
                     std::abs(sched(15000) - 1.0 / 9.0) < 1e-15 && sched(9999) == 1.0 &&
                     std::abs(sched(14999) - 1.0 / 3.0) < 1e-15;
  const RunConfig def;
  const std::string text = def.to_text();
  const std::vector<std::string> lines = {
      "losses.lambda_d = 5",        "losses.lambda_depth = 1",  "losses.lambda_eik = 1",
      "losses.lambda_fs = 1",       "losses.lambda_sdf = 10",   "losses.lambda_smooth = 1",
      "losses.lambda_rgb = 50",     "losses.lambda_align = 1",  "train.rays_per_iter = 6144",
      "sampling.coarse = 96",       "train.iters = 20000"};
  std::string missing;
  for (const auto& l : lines)
    if (text.find(l + "\n") == std::string::npos) missing += " [" + l + "]";
  const bool samples = def.sampling.total() == 132;
  report(10, "schedule and defaults", steps && missing.empty() && samples,
         std::string(steps ? "schedule 1, 1/3, 1/9" : "schedule wrong") +
             (missing.empty() ? ", default weights and constants serialized" : ", missing" + missing) +
             fmt(", %g samples per ray", def.sampling.total()));
}

void metric_oracles() {
  const Image a(16, 16, 3, 0.5), b(16, 16, 3, 0.6);
  const double p = psnr(a, b);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> cloud(500);
  for (auto& x : cloud) x = Vec3(u(rng), u(rng), u(rng));
  const KdTree tree(cloud);
  int mismatches = 0;
  for (int q = 0; q < 500; ++q) {
    const Vec3 x(1.5 * u(rng), 1.5 * u(rng), 1.5 * u(rng));
    const auto k = tree.nearest(x);
    const auto f = brute_force_nearest(cloud, x);
    if (k.first != f.first || k.second != f.second) ++mismatches;
  }

  ScalarField sphere = [](std::span<const Vec3> pts) {
    std::vector<double> v(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) v[i] = pts[i].norm() - 0.6;
    return v;
  };
  const auto mesh = extract_mesh(sphere, Box{Vec3(-1, -1, -1), Vec3(1, 1, 1)}, 0.05);
  const GeometryReport same = geometry_metrics(mesh, mesh, 20000, 0.05, 0);
  report(11, "metric oracles", std::abs(p - 20.0) < 1e-9 && mismatches == 0 && same.fscore == 1.0,
         fmt("PSNR %.6f dB, kd-tree mismatches %g, identical-mesh fscore %.4f", p, mismatches, same.fscore));
}

}  // namespace

int main() {
  guarded(1, "autodiff finite differences", autodiff_oracle);
  guarded(2, "compositing conservation", compositing_conservation);
  guarded(3, "sdf weight unbiasedness", sdf_unbiasedness);
  guarded(4, "grid interpolation", interpolation);
  guarded(5, "marching cubes", meshing_oracle);
  guarded(6, "pose alignment", pose_alignment);
  guarded(10, "schedule and defaults", schedule_and_defaults);
  guarded(11, "metric oracles", metric_oracles);
  guarded(7, "toy scene reconstruction", end_to_end);
  guarded(8, "color decomposition", color_decomposition);
  guarded(9, "depth alignment ablation", align_ablation);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

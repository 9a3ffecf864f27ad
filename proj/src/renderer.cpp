// SPDX-License-Identifier: Apache-2.0
#include "dualfield/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace dualfield {

namespace {

constexpr double kMinSeparation = 1e-9;

struct Sample {
  double z;
  double phi;
};

// Merges sorted `base` with `draws` (any order) keeping entries at least
// kMinSeparation apart.
std::vector<Sample> merge_sorted(std::span<const Sample> base, std::vector<Sample> draws) {
  std::vector<Sample> out(base.begin(), base.end());
  out.insert(out.end(), draws.begin(), draws.end());
  std::stable_sort(out.begin(), out.end(), [](const Sample& a, const Sample& b) { return a.z < b.z; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].z - out[i - 1].z > kMinSeparation) continue;
    const double lo = out[i - 1].z;
    double hi = lo + 4 * kMinSeparation;
    if (i + 1 < out.size() && out[i + 1].z - lo > 2 * kMinSeparation) hi = out[i + 1].z;
    out[i].z = 0.5 * (lo + hi);
  }
  return out;
}

}  // namespace

void Camera::validate() const {
  if (!(fx > 0 && fy > 0)) throw std::invalid_argument("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera size must be positive");
  if (!(cx > 0 && cx < width && cy > 0 && cy < height))
    throw std::invalid_argument("camera principal point must lie inside the image");
}

Vec3 Camera::pixel_direction(double u, double v) const {
  return {(u + 0.5 - cx) / fx, (v + 0.5 - cy) / fy, 1.0};
}

std::optional<std::array<double, 2>> Camera::project(const Vec3& p) const {
  if (!(p.z() > 0)) return std::nullopt;
  return std::array<double, 2>{fx * p.x() / p.z() + cx - 0.5, fy * p.y() / p.z() + cy - 0.5};
}

void validate_rigid(const Mat4& pose) {
  const Mat3 r = pose.block<3, 3>(0, 0);
  if (!pose.allFinite()) throw std::invalid_argument("degenerate pose: non-finite entries");
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 || r.determinant() < 0)
    throw std::invalid_argument("degenerate pose: rotation block is not orthonormal");
  if (std::abs(pose(3, 0)) + std::abs(pose(3, 1)) + std::abs(pose(3, 2)) > 1e-9 ||
      std::abs(pose(3, 3) - 1.0) > 1e-9)
    throw std::invalid_argument("degenerate pose: last row must be (0,0,0,1)");
}

void clip_to_bounds(Ray& ray, const Box& bounds, double min_near) {
  const auto hit = bounds.intersect(ray.origin, ray.direction);
  ray.near = min_near;
  ray.far = min_near + 1e-3;
  if (hit) {
    ray.near = std::max(hit->first, min_near);
    ray.far = std::max(hit->second, ray.near + 1e-3);
  }
}

std::vector<Ray> gen_rays(const Camera& camera, const Mat4& camera_to_world,
                          std::span<const Pixel> pixels, const Box& bounds, double min_near) {
  camera.validate();
  validate_rigid(camera_to_world);
  const Mat3 r = camera_to_world.block<3, 3>(0, 0);
  const Vec3 t = camera_to_world.block<3, 1>(0, 3);
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const Pixel& px : pixels) {
    Ray ray;
    ray.origin = t;
    ray.direction = (r * camera.pixel_direction(px.u, px.v)).normalized();
    clip_to_bounds(ray, bounds, min_near);
    rays.push_back(ray);
  }
  return rays;
}

std::vector<double> sample_coarse(const Ray& ray, int count, Rng* rng) {
  if (!(ray.near < ray.far)) throw std::invalid_argument("ray near must be below far");
  if (count <= 0) throw std::invalid_argument("sample count must be positive");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double width = (ray.far - ray.near) / count;
  std::vector<double> z(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double u = rng ? unit(*rng) : 0.5;
    z[static_cast<std::size_t>(i)] = ray.near + (i + u) * width;
  }
  return z;
}

std::vector<double> sample_intervals(std::span<const double> z, std::span<const double> weights,
                                     int count, Rng* rng) {
  if (z.size() < 2 || weights.size() != z.size() - 1)
    throw std::invalid_argument("sample_intervals: need n+1 edges for n weights");
  const std::size_t n = weights.size();
  std::vector<double> mass(n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mass[i] = std::max(weights[i], 0.0);
    total += mass[i];
  }
  if (!(total >= 1e-8)) {
    total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mass[i] = z[i + 1] - z[i];
      total += mass[i];
    }
  }
  std::vector<double> cdf(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + mass[i] / total;
  cdf[n] = 1.0;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int j = 0; j < count; ++j) {
    const double u = (j + (rng ? unit(*rng) : 0.5)) / count;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cdf.begin() - 1, 0));
    k = std::min(k, n - 1);
    while (k + 1 < n && mass[k] == 0.0) ++k;
    const double span = cdf[k + 1] - cdf[k];
    const double t = span > 0 ? std::clamp((u - cdf[k]) / span, 0.0, 1.0) : 0.5;
    out.push_back(z[k] + t * (z[k + 1] - z[k]));
  }
  return out;
}

std::vector<double> merge_samples(std::span<const double> sorted, std::vector<double> draws) {
  std::vector<Sample> base(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) base[i] = {sorted[i], 0.0};
  std::vector<Sample> extra(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) extra[i] = {draws[i], 0.0};
  const auto merged = merge_sorted(base, std::move(extra));
  std::vector<double> out(merged.size());
  for (std::size_t i = 0; i < merged.size(); ++i) out[i] = merged[i].z;
  return out;
}

std::vector<double> sample_fine(std::vector<double> coarse, const IntervalWeightFn& weights,
                                int rounds, int per_round, Rng* rng) {
  std::sort(coarse.begin(), coarse.end());
  for (int r = 0; r < rounds; ++r) {
    const auto w = weights(coarse);
    coarse = merge_samples(coarse, sample_intervals(coarse, w, per_round, rng));
  }
  return coarse;
}

std::vector<double> transmittance_weights(std::span<const double> alphas) {
  std::vector<double> w(alphas.size());
  double transmittance = 1.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    w[i] = alphas[i] * transmittance;
    transmittance *= 1.0 - alphas[i];
  }
  return w;
}

CompositeResult composite(std::span<const double> alphas, std::span<const double> quantities,
                          std::size_t channels, std::span<const double> z) {
  if (quantities.size() != alphas.size() * channels || z.size() != alphas.size())
    throw std::invalid_argument("composite: inconsistent sample counts");
  for (double a : alphas)
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("composite: alpha outside [0,1]");
  CompositeResult r;
  r.weights = transmittance_weights(alphas);
  r.value.assign(channels, 0.0);
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    for (std::size_t c = 0; c < channels; ++c) r.value[c] += r.weights[i] * quantities[i * channels + c];
    r.depth += r.weights[i] * z[i];
  }
  return r;
}

ad::Tensor render_weights(ad::Tensor alpha, std::size_t spr) {
  if (alpha.cols() != 1 || spr == 0 || alpha.rows() % spr != 0)
    throw ad::ShapeError("render_weights: alpha must be [rays*samples,1], got " +
                         ad::to_string(alpha.shape()));
  const std::size_t n = alpha.rows();
  const auto a = alpha.values();
  std::vector<double> w(n);
  auto trans = std::make_shared<std::vector<double>>(n);
  for (std::size_t begin = 0; begin < n; begin += spr) {
    double t = 1.0;
    for (std::size_t i = begin; i < begin + spr; ++i) {
      (*trans)[i] = t;
      w[i] = a[i] * t;
      t *= 1.0 - a[i];
    }
  }
  auto backward = [trans, spr, n](const ad::BackwardContext& ctx) {
    if (ctx.input_grads[0].empty()) return;
    const auto a = ctx.inputs[0];
    const auto g = ctx.output_grad;
    auto ga = ctx.input_grads[0];
    for (std::size_t begin = 0; begin < n; begin += spr) {
      // tail = sum_{i>k} g_i a_i prod_{k<j<i} (1 - a_j)
      double tail = 0.0;
      for (std::size_t k = begin + spr; k-- > begin;) {
        ga[k] += (*trans)[k] * (g[k] - tail);
        tail = g[k] * a[k] + (1.0 - a[k]) * tail;
      }
    }
  };
  return alpha.tape()->custom("render_weights", {alpha}, {n, 1}, std::move(w), std::move(backward));
}

ad::Tensor weighted_sum(ad::Tensor w, ad::Tensor q, std::size_t spr) {
  if (w.cols() != 1 || w.rows() != q.rows() || spr == 0 || w.rows() % spr != 0)
    throw ad::ShapeError("weighted_sum: w " + ad::to_string(w.shape()) + " vs q " +
                         ad::to_string(q.shape()));
  const std::size_t n = w.rows(), channels = q.cols(), rays = n / spr;
  const auto wv = w.values();
  const auto qv = q.values();
  std::vector<double> out(rays * channels, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = i / spr;
    for (std::size_t c = 0; c < channels; ++c) out[r * channels + c] += wv[i] * qv[i * channels + c];
  }
  auto backward = [spr, n, channels](const ad::BackwardContext& ctx) {
    const auto wv = ctx.inputs[0];
    const auto qv = ctx.inputs[1];
    auto gw = ctx.input_grads[0];
    auto gq = ctx.input_grads[1];
    for (std::size_t i = 0; i < n; ++i) {
      const double* g = ctx.output_grad.data() + (i / spr) * channels;
      if (!gw.empty()) {
        double d = 0;
        for (std::size_t c = 0; c < channels; ++c) d += g[c] * qv[i * channels + c];
        gw[i] += d;
      }
      if (!gq.empty())
        for (std::size_t c = 0; c < channels; ++c) gq[i * channels + c] += g[c] * wv[i];
    }
  };
  return w.tape()->custom("weighted_sum", {w, q}, {rays, channels}, std::move(out),
                          std::move(backward));
}

ad::Tensor ray_points(ad::Tensor origins, ad::Tensor directions, std::span<const double> z,
                      std::size_t spr) {
  const std::size_t rays = origins.rows();
  if (origins.cols() != 3 || directions.shape() != origins.shape() || z.size() != rays * spr)
    throw ad::ShapeError("ray_points: inconsistent shapes");
  const auto o = origins.values();
  const auto d = directions.values();
  std::vector<double> out(z.size() * 3);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const std::size_t r = i / spr;
    for (int a = 0; a < 3; ++a) out[i * 3 + a] = o[r * 3 + a] + z[i] * d[r * 3 + a];
  }
  auto zs = std::make_shared<std::vector<double>>(z.begin(), z.end());
  auto backward = [zs, spr](const ad::BackwardContext& ctx) {
    auto go = ctx.input_grads[0];
    auto gd = ctx.input_grads[1];
    for (std::size_t i = 0; i < zs->size(); ++i) {
      const std::size_t r = i / spr;
      for (int a = 0; a < 3; ++a) {
        const double g = ctx.output_grad[i * 3 + a];
        if (!go.empty()) go[r * 3 + a] += g;
        if (!gd.empty()) gd[r * 3 + a] += g * (*zs)[i];
      }
    }
  };
  return origins.tape()->custom("ray_points", {origins, directions}, {z.size(), 3}, std::move(out),
                                std::move(backward));
}

RenderInputs make_render_inputs(ad::Tape& tape, std::span<const Ray> rays) {
  RenderInputs in;
  std::vector<double> o(rays.size() * 3), d(rays.size() * 3);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    for (int a = 0; a < 3; ++a) {
      o[r * 3 + a] = rays[r].origin[a];
      d[r * 3 + a] = rays[r].direction[a];
    }
    in.near.push_back(rays[r].near);
    in.far.push_back(rays[r].far);
  }
  in.origins = tape.constant({rays.size(), 3}, std::move(o));
  in.directions = tape.constant({rays.size(), 3}, std::move(d));
  return in;
}

RenderBundle render_rays(DualField& field, ad::Tape& tape, const RenderInputs& inputs,
                         const SamplingConfig& sampling, std::span<Rng> rngs, bool train) {
  const std::size_t rays = inputs.origins.rows();
  if (!rngs.empty() && rngs.size() != rays)
    throw std::invalid_argument("render_rays: one random stream per ray");
  const std::size_t spr = static_cast<std::size_t>(sampling.total());
  const auto ov = inputs.origins.values();
  const auto dv = inputs.directions.values();
  auto origin = [&](std::size_t r) { return Vec3(ov[r * 3], ov[r * 3 + 1], ov[r * 3 + 2]); };
  auto direction = [&](std::size_t r) { return Vec3(dv[r * 3], dv[r * 3 + 1], dv[r * 3 + 2]); };
  auto rng_of = [&](std::size_t r) -> Rng* { return rngs.empty() ? nullptr : &rngs[r]; };

  // Coarse samples and their SDF, evaluated off-tape.
  std::vector<std::vector<Sample>> state(rays);
  {
    std::vector<Vec3> pts;
    pts.reserve(rays * static_cast<std::size_t>(sampling.coarse));
    for (std::size_t r = 0; r < rays; ++r) {
      Ray ray{origin(r), direction(r), inputs.near[r], inputs.far[r]};
      for (double z : sample_coarse(ray, sampling.coarse, rng_of(r))) {
        state[r].push_back({z, 0.0});
        pts.push_back(ray.origin + z * ray.direction);
      }
    }
    const auto phi = field.sdf_values(pts);
    std::size_t k = 0;
    for (auto& s : state)
      for (auto& e : s) e.phi = phi[k++];
  }

  // Hierarchical rounds driven by the SDF-branch weights only.
  const double s = field.sharpness();
  for (int round = 0; round < sampling.fine_rounds; ++round) {
    std::vector<std::vector<double>> draws(rays);
    std::vector<Vec3> pts;
    for (std::size_t r = 0; r < rays; ++r) {
      const auto& st = state[r];
      std::vector<double> z(st.size()), alpha(st.size() - 1);
      for (std::size_t i = 0; i < st.size(); ++i) z[i] = st[i].z;
      for (std::size_t i = 0; i + 1 < st.size(); ++i) alpha[i] = sdf_alpha(st[i].phi, st[i + 1].phi, s);
      draws[r] = sample_intervals(z, transmittance_weights(alpha), sampling.fine_per_round, rng_of(r));
      for (double zz : draws[r]) pts.push_back(origin(r) + zz * direction(r));
    }
    const auto phi = field.sdf_values(pts);
    std::size_t k = 0;
    for (std::size_t r = 0; r < rays; ++r) {
      std::vector<Sample> extra;
      for (double zz : draws[r]) extra.push_back({zz, phi[k++]});
      state[r] = merge_sorted(state[r], std::move(extra));
    }
  }

  RenderBundle b;
  b.rays = rays;
  b.samples_per_ray = spr;
  b.z.resize(rays * spr);
  b.deltas.resize(rays * spr);
  std::vector<double> sample_dirs(rays * spr * 3);
  for (std::size_t r = 0; r < rays; ++r) {
    if (state[r].size() != spr) throw std::logic_error("render_rays: sample count drifted");
    for (std::size_t i = 0; i < spr; ++i) {
      const std::size_t idx = r * spr + i;
      b.z[idx] = state[r][i].z;
      b.deltas[idx] = (i + 1 < spr ? state[r][i + 1].z : inputs.far[r]) - state[r][i].z;
      if (b.deltas[idx] < 0) b.deltas[idx] = 0;
      for (int a = 0; a < 3; ++a) sample_dirs[idx * 3 + a] = dv[r * 3 + a];
    }
  }

  const std::size_t n = rays * spr;
  b.points = ray_points(inputs.origins, inputs.directions, b.z, spr);
  auto geo = field.eval_geometry(tape, b.points, train);
  auto col = field.eval_color(tape, b.points, sample_dirs, train);
  b.sdf = geo.sdf;
  b.density = geo.density;
  b.alpha_sdf = sdf_alpha_op(geo.sdf, field.log_sharpness(tape, train), spr);
  auto delta = tape.constant({n, 1}, b.deltas);
  b.alpha_density = ad::add_const(ad::scale(ad::exp(ad::scale(ad::mul(geo.density, delta), -1.0)), -1.0), 1.0);
  b.w_sdf = render_weights(b.alpha_sdf, spr);
  b.w_density = render_weights(b.alpha_density, spr);
  auto zt = tape.constant({n, 1}, b.z);
  b.color = weighted_sum(b.w_density, col.combined, spr);
  b.depth_density = weighted_sum(b.w_density, zt, spr);
  b.diffuse_density = weighted_sum(b.w_density, col.diffuse, spr);
  b.diffuse_sdf = weighted_sum(b.w_sdf, col.diffuse, spr);
  b.depth_sdf = weighted_sum(b.w_sdf, zt, spr);
  b.specular_density = weighted_sum(b.w_density, col.specular, spr);
  b.raw_density = weighted_sum(b.w_density, col.raw, spr);
  return b;
}

}  // namespace dualfield

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "dualfield/autodiff.hpp"
#include "dualfield/fields.hpp"
#include "dualfield/geometry.hpp"

namespace dualfield {

using Rng = std::mt19937_64;

// Pinhole intrinsics. Camera space: +x right, +y down, +z forward.
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;
  // Unnormalized camera-space direction through the center of pixel (u, v).
  Vec3 pixel_direction(double u, double v) const;
  // Pixel coordinates (u, v) such that pixel_direction(u, v) points at p.
  // Empty when p is behind the camera.
  std::optional<std::array<double, 2>> project(const Vec3& p_camera) const;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double near = 0, far = 0;
};

struct Pixel {
  double u = 0, v = 0;
};

// Throws std::invalid_argument when the rotation block is not orthonormal
// within 1e-6 or the last row is not (0,0,0,1).
void validate_rigid(const Mat4& pose);

// near/far come from the ray's intersection with `bounds`, with near clamped
// to at least min_near.
std::vector<Ray> gen_rays(const Camera& camera, const Mat4& camera_to_world,
                          std::span<const Pixel> pixels, const Box& bounds, double min_near);
void clip_to_bounds(Ray& ray, const Box& bounds, double min_near);

// Stratified samples: one per equal bin of [near, far]. With rng == nullptr
// the bin midpoints are returned.
std::vector<double> sample_coarse(const Ray& ray, int count, Rng* rng);

// Inverse-CDF draws from a piecewise-constant density on the intervals
// [z[i], z[i+1]] with mass proportional to weights[i] (weights.size() ==
// z.size() - 1). Falls back to uniform-in-z when the total mass is < 1e-8.
// Draws are stratified in CDF space; rng == nullptr uses stratum midpoints.
std::vector<double> sample_intervals(std::span<const double> z, std::span<const double> weights,
                                     int count, Rng* rng);

// Returns per-interval weights for a sorted sample set (size z.size() - 1).
using IntervalWeightFn = std::function<std::vector<double>(std::span<const double> z)>;

// Hierarchical refinement: each round draws per_round samples from the
// weights of the current set and merges them in. The result is sorted and has
// coarse.size() + rounds * per_round entries, no two within 1e-9.
std::vector<double> sample_fine(std::vector<double> coarse, const IntervalWeightFn& weights,
                                int rounds, int per_round, Rng* rng);

// Inserts sorted draws into a sorted set, nudging any draw that lands within
// 1e-9 of an existing entry toward its upper neighbor.
std::vector<double> merge_samples(std::span<const double> sorted, std::vector<double> draws);

// Transmittance weights w_i = alpha_i * prod_{j<i} (1 - alpha_j).
std::vector<double> transmittance_weights(std::span<const double> alphas);

struct CompositeResult {
  std::vector<double> value;  // one entry per quantity channel
  double depth = 0;
  std::vector<double> weights;
};

// quantities is row-major [n, channels].
CompositeResult composite(std::span<const double> alphas, std::span<const double> quantities,
                          std::size_t channels, std::span<const double> z);

// Tape ops over ray-major sample layouts.
ad::Tensor render_weights(ad::Tensor alpha, std::size_t samples_per_ray);
// sum_i w_i q_i per ray; w [N,1], q [N,C] -> [R,C].
ad::Tensor weighted_sum(ad::Tensor w, ad::Tensor q, std::size_t samples_per_ray);
// x = o + z d for every sample; origins/directions [R,3] -> [N,3].
ad::Tensor ray_points(ad::Tensor origins, ad::Tensor directions, std::span<const double> z,
                      std::size_t samples_per_ray);

struct SamplingConfig {
  int coarse = 96;
  int fine_rounds = 3;
  int fine_per_round = 12;
  double min_near = 0.05;

  int total() const { return coarse + fine_rounds * fine_per_round; }
};

// Everything one render pass produces; tensors live on the caller's tape.
struct RenderBundle {
  std::size_t rays = 0;
  std::size_t samples_per_ray = 0;
  std::vector<double> z;       // [rays * samples_per_ray]
  std::vector<double> deltas;  // density-branch interval lengths
  ad::Tensor points;           // [N,3]
  ad::Tensor sdf, density;     // [N,1]
  ad::Tensor alpha_sdf, alpha_density;
  ad::Tensor w_sdf, w_density;  // [N,1]
  ad::Tensor color;             // C_sigma: density weights x clamped c
  ad::Tensor depth_density;     // D_sigma
  ad::Tensor diffuse_density;   // C_d sigma: density weights x c_d
  ad::Tensor diffuse_sdf;       // C_d phi: SDF weights x c_d
  ad::Tensor depth_sdf;         // D_phi
  ad::Tensor specular_density;  // density weights x c_s
  ad::Tensor raw_density;       // density weights x (c_d + c_s), unclamped
};

struct RenderInputs {
  ad::Tensor origins;      // [R,3]
  ad::Tensor directions;   // [R,3], unit
  std::vector<double> near, far;
};

RenderInputs make_render_inputs(ad::Tape& tape, std::span<const Ray> rays);

// Renders a batch of rays. rngs holds one stream per ray for training-time
// stratification; an empty span renders deterministically (bin midpoints).
// Fine sample positions are chosen without recording gradients.
RenderBundle render_rays(DualField& field, ad::Tape& tape, const RenderInputs& inputs,
                         const SamplingConfig& sampling, std::span<Rng> rngs, bool train);

}  // namespace dualfield

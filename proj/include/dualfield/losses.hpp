// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dualfield/autodiff.hpp"
#include "dualfield/fields.hpp"
#include "dualfield/renderer.hpp"

namespace dualfield {

struct LossWeights {
  double lambda_d = 5.0;
  double lambda_depth = 1.0;
  double lambda_eik = 1.0;
  double lambda_fs = 1.0;
  double lambda_sdf = 10.0;
  double lambda_smooth = 1.0;
  double lambda_rgb = 50.0;
  double lambda_align = 1.0;
  double truncation = 0.05;    // meters
  double fs_exponent = 0.0;    // 0 selects 2 / truncation
  double eps_smooth = 0.015;   // meters
  double eps_grad = 0.005;     // finite-difference step for grad(phi)
  int reg_points_per_ray = 0;  // eikonal/smoothness subset; 0 = every sample

  void validate() const;
  double free_space_exponent() const { return fs_exponent > 0 ? fs_exponent : 2.0 / truncation; }
};

// Mean over rays and channels of |C_d_phi - stopgrad(C_d_sigma)|.
ad::Tensor loss_self_supervised(ad::Tensor diffuse_sdf, ad::Tensor diffuse_density);

// Mean |D - D_gt| over rays whose mask entry is nonzero. An empty mask yields
// a constant 0 and a warning.
ad::Tensor loss_depth(ad::Tensor depth, std::span<const double> depth_gt,
                      std::span<const std::uint8_t> valid);

// lambda_rgb * mean |C - C_gt| + lambda_align * masked mean |D_sigma - D_gt|.
ad::Tensor loss_sigma(ad::Tensor color, std::span<const double> color_gt, ad::Tensor depth_density,
                      std::span<const double> depth_gt, std::span<const std::uint8_t> valid,
                      const LossWeights& weights);

struct SdfRegularizers {
  ad::Tensor eikonal;     // mean (1 - |grad phi|)^2
  ad::Tensor smooth;      // mean |grad phi(x) - grad phi(x + eps)|^2
  ad::Tensor sdf;         // mean |phi - b| over |b| <= trunc
  ad::Tensor free_space;  // mean max(0, e^{-a phi} - 1, phi - b) over b > trunc
  ad::Tensor total;       // weighted sum
};

// Truncation target for a sample at ray depth z with sensor depth d_gt.
inline double truncation_target(double depth_gt, double z) { return depth_gt - z; }

// grad(phi) by central differences with step eps, one row per point.
ad::Tensor sdf_gradient(DualField& field, ad::Tape& tape, ad::Tensor points, double eps, bool train);

// Regularizers over the samples of a render pass. depth_gt / valid are per ray.
SdfRegularizers loss_sdf_regularizers(DualField& field, ad::Tape& tape, const RenderBundle& bundle,
                                      std::span<const double> depth_gt,
                                      std::span<const std::uint8_t> valid,
                                      const LossWeights& weights, Rng& rng, bool train);

struct LossParts {
  ad::Tensor self_supervised;  // L_d
  ad::Tensor depth;            // L_depth
  ad::Tensor sdf;              // L_SDF, already weighted internally
  ad::Tensor sigma;            // L_sigma, already weighted internally
};

// lambda_d * L_d + lambda_depth * L_depth + L_SDF + L_sigma. Throws
// std::runtime_error naming the first non-finite part.
ad::Tensor total_loss(const LossParts& parts, const LossWeights& weights);

}  // namespace dualfield

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dualfield/autodiff.hpp"
#include "dualfield/encoders.hpp"

// The dual radiance field: SDF and density decoded from one shared geometry
// feature, plus a view-independent (diffuse) and a view-dependent (specular)
// color decoder over hash-grid color features.
namespace dualfield {

struct FieldConfig {
  int hidden = 32;
  int direction_octaves = 4;
  // Initial SDF everywhere, as a fraction of the scene's largest extent.
  double sdf_bias_scale = 0.1;
  // Pre-sigmoid bias of the specular output; starts the specular term near 0.
  double specular_bias = -3.0;
  // Sharpness s starts at 1 / truncation.
  double truncation = 0.05;
};

// Two-layer perceptron: in -> hidden (relu) -> out.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, int in, int hidden, int out, std::uint64_t seed);

  ad::Tensor forward(ad::Tape& tape, ad::Tensor x, bool train);
  void set_output_bias(double v);
  std::vector<ad::Parameter*> parameters();
  int in_dim() const { return static_cast<int>(w1_.shape().rows); }
  int out_dim() const { return static_cast<int>(w2_.shape().cols); }

 private:
  ad::Parameter w1_, b1_, w2_, b2_;
};

// (sigma_s(phi_i) - sigma_s(phi_next)) / sigma_s(phi_i), clamped at 0, with
// sigma_s(x) = 1 / (1 + exp(-s x)).
double sdf_alpha(double phi_i, double phi_next, double s);
// 1 - exp(-sigma * delta)
double density_alpha(double sigma, double delta);
// sin/cos frequency encoding, 2^k * pi for k < octaves; 6 * octaves values.
std::vector<double> encode_direction(const Vec3& d, int octaves);

// Per-ray opacities from per-sample SDF values laid out ray-major
// ([rays * samples_per_ray, 1]). The last sample of each ray has no successor
// and gets opacity 0. log_s is [1,1].
ad::Tensor sdf_alpha_op(ad::Tensor phi, ad::Tensor log_s, std::size_t samples_per_ray);

class DualField {
 public:
  struct Geometry {
    ad::Tensor features;  // f_g, [N,16]
    ad::Tensor sdf;       // [N,1]
    ad::Tensor density;   // [N,1], >= 0
  };
  struct Color {
    ad::Tensor diffuse;   // c_d, [N,3]
    ad::Tensor specular;  // c_s, [N,3]
    ad::Tensor raw;       // c_d + c_s before clamping
    ad::Tensor combined;  // clamped to [0,1]
  };

  DualField() = default;
  DualField(const Box& box, const DenseGridConfig& dense, const HashGridConfig& hash,
            const FieldConfig& config, std::uint64_t seed);

  const Box& box() const { return box_; }
  const FieldConfig& config() const { return config_; }

  Geometry eval_geometry(ad::Tape& tape, ad::Tensor x, bool train);
  ad::Tensor eval_sdf(ad::Tape& tape, ad::Tensor x, bool train);
  // directions [N,3]; non-unit rows are normalized and counted.
  Color eval_color(ad::Tape& tape, ad::Tensor x, std::span<const double> directions, bool train);
  ad::Tensor log_sharpness(ad::Tape& tape, bool train);
  double sharpness() const;

  // SDF at many points without recording gradients.
  std::vector<double> sdf_values(std::span<const Vec3> points);

  std::vector<ad::Parameter*> parameters();
  DenseMultiGrid& geometry_grid() { return dense_; }
  HashMultiGrid& color_grid() { return hash_; }
  std::uint64_t renormalized_directions() const { return renormalized_; }

 private:
  Box box_;
  FieldConfig config_;
  DenseMultiGrid dense_;
  HashMultiGrid hash_;
  Mlp sdf_decoder_;
  Mlp density_decoder_;
  Mlp diffuse_decoder_;
  Mlp specular_decoder_;
  ad::Parameter log_s_;
  std::uint64_t renormalized_ = 0;
};

}  // namespace dualfield

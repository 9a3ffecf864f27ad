// SPDX-License-Identifier: Apache-2.0
#include "dualfield/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "dualfield/log.hpp"

namespace dualfield {

namespace {

// mean |x[r] - target[r]| over rows with valid[r] != 0; x is [R,1].
ad::Tensor masked_l1(ad::Tensor x, std::span<const double> target,
                     std::span<const std::uint8_t> valid, std::string_view what) {
  if (x.cols() != 1 || x.rows() != target.size() || valid.size() != target.size())
    throw ad::ShapeError(std::string(what) + ": one depth per ray");
  ad::Tape& tape = *x.tape();
  std::vector<std::uint32_t> rows;
  std::vector<double> gt;
  for (std::size_t r = 0; r < valid.size(); ++r) {
    if (!valid[r]) continue;
    rows.push_back(static_cast<std::uint32_t>(r));
    gt.push_back(target[r]);
  }
  if (rows.empty()) {
    log::warn(std::string(what) + ": no valid depth in batch");
    return tape.constant(0.0);
  }
  const std::size_t k = rows.size();
  return ad::mean(ad::abs(ad::sub(ad::gather_rows(x, rows), tape.constant({k, 1}, std::move(gt)))));
}

}  // namespace

void LossWeights::validate() const {
  for (double l : {lambda_d, lambda_depth, lambda_eik, lambda_fs, lambda_sdf, lambda_smooth,
                   lambda_rgb, lambda_align})
    if (!(l >= 0)) throw std::invalid_argument("loss weights must be non-negative");
  if (!(truncation > 0)) throw std::invalid_argument("truncation must be positive");
  if (!(eps_grad > 0)) throw std::invalid_argument("eps_grad must be positive");
  if (!(eps_smooth >= 0)) throw std::invalid_argument("eps_smooth must be non-negative");
  if (reg_points_per_ray < 0) throw std::invalid_argument("reg_points_per_ray must be >= 0");
}

ad::Tensor loss_self_supervised(ad::Tensor diffuse_sdf, ad::Tensor diffuse_density) {
  return ad::mean(ad::abs(ad::sub(diffuse_sdf, ad::stop_gradient(diffuse_density))));
}

ad::Tensor loss_depth(ad::Tensor depth, std::span<const double> depth_gt,
                      std::span<const std::uint8_t> valid) {
  return masked_l1(depth, depth_gt, valid, "loss_depth");
}

ad::Tensor loss_sigma(ad::Tensor color, std::span<const double> color_gt, ad::Tensor depth_density,
                      std::span<const double> depth_gt, std::span<const std::uint8_t> valid,
                      const LossWeights& weights) {
  if (color_gt.size() != color.rows() * color.cols())
    throw ad::ShapeError("loss_sigma: ground-truth color count mismatch");
  ad::Tape& tape = *color.tape();
  auto rgb = ad::mean(ad::abs(ad::sub(color, tape.constant(color.shape(), {color_gt.begin(), color_gt.end()}))));
  auto align = masked_l1(depth_density, depth_gt, valid, "loss_sigma");
  return ad::add(ad::scale(rgb, weights.lambda_rgb), ad::scale(align, weights.lambda_align));
}

ad::Tensor sdf_gradient(DualField& field, ad::Tape& tape, ad::Tensor points, double eps, bool train) {
  const std::size_t m = points.rows();
  std::vector<std::uint32_t> idx(6 * m);
  std::vector<double> offsets(6 * m * 3, 0.0);
  // Rows are blocked by (axis, sign): block 2a holds +eps along a, 2a+1 holds -eps.
  for (int a = 0; a < 3; ++a) {
    for (int sgn = 0; sgn < 2; ++sgn) {
      const std::size_t block = static_cast<std::size_t>(2 * a + sgn);
      for (std::size_t i = 0; i < m; ++i) {
        idx[block * m + i] = static_cast<std::uint32_t>(i);
        offsets[(block * m + i) * 3 + a] = sgn == 0 ? eps : -eps;
      }
    }
  }
  auto shifted = ad::add(ad::gather_rows(points, idx), tape.constant({6 * m, 3}, std::move(offsets)));
  auto phi = field.eval_sdf(tape, shifted, train);
  std::vector<ad::Tensor> comps;
  for (int a = 0; a < 3; ++a) {
    std::vector<std::uint32_t> plus(m), minus(m);
    for (std::size_t i = 0; i < m; ++i) {
      plus[i] = static_cast<std::uint32_t>(2 * a * m + i);
      minus[i] = static_cast<std::uint32_t>((2 * a + 1) * m + i);
    }
    comps.push_back(ad::scale(ad::sub(ad::gather_rows(phi, plus), ad::gather_rows(phi, minus)),
                              0.5 / eps));
  }
  return ad::concat(comps);
}

SdfRegularizers loss_sdf_regularizers(DualField& field, ad::Tape& tape, const RenderBundle& bundle,
                                      std::span<const double> depth_gt,
                                      std::span<const std::uint8_t> valid,
                                      const LossWeights& weights, Rng& rng, bool train) {
  const std::size_t rays = bundle.rays, spr = bundle.samples_per_ray;
  if (depth_gt.size() != rays || valid.size() != rays)
    throw ad::ShapeError("loss_sdf_regularizers: one depth per ray");

  // Points carrying the eikonal and smoothness terms.
  std::vector<std::uint32_t> reg_rows;
  const std::size_t per_ray =
      weights.reg_points_per_ray > 0 ? std::min<std::size_t>(weights.reg_points_per_ray, spr) : spr;
  std::vector<std::uint32_t> order(spr);
  for (std::size_t r = 0; r < rays; ++r) {
    for (std::size_t i = 0; i < spr; ++i) order[i] = static_cast<std::uint32_t>(i);
    if (per_ray < spr) {
      // Partial Fisher-Yates: the first per_ray entries are a uniform subset.
      for (std::size_t i = 0; i < per_ray; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, spr - 1);
        std::swap(order[i], order[pick(rng)]);
      }
    }
    for (std::size_t i = 0; i < per_ray; ++i)
      reg_rows.push_back(static_cast<std::uint32_t>(r * spr + order[i]));
  }
  const std::size_t m = reg_rows.size();
  auto base = ad::gather_rows(bundle.points, reg_rows);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> jitter(m * 3);
  for (std::size_t i = 0; i < m; ++i) {
    Vec3 u(normal(rng), normal(rng), normal(rng));
    if (u.norm() < 1e-12) u = Vec3::UnitX();
    u = u.normalized() * weights.eps_smooth;
    for (int a = 0; a < 3; ++a) jitter[i * 3 + a] = u[a];
  }
  auto moved = ad::add(base, tape.constant({m, 3}, std::move(jitter)));

  SdfRegularizers out;
  auto grad = sdf_gradient(field, tape, base, weights.eps_grad, train);
  auto norm = ad::sqrt(ad::row_sum(ad::mul(grad, grad)));
  auto one_minus = ad::add_const(ad::scale(norm, -1.0), 1.0);
  out.eikonal = ad::mean(ad::mul(one_minus, one_minus));
  if (weights.lambda_smooth > 0) {
    auto grad2 = sdf_gradient(field, tape, moved, weights.eps_grad, train);
    auto diff = ad::sub(grad, grad2);
    out.smooth = ad::mean(ad::row_sum(ad::mul(diff, diff)));
  } else {
    out.smooth = tape.constant(0.0);
  }

  // Truncation-band and free-space supervision on depth-valid rays.
  const double trunc = weights.truncation;
  std::vector<std::uint32_t> band_rows, fs_rows;
  std::vector<double> band_b, fs_b;
  for (std::size_t r = 0; r < rays; ++r) {
    if (!valid[r]) continue;
    for (std::size_t i = 0; i < spr; ++i) {
      const std::size_t idx = r * spr + i;
      const double b = truncation_target(depth_gt[r], bundle.z[idx]);
      if (std::abs(b) <= trunc) {
        band_rows.push_back(static_cast<std::uint32_t>(idx));
        band_b.push_back(b);
      } else if (b > trunc) {
        fs_rows.push_back(static_cast<std::uint32_t>(idx));
        fs_b.push_back(b);
      }
    }
  }
  if (!band_rows.empty()) {
    const std::size_t k = band_rows.size();
    auto phi = ad::gather_rows(bundle.sdf, band_rows);
    out.sdf = ad::mean(ad::abs(ad::sub(phi, tape.constant({k, 1}, std::move(band_b)))));
  } else {
    out.sdf = tape.constant(0.0);
  }
  if (!fs_rows.empty()) {
    const std::size_t k = fs_rows.size();
    auto phi = ad::gather_rows(bundle.sdf, fs_rows);
    auto expo = ad::add_const(ad::exp(ad::scale(phi, -weights.free_space_exponent())), -1.0);
    auto over = ad::sub(phi, tape.constant({k, 1}, std::move(fs_b)));
    out.free_space = ad::mean(ad::max_const(ad::maximum(expo, over), 0.0));
  } else {
    out.free_space = tape.constant(0.0);
  }

  out.total = ad::add(
      ad::add(ad::scale(out.eikonal, weights.lambda_eik), ad::scale(out.smooth, weights.lambda_smooth)),
      ad::add(ad::scale(out.sdf, weights.lambda_sdf), ad::scale(out.free_space, weights.lambda_fs)));
  return out;
}

ad::Tensor total_loss(const LossParts& parts, const LossWeights& weights) {
  const std::pair<const char*, ad::Tensor> named[] = {{"self_supervised", parts.self_supervised},
                                                      {"depth", parts.depth},
                                                      {"sdf", parts.sdf},
                                                      {"sigma", parts.sigma}};
  for (const auto& [name, t] : named) {
    if (!t.valid()) throw std::invalid_argument(std::string("loss part '") + name + "' is missing");
    if (!std::isfinite(t.item()))
      throw std::runtime_error(std::string("non-finite loss term '") + name + "'");
  }
  return ad::add(ad::add(ad::scale(parts.self_supervised, weights.lambda_d),
                         ad::scale(parts.depth, weights.lambda_depth)),
                 ad::add(parts.sdf, parts.sigma));
}

}  // namespace dualfield

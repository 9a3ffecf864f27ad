// SPDX-License-Identifier: Apache-2.0
#include "dualfield/fields.hpp"

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>

namespace dualfield {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// log(sigmoid(t)) without overflow.
inline double log_sigmoid(double t) {
  return t >= 0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void init_uniform(ad::Parameter& p, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : p.value) v = dist(rng);
}

}  // namespace

Mlp::Mlp(std::string name, int in, int hidden, int out, std::uint64_t seed)
    : w1_(name + ".w1", {static_cast<std::size_t>(in), static_cast<std::size_t>(hidden)},
          ad::Group::mlp),
      b1_(name + ".b1", {1, static_cast<std::size_t>(hidden)}, ad::Group::mlp),
      w2_(name + ".w2", {static_cast<std::size_t>(hidden), static_cast<std::size_t>(out)},
          ad::Group::mlp),
      b2_(name + ".b2", {1, static_cast<std::size_t>(out)}, ad::Group::mlp) {
  std::mt19937_64 rng(seed);
  init_uniform(w1_, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  init_uniform(w2_, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
}

// One node for the whole perceptron; only the hidden activations are kept.
namespace {

// Fixed summation order; Eigen's column reductions vary with buffer alignment.
void add_column_sums(const double* m, std::size_t rows, std::size_t cols, double* dst) {
  std::vector<double> acc(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) acc[c] += m[r * cols + c];
  for (std::size_t c = 0; c < cols; ++c) dst[c] += acc[c];
}

}  // namespace

ad::Tensor Mlp::forward(ad::Tape& tape, ad::Tensor x, bool train) {
  const std::size_t n = x.rows(), in = w1_.shape().rows, hid = w1_.shape().cols,
                    out = w2_.shape().cols;
  if (x.cols() != in)
    throw ad::ShapeError(w1_.name() + ": input " + ad::to_string(x.shape()) + ", expected " +
                         std::to_string(in) + " columns");
  auto w1 = tape.parameter(w1_, train), b1 = tape.parameter(b1_, train);
  auto w2 = tape.parameter(w2_, train), b2 = tape.parameter(b2_, train);
  auto hidden = std::make_shared<RowMatrix>(n, hid);
  ConstMap X(x.values().data(), n, in);
  ConstMap W1(w1_.value.data(), in, hid), B1(b1_.value.data(), 1, hid);
  ConstMap W2(w2_.value.data(), hid, out), B2(b2_.value.data(), 1, out);
  hidden->noalias() = X * W1;
  hidden->rowwise() += B1.row(0);
  *hidden = hidden->cwiseMax(0.0);
  std::vector<double> y(n * out);
  MutMap Y(y.data(), n, out);
  Y.noalias() = *hidden * W2;
  Y.rowwise() += B2.row(0);

  auto backward = [hidden, n, in, hid, out](const ad::BackwardContext& ctx) {
    ConstMap G(ctx.output_grad.data(), n, out);
    ConstMap W1(ctx.inputs[1].data(), in, hid), W2(ctx.inputs[3].data(), hid, out);
    if (!ctx.input_grads[3].empty()) MutMap(ctx.input_grads[3].data(), hid, out).noalias() += hidden->transpose() * G;
    if (!ctx.input_grads[4].empty()) add_column_sums(G.data(), n, out, ctx.input_grads[4].data());
    const bool want_x = !ctx.input_grads[0].empty(), want_w1 = !ctx.input_grads[1].empty(),
               want_b1 = !ctx.input_grads[2].empty();
    if (!want_x && !want_w1 && !want_b1) return;
    RowMatrix gh = G * W2.transpose();
    gh = (hidden->array() > 0.0).select(gh, 0.0);
    if (want_w1) {
      ConstMap X(ctx.inputs[0].data(), n, in);
      MutMap(ctx.input_grads[1].data(), in, hid).noalias() += X.transpose() * gh;
    }
    if (want_b1) add_column_sums(gh.data(), n, hid, ctx.input_grads[2].data());
    if (want_x) MutMap(ctx.input_grads[0].data(), n, in).noalias() += gh * W1.transpose();
  };
  return tape.custom(w1_.name().substr(0, w1_.name().rfind('.')), {x, w1, b1, w2, b2}, {n, out},
                     std::move(y), std::move(backward));
}

void Mlp::set_output_bias(double v) { std::fill(b2_.value.begin(), b2_.value.end(), v); }

std::vector<ad::Parameter*> Mlp::parameters() { return {&w1_, &b1_, &w2_, &b2_}; }

double sdf_alpha(double phi_i, double phi_next, double s) {
  if (!(s > 0)) throw std::invalid_argument("sharpness must be positive");
  const double ratio = std::exp(log_sigmoid(s * phi_next) - log_sigmoid(s * phi_i));
  return std::max(1.0 - ratio, 0.0);
}

double density_alpha(double sigma, double delta) { return 1.0 - std::exp(-sigma * delta); }

std::vector<double> encode_direction(const Vec3& d, int octaves) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(6 * octaves));
  for (int k = 0; k < octaves; ++k) {
    const double f = std::ldexp(std::numbers::pi, k);
    for (int a = 0; a < 3; ++a) out.push_back(std::sin(f * d[a]));
    for (int a = 0; a < 3; ++a) out.push_back(std::cos(f * d[a]));
  }
  return out;
}

ad::Tensor sdf_alpha_op(ad::Tensor phi, ad::Tensor log_s, std::size_t samples_per_ray) {
  if (phi.cols() != 1 || samples_per_ray == 0 || phi.rows() % samples_per_ray != 0)
    throw ad::ShapeError("sdf_alpha_op: phi must be [rays*samples,1], got " +
                         ad::to_string(phi.shape()));
  if (log_s.shape() != ad::Shape{1, 1}) throw ad::ShapeError("sdf_alpha_op: log_s must be scalar");
  const std::size_t n = phi.rows();
  const double s = std::exp(log_s.item());
  const auto p = phi.values();
  std::vector<double> alpha(n, 0.0);
  // ratio_i = sigma_s(phi_next) / sigma_s(phi_i); kept for backward.
  auto ratio = std::make_shared<std::vector<double>>(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if ((i + 1) % samples_per_ray == 0) continue;
    const double r = std::exp(log_sigmoid(s * p[i + 1]) - log_sigmoid(s * p[i]));
    (*ratio)[i] = r;
    alpha[i] = std::max(1.0 - r, 0.0);
  }
  auto backward = [ratio, s, samples_per_ray, n](const ad::BackwardContext& ctx) {
    const auto p = ctx.inputs[0];
    auto gphi = ctx.input_grads[0];
    auto gls = ctx.input_grads[1];
    for (std::size_t i = 0; i < n; ++i) {
      if ((i + 1) % samples_per_ray == 0) continue;
      const double r = (*ratio)[i];
      if (!(1.0 - r > 0.0)) continue;  // clamped branch
      const double g = ctx.output_grad[i];
      if (g == 0.0) continue;
      const double si = sigmoid(s * p[i]);
      const double sn = sigmoid(s * p[i + 1]);
      // alpha = 1 - exp(ls(phi_next) - ls(phi_i)), ls(x) = log sigmoid(s x)
      if (!gphi.empty()) {
        gphi[i] += g * r * s * (1.0 - si);
        gphi[i + 1] -= g * r * s * (1.0 - sn);
      }
      if (!gls.empty()) gls[0] -= g * r * s * (p[i + 1] * (1.0 - sn) - p[i] * (1.0 - si));
    }
  };
  return phi.tape()->custom("sdf_alpha", {phi, log_s}, {n, 1}, std::move(alpha),
                            std::move(backward));
}

DualField::DualField(const Box& box, const DenseGridConfig& dense, const HashGridConfig& hash,
                     const FieldConfig& config, std::uint64_t seed)
    : box_(box),
      config_(config),
      dense_(box, dense, seed ^ 0x1001),
      hash_(box, hash, seed ^ 0x2002),
      log_s_("sharpness.log_s", {1, 1}, ad::Group::mlp) {
  const int h = config.hidden;
  const int fg = static_cast<int>(dense_.output_dim());
  const int fc = static_cast<int>(hash_.output_dim());
  const int enc = 6 * config.direction_octaves;
  sdf_decoder_ = Mlp("sdf_decoder", fg, h, 1, seed ^ 0x3003);
  density_decoder_ = Mlp("density_decoder", fg, h, 1, seed ^ 0x4004);
  diffuse_decoder_ = Mlp("diffuse_decoder", fc, h, 3 + fc, seed ^ 0x5005);
  specular_decoder_ = Mlp("specular_decoder", fc + enc, h, 3, seed ^ 0x6006);
  sdf_decoder_.set_output_bias(config.sdf_bias_scale * box.max_extent());
  specular_decoder_.set_output_bias(config.specular_bias);
  if (!(config.truncation > 0)) throw std::invalid_argument("truncation must be positive");
  log_s_.value[0] = std::log(1.0 / config.truncation);
}

DualField::Geometry DualField::eval_geometry(ad::Tape& tape, ad::Tensor x, bool train) {
  Geometry g;
  g.features = dense_.interpolate(tape, x, train);
  g.sdf = sdf_decoder_.forward(tape, g.features, train);
  g.density = ad::softplus(density_decoder_.forward(tape, g.features, train));
  return g;
}

ad::Tensor DualField::eval_sdf(ad::Tape& tape, ad::Tensor x, bool train) {
  return sdf_decoder_.forward(tape, dense_.interpolate(tape, x, train), train);
}

DualField::Color DualField::eval_color(ad::Tape& tape, ad::Tensor x,
                                       std::span<const double> directions, bool train) {
  const std::size_t n = x.rows();
  if (directions.size() != n * 3) throw ad::ShapeError("eval_color: one direction per point");
  const int octaves = config_.direction_octaves;
  const std::size_t enc_dim = static_cast<std::size_t>(6 * octaves);
  std::vector<double> enc(n * enc_dim);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 d(directions[i * 3], directions[i * 3 + 1], directions[i * 3 + 2]);
    const double len = d.norm();
    if (std::abs(len - 1.0) > 1e-6) {
      ++renormalized_;
      if (len == 0.0) throw std::invalid_argument("eval_color: zero view direction");
      d /= len;
    }
    const auto e = encode_direction(d, octaves);
    std::copy(e.begin(), e.end(), enc.begin() + static_cast<std::ptrdiff_t>(i * enc_dim));
  }
  const std::size_t fc = hash_.output_dim();
  auto fcolor = hash_.interpolate(tape, x, train);
  auto diffuse_out = diffuse_decoder_.forward(tape, fcolor, train);
  Color c;
  c.diffuse = ad::sigmoid(ad::slice(diffuse_out, 0, 3));
  auto intermediate = ad::slice(diffuse_out, 3, 3 + fc);
  auto spec_in = ad::concat(intermediate, tape.constant({n, enc_dim}, std::move(enc)));
  c.specular = ad::sigmoid(specular_decoder_.forward(tape, spec_in, train));
  c.raw = ad::add(c.diffuse, c.specular);
  c.combined = ad::clamp(c.raw, 0.0, 1.0);
  return c;
}

ad::Tensor DualField::log_sharpness(ad::Tape& tape, bool train) {
  return tape.parameter(log_s_, train);
}

double DualField::sharpness() const { return std::exp(log_s_.value[0]); }

std::vector<double> DualField::sdf_values(std::span<const Vec3> points) {
  constexpr std::size_t kBatch = 32768;
  std::vector<double> out(points.size());
  ad::Tape tape;
  for (std::size_t begin = 0; begin < points.size(); begin += kBatch) {
    const std::size_t count = std::min(kBatch, points.size() - begin);
    std::vector<double> xs(count * 3);
    for (std::size_t i = 0; i < count; ++i)
      for (int a = 0; a < 3; ++a) xs[i * 3 + a] = points[begin + i][a];
    tape.clear();
    auto phi = eval_sdf(tape, tape.constant({count, 3}, std::move(xs)), false);
    std::copy(phi.values().begin(), phi.values().end(),
              out.begin() + static_cast<std::ptrdiff_t>(begin));
  }
  return out;
}

std::vector<ad::Parameter*> DualField::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto* p : dense_.parameters()) out.push_back(p);
  for (auto* p : hash_.parameters()) out.push_back(p);
  for (Mlp* m : {&sdf_decoder_, &density_decoder_, &diffuse_decoder_, &specular_decoder_})
    for (auto* p : m->parameters()) out.push_back(p);
  out.push_back(&log_s_);
  return out;
}

}  // namespace dualfield

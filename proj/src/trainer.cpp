// SPDX-License-Identifier: Apache-2.0
#include "dualfield/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dualfield/log.hpp"
#include "dualfield/losses.hpp"
#include "dualfield/metrics.hpp"

namespace dualfield {

namespace {

Rng iteration_rng(std::uint64_t seed, int iter) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(iter), 0x5eedu};
  return Rng(seq);
}

struct Accum {
  double total = 0, self_supervised = 0, depth = 0, sdf = 0, eikonal = 0, smooth = 0, band = 0,
         free_space = 0, sigma = 0;
};

}  // namespace

std::unique_ptr<DualField> build_field(const RunConfig& config, const Box& bounds) {
  FieldConfig fc = config.field;
  fc.truncation = config.losses.truncation;
  return std::make_unique<DualField>(bounds, config.dense, config.hash, fc, config.train.seed);
}

RenderedView render_view(DualField& field, const Camera& camera, const Mat4& camera_to_world,
                         const SamplingConfig& sampling, int chunk_rays) {
  camera.validate();
  validate_rigid(camera_to_world);
  const int w = camera.width, h = camera.height;
  RenderedView out;
  out.color = Image(w, h, 3);
  out.depth = Image(w, h, 1);
  out.depth_sdf = Image(w, h, 1);
  out.diffuse = Image(w, h, 3);
  out.specular = Image(w, h, 3);
  out.raw = Image(w, h, 3);
  std::vector<Pixel> pixels;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) pixels.push_back({static_cast<double>(u), static_cast<double>(v)});
  const std::size_t chunk = static_cast<std::size_t>(std::max(chunk_rays, 1));
  ad::Tape tape;
  for (std::size_t begin = 0; begin < pixels.size(); begin += chunk) {
    const std::size_t count = std::min(chunk, pixels.size() - begin);
    std::span<const Pixel> px(pixels.data() + begin, count);
    const auto rays = gen_rays(camera, camera_to_world, px, field.box(), sampling.min_near);
    tape.clear();
    const auto inputs = make_render_inputs(tape, rays);
    const auto b = render_rays(field, tape, inputs, sampling, {}, false);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t p = begin + i;
      const double ray_to_z = 1.0 / camera.pixel_direction(px[i].u, px[i].v).norm();
      out.depth.data[p] = b.depth_density.values()[i] * ray_to_z;
      out.depth_sdf.data[p] = b.depth_sdf.values()[i] * ray_to_z;
      for (int c = 0; c < 3; ++c) {
        out.color.data[p * 3 + c] = b.color.values()[i * 3 + c];
        out.diffuse.data[p * 3 + c] = b.diffuse_density.values()[i * 3 + c];
        out.specular.data[p * 3 + c] = b.specular_density.values()[i * 3 + c];
        out.raw.data[p * 3 + c] = b.raw_density.values()[i * 3 + c];
      }
    }
  }
  return out;
}

Trainer::Trainer(FrameSet data, RunConfig config) : data_(std::move(data)), config_(std::move(config)) {
  config_.validate();
  if (data_.frames.empty()) throw std::invalid_argument("trainer: dataset has no frames");
  split_ = split_frames(static_cast<int>(data_.frames.size()));
  if (split_.train.empty()) throw std::invalid_argument("trainer: no training frames");
  field_ = build_field(config_, data_.bounds);
  std::vector<Mat4> initial;
  for (const auto& f : data_.frames) initial.push_back(f.pose);
  poses_ = std::make_unique<PoseTable>(initial);
  init_optimizers();
}

Trainer::Trainer(FrameSet data, const Checkpoint& ckpt) : data_(std::move(data)) {
  config_.apply_text(ckpt.config_text);
  config_.validate();
  split_ = split_frames(static_cast<int>(data_.frames.size()));
  if (split_.train.empty()) throw std::invalid_argument("trainer: no training frames");
  field_ = build_field(config_, ckpt.bounds);
  std::vector<Mat4> initial;
  for (const auto& f : data_.frames) initial.push_back(f.pose);
  poses_ = std::make_unique<PoseTable>(initial);
  init_optimizers();
  auto restore = [&](ad::Parameter& p, AdamSlot* slot) {
    const auto& t = ckpt.tensor(p.name());
    if (t.shape != p.shape())
      throw std::runtime_error("checkpoint tensor '" + p.name() + "' has shape " + ad::to_string(t.shape) +
                               ", expected " + ad::to_string(p.shape()));
    p.value = t.value;
    if (slot && !t.m.empty()) {
      slot->m = t.m;
      slot->v = t.v;
      slot->step = t.step;
    }
  };
  auto params = field_->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) restore(*params[i], &adam_->slots()[i]);
  restore(poses_->parameter(), pose_adam_ ? &pose_adam_->slots()[0] : nullptr);
  iter_ = static_cast<int>(ckpt.iteration);
}

void Trainer::init_optimizers() {
  adam_ = std::make_unique<Adam>(field_->parameters(), config_.adam, config_.schedule);
  if (config_.train.pose_refine)
    pose_adam_ = std::make_unique<Adam>(std::vector<ad::Parameter*>{&poses_->parameter()}, config_.adam,
                                        config_.schedule);
}

std::size_t Trainer::skipped_updates() const {
  return adam_->skipped() + (pose_adam_ ? pose_adam_->skipped() : 0);
}

double Trainer::iterate() {
  const auto& tc = config_.train;
  const auto& lw = config_.losses;
  Rng rng = iteration_rng(tc.seed, iter_);
  const Camera& cam = data_.camera;
  const std::size_t m = static_cast<std::size_t>(tc.rays_per_iter);

  struct RaySample {
    std::uint32_t frame;
    int u, v;
  };
  std::vector<RaySample> picks(m);
  std::uniform_int_distribution<std::size_t> pick_frame(0, split_.train.size() - 1);
  std::uniform_int_distribution<int> pick_u(0, cam.width - 1), pick_v(0, cam.height - 1);
  for (auto& p : picks) {
    p.frame = static_cast<std::uint32_t>(split_.train[pick_frame(rng)]);
    p.u = pick_u(rng);
    p.v = pick_v(rng);
  }

  const bool train_pose = tc.pose_refine && iter_ >= tc.pose_warmup;
  Accum acc;
  const std::size_t chunk = static_cast<std::size_t>(tc.chunk_rays);
  for (std::size_t begin = 0; begin < m; begin += chunk) {
    const std::size_t count = std::min(chunk, m - begin);
    const double share = static_cast<double>(count) / static_cast<double>(m);
    ad::Tape tape;
    std::vector<std::uint32_t> frame_of(count);
    std::vector<Vec3> cam_dirs(count);
    std::vector<double> color_gt(count * 3), depth_gt(count);
    std::vector<std::uint8_t> valid(count);
    std::vector<Rng> ray_rngs;
    ray_rngs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& p = picks[begin + i];
      const Frame& f = data_.frames[p.frame];
      frame_of[i] = p.frame;
      cam_dirs[i] = cam.pixel_direction(p.u, p.v);
      for (int c = 0; c < 3; ++c) color_gt[i * 3 + c] = f.rgb.at(p.u, p.v, c);
      const double z = f.depth.at(p.u, p.v, 0);
      valid[i] = z > 0;
      depth_gt[i] = z * cam_dirs[i].norm();
      ray_rngs.emplace_back(rng());
    }
    auto table = tape.parameter(poses_->parameter(), train_pose);
    const auto posed = pose_rays(table, frame_of, cam_dirs);
    RenderInputs inputs{posed.origins, posed.directions, std::vector<double>(count), std::vector<double>(count)};
    const auto ov = posed.origins.values(), dv = posed.directions.values();
    for (std::size_t i = 0; i < count; ++i) {
      Ray ray{Vec3(ov[i * 3], ov[i * 3 + 1], ov[i * 3 + 2]), Vec3(dv[i * 3], dv[i * 3 + 1], dv[i * 3 + 2]), 0, 0};
      clip_to_bounds(ray, field_->box(), config_.sampling.min_near);
      inputs.near[i] = ray.near;
      inputs.far[i] = ray.far;
    }
    const auto bundle = render_rays(*field_, tape, inputs, config_.sampling, ray_rngs, true);

    LossParts parts;
    parts.self_supervised = loss_self_supervised(bundle.diffuse_sdf, bundle.diffuse_density);
    parts.depth = loss_depth(bundle.depth_sdf, depth_gt, valid);
    const auto reg = loss_sdf_regularizers(*field_, tape, bundle, depth_gt, valid, lw, rng, true);
    parts.sdf = reg.total;
    parts.sigma = loss_sigma(bundle.color, color_gt, bundle.depth_density, depth_gt, valid, lw);
    ad::Tensor total;
    try {
      total = total_loss(parts, lw);
    } catch (const std::runtime_error& e) {
      std::ostringstream msg;
      msg << "iteration " << iter_ << ": " << e.what() << " (self_supervised=" << parts.self_supervised.item()
          << " depth=" << parts.depth.item() << " sdf=" << parts.sdf.item() << " sigma=" << parts.sigma.item()
          << ")";
      throw std::runtime_error(msg.str());
    }
    tape.backward(ad::scale(total, share));

    acc.total += share * total.item();
    acc.self_supervised += share * parts.self_supervised.item();
    acc.depth += share * parts.depth.item();
    acc.sdf += share * parts.sdf.item();
    acc.eikonal += share * reg.eikonal.item();
    acc.smooth += share * reg.smooth.item();
    acc.band += share * reg.sdf.item();
    acc.free_space += share * reg.free_space.item();
    acc.sigma += share * parts.sigma.item();
  }

  adam_->step(iter_);
  if (pose_adam_) {
    if (train_pose) {
      pose_adam_->step(iter_);
    } else {
      poses_->parameter().zero_grad();
    }
  }

  const std::pair<const char*, double> terms[] = {
      {"total", acc.total},     {"self_supervised", acc.self_supervised}, {"depth", acc.depth},
      {"sdf", acc.sdf},         {"eikonal", acc.eikonal},                 {"smooth", acc.smooth},
      {"sdf_band", acc.band},   {"free_space", acc.free_space},           {"sigma", acc.sigma}};
  for (const auto& [name, value] : terms) losses_.push_back({iter_, name, value});
  ++iter_;
  return acc.total;
}

void Trainer::run(int iters) {
  const auto& tc = config_.train;
  while (iter_ < iters) {
    const double loss = iterate();
    if (tc.log_every > 0 && (iter_ % tc.log_every == 0 || iter_ == iters)) {
      std::ostringstream s;
      s << "iter " << iter_ << "/" << iters << " loss " << loss << " s " << field_->sharpness();
      log::info(s.str());
    }
    if (tc.eval_every > 0 && iter_ % tc.eval_every == 0 && !split_.validation.empty()) {
      const double p = validation_psnr(tc.eval_frames);
      losses_.push_back({iter_ - 1, "val_psnr", p});
      log::info("iter " + std::to_string(iter_) + " validation psnr " + format_metric(p));
    }
    if (tc.checkpoint_every > 0 && iter_ % tc.checkpoint_every == 0 && on_checkpoint) on_checkpoint(*this);
  }
}

Mat4 Trainer::evaluation_pose(int frame) const {
  const Mat4& given = data_.frames.at(static_cast<std::size_t>(frame)).pose;
  if (!config_.train.pose_refine) return given;
  const int adj = adjacent_frame(frame, split_.train);
  return pfa_calibrate(given, data_.frames[static_cast<std::size_t>(adj)].pose,
                       poses_->matrix(static_cast<std::size_t>(adj)));
}

double Trainer::validation_psnr(int max_frames) {
  double sum = 0;
  int n = 0;
  for (int f : split_.validation) {
    if (n >= max_frames) break;
    const auto view = render_view(*field_, data_.camera, evaluation_pose(f), config_.sampling,
                                  config_.train.chunk_rays);
    sum += psnr(view.color, data_.frames[static_cast<std::size_t>(f)].rgb);
    ++n;
  }
  return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_text = config_.to_text();
  c.iteration = iter_;
  c.bounds = field_->box();
  auto record = [](const ad::Parameter& p, const AdamSlot* slot) {
    TensorRecord t;
    t.name = p.name();
    t.group = p.group();
    t.shape = p.shape();
    t.value = p.value;
    if (slot) {
      t.m = slot->m;
      t.v = slot->v;
      t.step = slot->step;
    }
    return t;
  };
  auto params = field_->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) c.tensors.push_back(record(*params[i], &adam_->slots()[i]));
  c.tensors.push_back(record(poses_->parameter(), pose_adam_ ? &pose_adam_->slots()[0] : nullptr));
  return c;
}

void Trainer::write_loss_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.precision(10);
  f << "iter,term,value\n";
  for (const auto& r : losses_) f << r.iter << ',' << r.term << ',' << format_metric(r.value) << '\n';
}

}  // namespace dualfield

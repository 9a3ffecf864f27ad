// SPDX-License-Identifier: Apache-2.0
// Command-line front end: generate, train, mesh, render, eval, pfa, config.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dualfield/checkpoint.hpp"
#include "dualfield/config.hpp"
#include "dualfield/data.hpp"
#include "dualfield/log.hpp"
#include "dualfield/meshing.hpp"
#include "dualfield/metrics.hpp"
#include "dualfield/poses.hpp"
#include "dualfield/trainer.hpp"

namespace fs = std::filesystem;
using namespace dualfield;

namespace {

struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path)) throw UserError(std::string(what) + " not found: " + path);
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw UserError(std::string(what) + " not found: " + path);
}

std::string frame_file(const std::string& dir, const char* prefix, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05d.%s", prefix, index, ext);
  return (fs::path(dir) / buf).string();
}

RunConfig config_from_checkpoint(const Checkpoint& ckpt) {
  RunConfig c;
  c.apply_text(ckpt.config_text);
  return c;
}

std::vector<ObservedFrame> observed_frames(const FrameSet& set, const std::vector<int>& ids,
                                           const std::vector<Mat4>& poses) {
  std::vector<ObservedFrame> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& f = set.frames[static_cast<std::size_t>(ids[i])];
    out.push_back({f.camera, poses[i], f.depth.data});
  }
  return out;
}

std::vector<Mat4> optimized_poses(const Checkpoint& ckpt, std::size_t frames) {
  const auto& t = ckpt.tensor("poses");
  if (t.shape.rows != frames) throw UserError("checkpoint pose table does not match the dataset frame count");
  std::vector<Mat4> out;
  for (std::size_t f = 0; f < frames; ++f) {
    PoseParam p;
    for (int a = 0; a < 3; ++a) {
      p.euler[a] = t.value[f * 6 + a];
      p.translation[a] = t.value[f * 6 + 3 + a];
    }
    out.push_back(p.to_matrix());
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dualfield: dual SDF/density radiance fields for RGB-D reconstruction"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "print progress");
  app.add_flag("-q,--quiet", quiet, "suppress warnings");

  // generate
  auto* gen = app.add_subcommand("generate", "synthesize an RGB-D dataset from a scene description");
  std::string gen_scene, gen_out;
  int gen_views = 50;
  std::uint64_t gen_seed = 0;
  bool gen_specular = false, gen_no_mesh = false;
  gen->add_option("--scene", gen_scene, "scene description file (default: built-in box room)");
  gen->add_option("-o,--out", gen_out, "output dataset directory")->required();
  gen->add_option("--views", gen_views, "number of views")->capture_default_str();
  gen->add_option("--seed", gen_seed, "noise seed")->capture_default_str();
  gen->add_flag("--specular-patch", gen_specular, "built-in scene with a glossy wall plate");
  gen->add_flag("--no-mesh", gen_no_mesh, "skip the ground-truth mesh");

  // train
  auto* tr = app.add_subcommand("train", "optimize a field on a dataset");
  std::string tr_data, tr_config, tr_out, tr_resume;
  std::vector<std::string> tr_set;
  bool tr_toy = false;
  tr->add_option("-d,--data", tr_data, "dataset directory")->required();
  tr->add_option("-c,--config", tr_config, "configuration file (section.key = value)");
  tr->add_option("-o,--out", tr_out, "output directory")->required();
  tr->add_option("--set", tr_set, "override, e.g. --set losses.lambda_d=0.5");
  tr->add_option("--resume", tr_resume, "checkpoint to resume from");
  tr->add_flag("--toy", tr_toy, "start from the desk-scale preset before applying the config");
  tr->footer(config_help());

  // config
  auto* cfg = app.add_subcommand("config", "print the configuration keys and defaults");
  bool cfg_toy = false;
  cfg->add_flag("--toy", cfg_toy, "print the desk-scale preset instead of the defaults");

  // mesh
  auto* me = app.add_subcommand("mesh", "extract a mesh from a checkpoint");
  std::string me_ckpt, me_out, me_data;
  double me_voxel = 0;
  me->add_option("--checkpoint", me_ckpt, "checkpoint file")->required();
  me->add_option("-o,--out", me_out, "output OBJ")->required();
  me->add_option("--voxel", me_voxel, "voxel size in meters (default from config)");
  me->add_option("--cull", me_data, "dataset whose training frames define the observed region");

  // render
  auto* re = app.add_subcommand("render", "render views of a checkpoint");
  std::string re_ckpt, re_data, re_out;
  std::vector<int> re_frames;
  bool re_pfa = false;
  re->add_option("--checkpoint", re_ckpt, "checkpoint file")->required();
  re->add_option("-d,--data", re_data, "dataset supplying cameras and poses")->required();
  re->add_option("-o,--out", re_out, "output directory")->required();
  re->add_option("--frames", re_frames, "frame indices (default: validation frames)");
  re->add_flag("--pfa", re_pfa, "correct poses by the adjacent optimized training frame");

  // eval
  auto* ev = app.add_subcommand("eval", "geometry and image metrics");
  std::string ev_pred, ev_gt, ev_ckpt, ev_data, ev_out;
  int ev_samples = 100000;
  double ev_threshold = 0.05;
  bool ev_pfa = false;
  ev->add_option("--mesh", ev_pred, "predicted mesh (OBJ)");
  ev->add_option("--gt", ev_gt, "ground-truth mesh (OBJ)");
  ev->add_option("--samples", ev_samples, "surface samples per mesh")->capture_default_str();
  ev->add_option("--threshold", ev_threshold, "F-score threshold in meters")->capture_default_str();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint for image metrics");
  ev->add_option("-d,--data", ev_data, "dataset with validation images");
  ev->add_flag("--pfa", ev_pfa, "correct validation poses with the adjacent training frame");
  ev->add_option("-o,--out", ev_out, "report file (key = value)");

  // pfa
  auto* pf = app.add_subcommand("pfa", "correct non-training poses by adjacent-frame alignment");
  std::string pf_ckpt, pf_data, pf_out;
  pf->add_option("--checkpoint", pf_ckpt, "checkpoint with optimized poses")->required();
  pf->add_option("-d,--data", pf_data, "dataset with the given poses")->required();
  pf->add_option("-o,--out", pf_out, "output directory for corrected pose files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  log::level() = quiet ? log::Level::quiet : verbose ? log::Level::info : log::Level::warn;

  try {
    if (*gen) {
      SceneSpec spec = gen_scene.empty() ? default_scene(gen_specular) : [&] {
        require_file(gen_scene, "scene file");
        return load_scene_spec(gen_scene);
      }();
      if (gen_views < 2) throw UserError("--views must be at least 2");
      if (gen_views < 10) log::warn("fewer than 10 views: the dataset has no validation frames");
      const auto scene = generate_scene(spec, gen_views, gen_seed, !gen_no_mesh);
      write_dataset(scene.frames, gen_out);
      std::ofstream(fs::path(gen_out) / "scene.txt") << spec.to_text();
      if (!gen_no_mesh) write_obj(scene.gt_mesh, (fs::path(gen_out) / "gt_mesh.obj").string());
      std::cout << "wrote " << gen_views << " frames to " << gen_out << '\n';
    } else if (*cfg) {
      std::cout << (cfg_toy ? toy_config().to_text() : config_help());
    } else if (*tr) {
      require_dir(tr_data, "dataset directory");
      FrameSet data = load_dataset(tr_data);
      fs::create_directories(tr_out);
      std::unique_ptr<Trainer> trainer;
      if (!tr_resume.empty()) {
        require_file(tr_resume, "checkpoint");
        const auto ckpt = load_checkpoint(tr_resume);
        trainer = std::make_unique<Trainer>(std::move(data), ckpt);
        if (!tr_config.empty() || !tr_set.empty())
          log::warn("--config/--set are ignored when resuming; the checkpoint's configuration is used");
      } else {
        RunConfig config = tr_toy ? toy_config() : RunConfig{};
        if (!tr_config.empty()) {
          require_file(tr_config, "config file");
          std::ifstream f(tr_config);
          std::stringstream buf;
          buf << f.rdbuf();
          config.apply_text(buf.str());
        }
        for (const auto& s : tr_set) config.set(s);
        config.validate();
        trainer = std::make_unique<Trainer>(std::move(data), config);
      }
      std::ofstream(fs::path(tr_out) / "config.txt") << trainer->config().to_text();
      const std::string ckpt_path = (fs::path(tr_out) / "checkpoint.bin").string();
      trainer->on_checkpoint = [&](const Trainer& t) {
        save_checkpoint(t.checkpoint(), ckpt_path);
        t.write_loss_csv((fs::path(tr_out) / "losses.csv").string());
      };
      trainer->run();
      save_checkpoint(trainer->checkpoint(), ckpt_path);
      trainer->write_loss_csv((fs::path(tr_out) / "losses.csv").string());
      std::cout << "lambda_rgb = " << trainer->config().losses.lambda_rgb
                << "\nlambda_align = " << trainer->config().losses.lambda_align << '\n';
      if (!trainer->split().validation.empty()) {
        std::cout << "validation_psnr = " << format_metric(trainer->validation_psnr(trainer->config().train.eval_frames))
                  << '\n';
      }
      std::cout << "checkpoint = " << ckpt_path << '\n';
    } else if (*me) {
      require_file(me_ckpt, "checkpoint");
      const auto ckpt = load_checkpoint(me_ckpt);
      const RunConfig config = config_from_checkpoint(ckpt);
      auto field = build_field(config, ckpt.bounds);
      for (auto* p : field->parameters()) p->value = ckpt.tensor(p->name()).value;
      const double voxel = me_voxel > 0 ? me_voxel : config.mesh.voxel;
      TriangleMesh mesh = extract_mesh(*field, voxel);
      if (!me_data.empty()) {
        require_dir(me_data, "dataset directory");
        const auto data = load_dataset(me_data);
        const auto split = split_frames(static_cast<int>(data.frames.size()));
        const auto poses = optimized_poses(ckpt, data.frames.size());
        std::vector<Mat4> train_poses;
        for (int f : split.train) train_poses.push_back(poses[static_cast<std::size_t>(f)]);
        mesh = cull_unobserved(mesh, observed_frames(data, split.train, train_poses),
                               config.mesh.cull_slack_voxels * voxel);
      }
      write_obj(mesh, me_out);
      std::cout << "vertices = " << mesh.vertices.size() << "\ntriangles = " << mesh.triangles.size() << '\n';
    } else if (*re) {
      require_file(re_ckpt, "checkpoint");
      require_dir(re_data, "dataset directory");
      const auto ckpt = load_checkpoint(re_ckpt);
      Trainer trainer(load_dataset(re_data), ckpt);
      const auto& data = trainer.data();
      if (re_frames.empty()) re_frames = trainer.split().validation;
      fs::create_directories(re_out);
      for (int f : re_frames) {
        if (f < 0 || static_cast<std::size_t>(f) >= data.frames.size())
          throw UserError("frame " + std::to_string(f) + " is not in the dataset");
        const auto& fr = data.frames[static_cast<std::size_t>(f)];
        const Mat4 pose = re_pfa ? pfa_calibrate(fr.pose, data.frames[static_cast<std::size_t>(adjacent_frame(f, trainer.split().train))].pose,
                                                 trainer.poses().matrix(static_cast<std::size_t>(adjacent_frame(f, trainer.split().train))))
                                 : fr.pose;
        const auto v = render_view(trainer.field(), data.camera, pose, trainer.config().sampling,
                                   trainer.config().train.chunk_rays);
        write_png_rgb(frame_file(re_out, "color", fr.index, "png"), v.color);
        write_png_rgb(frame_file(re_out, "diffuse", fr.index, "png"), v.diffuse);
        write_png_rgb(frame_file(re_out, "specular", fr.index, "png"), v.specular);
        write_png_depth(frame_file(re_out, "depth", fr.index, "png"), v.depth);
        std::cout << "frame " << fr.index << " psnr = " << format_metric(psnr(v.color, fr.rgb)) << '\n';
      }
    } else if (*ev) {
      std::ostringstream report;
      if (!ev_pred.empty() || !ev_gt.empty()) {
        if (ev_pred.empty() || ev_gt.empty()) throw UserError("--mesh and --gt must be given together");
        require_file(ev_pred, "mesh");
        require_file(ev_gt, "ground-truth mesh");
        if (ev_samples < 1) throw UserError("--samples must be positive");
        const auto rep = geometry_metrics(read_obj(ev_pred), read_obj(ev_gt), static_cast<std::size_t>(ev_samples),
                                          ev_threshold);
        report << rep.to_text();
      }
      if (!ev_ckpt.empty()) {
        if (ev_data.empty()) throw UserError("--checkpoint needs --data for image metrics");
        require_file(ev_ckpt, "checkpoint");
        require_dir(ev_data, "dataset directory");
        Trainer trainer(load_dataset(ev_data), load_checkpoint(ev_ckpt));
        double psum = 0, ssum = 0;
        int n = 0;
        for (int f : trainer.split().validation) {
          const auto& fr = trainer.data().frames[static_cast<std::size_t>(f)];
          const int adj = adjacent_frame(f, trainer.split().train);
          const Mat4 pose = ev_pfa ? pfa_calibrate(fr.pose, trainer.data().frames[static_cast<std::size_t>(adj)].pose,
                                                   trainer.poses().matrix(static_cast<std::size_t>(adj)))
                                   : fr.pose;
          const auto v = render_view(trainer.field(), trainer.data().camera, pose, trainer.config().sampling,
                                     trainer.config().train.chunk_rays);
          const double p = psnr(v.color, fr.rgb), s = ssim(v.color, fr.rgb);
          report << "frame_" << fr.index << "_psnr = " << format_metric(p) << '\n'
                 << "frame_" << fr.index << "_ssim = " << format_metric(s) << '\n';
          psum += p;
          ssum += s;
          ++n;
        }
        if (n) report << "psnr = " << format_metric(psum / n) << "\nssim = " << format_metric(ssum / n) << '\n';
      }
      if (report.str().empty()) throw UserError("nothing to evaluate: give --mesh/--gt and/or --checkpoint/--data");
      std::cout << report.str();
      if (!ev_out.empty()) {
        std::ofstream f(ev_out);
        if (!f) throw UserError("cannot write " + ev_out);
        f << report.str();
      }
    } else if (*pf) {
      require_file(pf_ckpt, "checkpoint");
      require_dir(pf_data, "dataset directory");
      const auto ckpt = load_checkpoint(pf_ckpt);
      const auto data = load_dataset(pf_data);
      const auto split = split_frames(static_cast<int>(data.frames.size()));
      if (split.train.empty()) throw UserError("dataset has no training frames");
      const auto opt = optimized_poses(ckpt, data.frames.size());
      fs::create_directories(pf_out);
      for (std::size_t f = 0; f < data.frames.size(); ++f) {
        const int adj = adjacent_frame(static_cast<int>(f), split.train);
        const Mat4 out = pfa_calibrate(data.frames[f].pose, data.frames[static_cast<std::size_t>(adj)].pose,
                                       opt[static_cast<std::size_t>(adj)]);
        char name[32];
        std::snprintf(name, sizeof name, "%05d.txt", data.frames[f].index);
        write_pose_file((fs::path(pf_out) / name).string(), out);
      }
      std::cout << "wrote " << data.frames.size() << " poses to " << pf_out << '\n';
    }
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

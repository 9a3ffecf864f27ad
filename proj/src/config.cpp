// SPDX-License-Identifier: Apache-2.0
#include "dualfield/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <type_traits>

namespace dualfield {

namespace {

struct Entry {
  std::string key;
  std::string origin;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config " + key + ": expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config " + key + ": expected an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config " + key + ": expected true/false, got '" + v + "'");
}

template <class T>
Entry num(std::string key, std::string origin, std::string help, T RunConfig::*section,
          double T::*field) {
  return {key, std::move(origin), std::move(help),
          [section, field](const RunConfig& c) { return fmt(c.*section.*field); },
          [section, field, key](RunConfig& c, const std::string& v) { c.*section.*field = to_double(key, v); }};
}

template <class T, class I>
Entry integer(std::string key, std::string origin, std::string help, T RunConfig::*section,
              I T::*field) {
  return {key, std::move(origin), std::move(help),
          [section, field](const RunConfig& c) { return std::to_string(c.*section.*field); },
          [section, field, key](RunConfig& c, const std::string& v) {
            const long long x = to_int(key, v);
            if (std::is_unsigned_v<I> && x < 0) throw std::invalid_argument("config " + key + ": must be >= 0");
            c.*section.*field = static_cast<I>(x);
          }};
}

template <class T>
Entry boolean(std::string key, std::string origin, std::string help, T RunConfig::*section,
              bool T::*field) {
  return {key, std::move(origin), std::move(help),
          [section, field](const RunConfig& c) { return std::string(c.*section.*field ? "true" : "false"); },
          [section, field, key](RunConfig& c, const std::string& v) { c.*section.*field = to_bool(key, v); }};
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    const std::string pub = "published", own = "chosen";
    using R = RunConfig;
    std::vector<Entry> e;
    e.push_back({"dense.cell_sizes", pub, "geometry grid cell sizes in meters, comma separated",
                 [](const R& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.dense.cell_sizes.size(); ++i)
                     s += (i ? "," : "") + fmt(c.dense.cell_sizes[i]);
                   return s;
                 },
                 [](R& c, const std::string& v) {
                   std::vector<double> sizes;
                   std::stringstream in(v);
                   std::string tok;
                   while (std::getline(in, tok, ',')) sizes.push_back(to_double("dense.cell_sizes", trim(tok)));
                   c.dense.cell_sizes = sizes;
                 }});
    e.push_back(integer("dense.features_per_level", pub, "features per geometry grid level", &R::dense,
                        &DenseGridConfig::features_per_level));
    e.push_back(num("dense.init_range", own, "uniform init half-range of grid features", &R::dense,
                    &DenseGridConfig::init_range));
    e.push_back(integer("hash.levels", pub, "color hash grid levels", &R::hash, &HashGridConfig::levels));
    e.push_back(integer("hash.features_per_level", pub, "features per hash level", &R::hash,
                        &HashGridConfig::features_per_level));
    e.push_back(integer("hash.min_resolution", pub, "coarsest hash resolution", &R::hash,
                        &HashGridConfig::min_resolution));
    e.push_back(integer("hash.max_resolution", pub, "finest hash resolution", &R::hash,
                        &HashGridConfig::max_resolution));
    e.push_back(integer("hash.log2_table_size", pub, "log2 of hash table rows per level", &R::hash,
                        &HashGridConfig::log2_table_size));
    e.push_back(num("hash.init_range", own, "uniform init half-range of hash features", &R::hash,
                    &HashGridConfig::init_range));
    e.push_back(integer("field.hidden", pub, "decoder hidden width", &R::field, &FieldConfig::hidden));
    e.push_back(integer("field.direction_octaves", own, "view direction encoding frequencies", &R::field,
                        &FieldConfig::direction_octaves));
    e.push_back(num("field.sdf_bias_scale", own, "initial SDF as a fraction of the scene extent", &R::field,
                    &FieldConfig::sdf_bias_scale));
    e.push_back(num("field.specular_bias", own, "initial pre-sigmoid specular output", &R::field,
                    &FieldConfig::specular_bias));
    e.push_back(integer("sampling.coarse", pub, "stratified samples per ray", &R::sampling,
                        &SamplingConfig::coarse));
    e.push_back(integer("sampling.fine_rounds", pub, "hierarchical sampling rounds", &R::sampling,
                        &SamplingConfig::fine_rounds));
    e.push_back(integer("sampling.fine_per_round", pub, "samples added per round", &R::sampling,
                        &SamplingConfig::fine_per_round));
    e.push_back(num("sampling.min_near", own, "minimum near distance in meters", &R::sampling,
                    &SamplingConfig::min_near));
    e.push_back(num("losses.lambda_d", pub, "self-supervised diffuse color weight", &R::losses,
                    &LossWeights::lambda_d));
    e.push_back(num("losses.lambda_depth", pub, "SDF-branch depth weight", &R::losses,
                    &LossWeights::lambda_depth));
    e.push_back(num("losses.lambda_eik", pub, "eikonal weight", &R::losses, &LossWeights::lambda_eik));
    e.push_back(num("losses.lambda_fs", pub, "free-space weight", &R::losses, &LossWeights::lambda_fs));
    e.push_back(num("losses.lambda_sdf", pub, "truncation band SDF weight", &R::losses,
                    &LossWeights::lambda_sdf));
    e.push_back(num("losses.lambda_smooth", pub, "gradient smoothness weight", &R::losses,
                    &LossWeights::lambda_smooth));
    e.push_back(num("losses.lambda_rgb", pub, "color weight", &R::losses, &LossWeights::lambda_rgb));
    e.push_back(num("losses.lambda_align", pub, "density-branch depth alignment weight", &R::losses,
                    &LossWeights::lambda_align));
    e.push_back(num("losses.truncation", own, "truncation distance in meters; also sets initial sharpness",
                    &R::losses, &LossWeights::truncation));
    e.push_back(num("losses.fs_exponent", own, "free-space exponent, 0 means 2 / truncation", &R::losses,
                    &LossWeights::fs_exponent));
    e.push_back(num("losses.eps_smooth", own, "smoothness perturbation in meters", &R::losses,
                    &LossWeights::eps_smooth));
    e.push_back(num("losses.eps_grad", own, "finite-difference step for SDF gradients", &R::losses,
                    &LossWeights::eps_grad));
    e.push_back(integer("losses.reg_points_per_ray", own, "eikonal/smoothness samples per ray, 0 = all",
                        &R::losses, &LossWeights::reg_points_per_ray));
    e.push_back(num("optim.lr_mlp", pub, "decoder learning rate", &R::adam, &AdamConfig::lr_mlp));
    e.push_back(num("optim.lr_grid", pub, "grid learning rate", &R::adam, &AdamConfig::lr_grid));
    e.push_back(num("optim.lr_pose", own, "pose learning rate", &R::adam, &AdamConfig::lr_pose));
    e.push_back(num("optim.beta1", own, "Adam beta1", &R::adam, &AdamConfig::beta1));
    e.push_back(num("optim.beta2", own, "Adam beta2", &R::adam, &AdamConfig::beta2));
    e.push_back(num("optim.eps", own, "Adam epsilon", &R::adam, &AdamConfig::eps));
    e.push_back(integer("optim.first_decay", pub, "iteration of the first decay", &R::schedule,
                        &StepSchedule::first_decay));
    e.push_back(integer("optim.second_decay", pub, "iteration of the second decay", &R::schedule,
                        &StepSchedule::second_decay));
    e.push_back(num("optim.decay", pub, "multiplier applied at each decay", &R::schedule,
                    &StepSchedule::factor));
    e.push_back(integer("train.rays_per_iter", pub, "rays per iteration", &R::train,
                        &TrainConfig::rays_per_iter));
    e.push_back(integer("train.iters", pub, "training iterations", &R::train, &TrainConfig::iters));
    e.push_back(integer("train.seed", own, "random seed", &R::train, &TrainConfig::seed));
    e.push_back(boolean("train.pose_refine", own, "optimize training poses", &R::train,
                        &TrainConfig::pose_refine));
    e.push_back(integer("train.pose_warmup", own, "iteration at which pose refinement starts", &R::train,
                        &TrainConfig::pose_warmup));
    e.push_back(integer("train.checkpoint_every", own, "checkpoint period in iterations, 0 = final only",
                        &R::train, &TrainConfig::checkpoint_every));
    e.push_back(integer("train.eval_every", own, "validation period in iterations, 0 = never", &R::train,
                        &TrainConfig::eval_every));
    e.push_back(integer("train.eval_frames", own, "validation frames rendered per evaluation", &R::train,
                        &TrainConfig::eval_frames));
    e.push_back(integer("train.chunk_rays", own, "rays per tape chunk", &R::train, &TrainConfig::chunk_rays));
    e.push_back(integer("train.log_every", own, "progress line period", &R::train, &TrainConfig::log_every));
    e.push_back(num("mesh.voxel", own, "marching cubes voxel in meters", &R::mesh, &MeshConfig::voxel));
    e.push_back(num("mesh.cull_slack_voxels", own, "culling depth slack in voxels", &R::mesh,
                    &MeshConfig::cull_slack_voxels));
    e.push_back(integer("eval.samples", own, "surface samples per mesh", &R::eval, &EvalConfig::samples));
    e.push_back(num("eval.threshold", own, "F-score distance threshold in meters", &R::eval,
                    &EvalConfig::threshold));
    e.push_back(integer("eval.seed", own, "surface sampling seed", &R::eval, &EvalConfig::seed));
    return e;
  }();
  return entries;
}

const Entry& find(const std::string& key) {
  for (const auto& e : registry())
    if (e.key == key) return e;
  throw std::invalid_argument("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  if (dense.cell_sizes.empty()) throw std::invalid_argument("dense.cell_sizes must not be empty");
  for (double c : dense.cell_sizes)
    if (!(c > 0)) throw std::invalid_argument("dense.cell_sizes must be positive");
  if (dense.features_per_level < 1 || hash.features_per_level < 1)
    throw std::invalid_argument("features_per_level must be >= 1");
  if (hash.levels < 1) throw std::invalid_argument("hash.levels must be >= 1");
  if (hash.min_resolution < 1 || hash.max_resolution < hash.min_resolution)
    throw std::invalid_argument("hash resolutions must satisfy 1 <= min <= max");
  if (hash.log2_table_size < 4 || hash.log2_table_size > 30)
    throw std::invalid_argument("hash.log2_table_size must be in [4, 30]");
  if (field.hidden < 1) throw std::invalid_argument("field.hidden must be >= 1");
  if (field.direction_octaves < 0) throw std::invalid_argument("field.direction_octaves must be >= 0");
  if (sampling.coarse < 2) throw std::invalid_argument("sampling.coarse must be >= 2");
  if (sampling.fine_rounds < 0 || sampling.fine_per_round < 0)
    throw std::invalid_argument("fine sampling counts must be >= 0");
  if (!(sampling.min_near >= 0)) throw std::invalid_argument("sampling.min_near must be >= 0");
  losses.validate();
  if (!(adam.lr_mlp >= 0 && adam.lr_grid >= 0 && adam.lr_pose >= 0))
    throw std::invalid_argument("learning rates must be >= 0");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0))
    throw std::invalid_argument("Adam betas must be in [0,1) and eps > 0");
  if (schedule.first_decay < 0 || schedule.second_decay < schedule.first_decay)
    throw std::invalid_argument("optim decays must satisfy 0 <= first <= second");
  if (!(schedule.factor > 0 && schedule.factor <= 1)) throw std::invalid_argument("optim.decay must be in (0,1]");
  if (train.rays_per_iter < 1) throw std::invalid_argument("train.rays_per_iter must be >= 1");
  if (train.iters < 0) throw std::invalid_argument("train.iters must be >= 0");
  if (train.chunk_rays < 1) throw std::invalid_argument("train.chunk_rays must be >= 1");
  if (train.pose_warmup < 0 || train.checkpoint_every < 0 || train.eval_every < 0 || train.eval_frames < 0 ||
      train.log_every < 0)
    throw std::invalid_argument("train periods must be >= 0");
  if (!(mesh.voxel > 0)) throw std::invalid_argument("mesh.voxel must be positive");
  if (!(mesh.cull_slack_voxels >= 0)) throw std::invalid_argument("mesh.cull_slack_voxels must be >= 0");
  if (eval.samples < 1) throw std::invalid_argument("eval.samples must be >= 1");
  if (!(eval.threshold > 0)) throw std::invalid_argument("eval.threshold must be positive");
}

std::string RunConfig::to_text() const {
  std::ostringstream s;
  for (const auto& e : registry()) s << e.key << " = " << e.get(*this) << '\n';
  s << "# sampling.total = " << sampling.total() << '\n';
  return s.str();
}

void RunConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value'");
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("override '" + assignment + "' must be key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (value.empty()) throw std::invalid_argument("config " + key + ": empty value");
  find(key).set(*this, value);
}

std::string RunConfig::get(const std::string& key) const { return find(key).get(*this); }

std::vector<ConfigKeyInfo> config_keys() {
  const RunConfig defaults;
  std::vector<ConfigKeyInfo> out;
  for (const auto& e : registry()) out.push_back({e.key, e.get(defaults), e.origin, e.help});
  return out;
}

std::string config_help() {
  std::ostringstream s;
  s << "Configuration keys (section.key = default  [origin]  description):\n";
  for (const auto& k : config_keys())
    s << "  " << k.key << " = " << k.default_value << "  [" << k.origin << "]  " << k.help << '\n';
  return s.str();
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read config file " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  RunConfig c;
  c.apply_text(buf.str());
  c.validate();
  return c;
}

RunConfig toy_config(int iters) {
  RunConfig c;
  c.train.iters = iters;
  c.train.rays_per_iter = 512;
  c.train.eval_every = 0;
  c.train.checkpoint_every = 0;
  c.hash.log2_table_size = 15;
  c.losses.reg_points_per_ray = 16;
  c.schedule.first_decay = iters / 2;
  c.schedule.second_decay = iters * 3 / 4;
  return c;
}

}  // namespace dualfield

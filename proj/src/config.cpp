#include "mpsplat/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mpsplat {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& value, const std::string& expected) {
  throw ConfigError(section + "." + key + ": expected " + expected + ", got '" + value +
                    "'");
}

}  // namespace

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  const auto s = sections.find(section);
  return s != sections.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
  const auto s = sections.find(section);
  if (s == sections.end()) return fallback;
  const auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

std::string ConfigFile::require_string(const std::string& section,
                                       const std::string& key) const {
  if (!has(section, key)) throw ConfigError(section + "." + key + ": missing");
  return sections.at(section).at(key);
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = sections.at(section).at(key);
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad_value(section, key, v, "number");
    return d;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    bad_value(section, key, v, "number");
  }
}

int ConfigFile::get_int(const std::string& section, const std::string& key,
                        int fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = sections.at(section).at(key);
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(section, key, v, "integer");
  return out;
}

uint64_t ConfigFile::require_u64(const std::string& section, const std::string& key) const {
  const std::string v = require_string(section, key);
  uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    bad_value(section, key, v, "unsigned integer");
  return out;
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = sections.at(section).at(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(section, key, v, "boolean");
}

ConfigFile parse_config(const std::string& text) {
  ConfigFile file;
  std::string section;  // top-level keys live in the "" section
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      file.sections[section];
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    file.sections[section][key] = trim(line.substr(eq + 1));
  }
  return file;
}

ConfigFile parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

namespace {

TrajectoryKind parse_trajectory(const ConfigFile& f) {
  const std::string v = f.get_string("scene", "trajectory", "orbit");
  if (v == "orbit") return TrajectoryKind::Orbit;
  if (v == "line") return TrajectoryKind::Line;
  if (v == "random_walk") return TrajectoryKind::RandomWalk;
  throw ConfigError("scene.trajectory: expected orbit|line|random_walk, got '" + v + "'");
}

SchedPolicy parse_policy(const std::string& v, const std::string& path) {
  if (v == "on_demand") return SchedPolicy::OnDemand;
  if (v == "always") return SchedPolicy::Always;
  if (v == "fixed") return SchedPolicy::FixedInterval;
  throw ConfigError(path + ": expected on_demand|always|fixed, got '" + v + "'");
}

CorruptionMode parse_corruption_mode(const std::string& v, const std::string& path) {
  if (v == "none") return CorruptionMode::None;
  if (v == "dilate_erode") return CorruptionMode::DilateErode;
  if (v == "dropout") return CorruptionMode::Dropout;
  if (v == "delay") return CorruptionMode::Delay;
  throw ConfigError(path + ": expected none|dilate_erode|dropout|delay, got '" + v + "'");
}

CorruptionSeverity parse_severity(const std::string& v, const std::string& path) {
  if (v == "mild") return CorruptionSeverity::Mild;
  if (v == "severe") return CorruptionSeverity::Severe;
  throw ConfigError(path + ": expected mild|severe, got '" + v + "'");
}

}  // namespace

ExperimentSpec load_experiment(const ConfigFile& f) {
  ExperimentSpec spec;
  spec.name = f.get_string("experiment", "name", spec.name);
  spec.out_dir = f.get_string("experiment", "out_dir", spec.out_dir);

  SceneConfig& s = spec.scene;
  if (!f.has("scene", "seed")) throw ConfigError("scene.seed: missing");
  s.seed = f.require_u64("scene", "seed");
  s.n_static = f.get_int("scene", "n_static", s.n_static);
  s.n_dynamic_objects = f.get_int("scene", "n_dynamic_objects", s.n_dynamic_objects);
  s.gaussians_per_object = f.get_int("scene", "gaussians_per_object", s.gaussians_per_object);
  s.extent = f.get_double("scene", "extent", s.extent);
  s.object_speed = f.get_double("scene", "object_speed", s.object_speed);
  s.object_spread = f.get_double("scene", "object_spread", s.object_spread);
  s.trajectory = parse_trajectory(f);
  s.trajectory_step = f.get_double("scene", "trajectory_step", s.trajectory_step);
  s.n_frames = f.get_int("scene", "n_frames", s.n_frames);
  s.width = f.get_int("scene", "width", s.width);
  s.height = f.get_int("scene", "height", s.height);
  s.feature_density = f.get_int("scene", "feature_density", s.feature_density);
  s.pixel_noise_sigma = f.get_double("scene", "pixel_noise_sigma", s.pixel_noise_sigma);
  s.depth_noise_sigma = f.get_double("scene", "depth_noise_sigma", s.depth_noise_sigma);
  s.fps = f.get_double("scene", "fps", s.fps);

  PipelineConfig& p = spec.pipeline;
  p.seed = s.seed;
  p.mode = f.get_string("pipeline", "mode", "sequential") == "pipelined"
               ? PipelineMode::Pipelined
               : PipelineMode::SequentialDeterministic;
  p.sched_policy =
      parse_policy(f.get_string("pipeline", "sched", "on_demand"), "pipeline.sched");
  p.keyframe_every = f.get_int("pipeline", "keyframe_every", p.keyframe_every);
  p.soft_rejection = f.get_bool("pipeline", "soft_rejection", p.soft_rejection);
  p.mapping_steps = f.get_int("pipeline", "mapping_steps", p.mapping_steps);
  p.mapping_lr = f.get_double("pipeline", "mapping_lr", p.mapping_lr);
  p.edge_threshold = f.get_double("pipeline", "edge_threshold", p.edge_threshold);

  p.mp.kernel_bandwidth = f.get_double("mp", "kernel_bandwidth", p.mp.kernel_bandwidth);
  p.mp.mu_bg = f.get_double("mp", "mu_bg", p.mp.mu_bg);
  p.mp.c_bg = f.get_double("mp", "c_bg", p.mp.c_bg);
  p.mp.lambda_stat = f.get_double("mp", "lambda_stat", p.mp.lambda_stat);
  p.mp.sigma_g = f.get_double("mp", "sigma_g", p.mp.sigma_g);
  p.mp.sigma_c = f.get_double("mp", "sigma_c", p.mp.sigma_c);
  p.mp.lambda_u = f.get_double("mp", "lambda_u", p.mp.lambda_u);
  p.mp.alpha_min = f.get_double("mp", "alpha_min", p.mp.alpha_min);
  p.mp.alpha_max = f.get_double("mp", "alpha_max", p.mp.alpha_max);
  p.mp.mp_init = f.get_double("mp", "mp_init", p.mp.mp_init);
  p.mp.prior_table[1] = f.get_double("mp", "mu_class_1", 0.9);

  p.sched.w_u = f.get_double("scheduler", "w_u", p.sched.w_u);
  p.sched.w_r = f.get_double("scheduler", "w_r", p.sched.w_r);
  p.sched.theta = f.get_double("scheduler", "theta", p.sched.theta);
  p.sched.n_max = f.get_int("scheduler", "n_max", p.sched.n_max);
  p.sched.rho = f.get_double("scheduler", "rho", p.sched.rho);
  p.sched.e_ref = f.get_double("scheduler", "e_ref", p.sched.e_ref);

  p.epi.epsilon_px = f.get_double("epipolar", "epsilon_px", p.epi.epsilon_px);
  p.epi.min_matches = f.get_int("epipolar", "min_matches", p.epi.min_matches);
  p.epi.densify_clone_sigma =
      f.get_double("epipolar", "densify_clone_sigma", p.epi.densify_clone_sigma);

  p.weights.lambda1 = f.get_double("losses", "lambda1", p.weights.lambda1);
  p.weights.lambda2 = f.get_double("losses", "lambda2", p.weights.lambda2);
  p.weights.lambda3 = f.get_double("losses", "lambda3", p.weights.lambda3);
  p.weights.lambda4 = f.get_double("losses", "lambda4", p.weights.lambda4);
  p.weights.huber_delta = f.get_double("losses", "huber_delta", p.weights.huber_delta);

  p.lm.max_iterations = f.get_int("lm", "max_iterations", p.lm.max_iterations);

  p.cost.semantic_cost_ms = f.get_double("cost", "semantic_ms", p.cost.semantic_cost_ms);
  p.cost.track_cost_ms = f.get_double("cost", "track_ms", p.cost.track_cost_ms);
  p.cost.map_cost_ms = f.get_double("cost", "map_ms", p.cost.map_cost_ms);
  p.cost.mp_cost_ms = f.get_double("cost", "mp_ms", p.cost.mp_cost_ms);

  p.no_mp = f.get_bool("ablation", "no_mp", p.no_mp);
  p.no_epi_verify = f.get_bool("ablation", "no_epi_verify", p.no_epi_verify);
  p.no_backend = f.get_bool("ablation", "no_backend", p.no_backend);
  p.instant_mp = f.get_bool("ablation", "instant_mp", p.instant_mp);
  p.fixed_alpha = f.get_bool("ablation", "fixed_alpha", p.fixed_alpha);
  p.fixed_alpha_value = f.get_double("ablation", "fixed_alpha_value", p.fixed_alpha_value);
  p.k_zero = f.get_bool("ablation", "k_zero", p.k_zero);
  p.k_one = f.get_bool("ablation", "k_one", p.k_one);
  try {
    (void)p.resolved();  // validate; the pipeline applies the policy itself
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("ablation: ") + e.what());
  }

  MaskCorruption& c = spec.corruption;
  c.mode = parse_corruption_mode(f.get_string("corruption", "mode", "none"),
                                 "corruption.mode");
  if (c.mode != CorruptionMode::None) {
    c.severity = parse_severity(f.get_string("corruption", "severity", "mild"),
                                "corruption.severity");
    c = make_corruption(c.mode, c.severity);
    if (f.has("corruption", "magnitude"))
      c.magnitude = f.get_double("corruption", "magnitude", c.magnitude);
  }
  return spec;
}

std::string resolved_config_text(const ExperimentSpec& spec) {
  std::ostringstream out;
  out.precision(17);
  const SceneConfig& s = spec.scene;
  const PipelineConfig& p = spec.pipeline;
  const char* traj = s.trajectory == TrajectoryKind::Orbit  ? "orbit"
                     : s.trajectory == TrajectoryKind::Line ? "line"
                                                            : "random_walk";
  const char* sched = p.sched_policy == SchedPolicy::OnDemand ? "on_demand"
                      : p.sched_policy == SchedPolicy::Always ? "always"
                                                              : "fixed";
  const char* corr = spec.corruption.mode == CorruptionMode::None          ? "none"
                     : spec.corruption.mode == CorruptionMode::DilateErode ? "dilate_erode"
                     : spec.corruption.mode == CorruptionMode::Dropout     ? "dropout"
                                                                           : "delay";
  out << "[experiment]\nname = " << spec.name << "\nout_dir = " << spec.out_dir << "\n";
  out << "[scene]\nseed = " << s.seed << "\nn_static = " << s.n_static
      << "\nn_dynamic_objects = " << s.n_dynamic_objects
      << "\ngaussians_per_object = " << s.gaussians_per_object
      << "\nextent = " << s.extent << "\nobject_speed = " << s.object_speed
      << "\nobject_spread = " << s.object_spread << "\ntrajectory = " << traj << "\ntrajectory_step = " << s.trajectory_step
      << "\nn_frames = " << s.n_frames << "\nwidth = " << s.width
      << "\nheight = " << s.height << "\nfeature_density = " << s.feature_density
      << "\npixel_noise_sigma = " << s.pixel_noise_sigma
      << "\ndepth_noise_sigma = " << s.depth_noise_sigma << "\nfps = " << s.fps << "\n";
  out << "[pipeline]\nmode = "
      << (p.mode == PipelineMode::Pipelined ? "pipelined" : "sequential")
      << "\nsched = " << sched << "\nkeyframe_every = " << p.keyframe_every
      << "\nsoft_rejection = " << (p.soft_rejection ? "true" : "false")
      << "\nmapping_steps = " << p.mapping_steps << "\nmapping_lr = " << p.mapping_lr
      << "\nedge_threshold = " << p.edge_threshold << "\n";
  out << "[mp]\nkernel_bandwidth = " << p.mp.kernel_bandwidth
      << "\nmu_bg = " << p.mp.mu_bg << "\nc_bg = " << p.mp.c_bg
      << "\nlambda_stat = " << p.mp.lambda_stat << "\nsigma_g = " << p.mp.sigma_g
      << "\nsigma_c = " << p.mp.sigma_c << "\nlambda_u = " << p.mp.lambda_u
      << "\nalpha_min = " << p.mp.alpha_min << "\nalpha_max = " << p.mp.alpha_max
      << "\nmp_init = " << p.mp.mp_init << "\nmu_class_1 = "
      << (p.mp.prior_table.count(1) ? p.mp.prior_table.at(1) : 0.9) << "\n";
  out << "[scheduler]\nw_u = " << p.sched.w_u << "\nw_r = " << p.sched.w_r
      << "\ntheta = " << p.sched.theta << "\nn_max = " << p.sched.n_max
      << "\nrho = " << p.sched.rho << "\ne_ref = " << p.sched.e_ref << "\n";
  out << "[epipolar]\nepsilon_px = " << p.epi.epsilon_px
      << "\nmin_matches = " << p.epi.min_matches
      << "\ndensify_clone_sigma = " << p.epi.densify_clone_sigma << "\n";
  out << "[losses]\nlambda1 = " << p.weights.lambda1 << "\nlambda2 = " << p.weights.lambda2
      << "\nlambda3 = " << p.weights.lambda3 << "\nlambda4 = " << p.weights.lambda4
      << "\nhuber_delta = " << p.weights.huber_delta << "\n";
  out << "[lm]\nmax_iterations = " << p.lm.max_iterations << "\n";
  out << "[cost]\nsemantic_ms = " << p.cost.semantic_cost_ms
      << "\ntrack_ms = " << p.cost.track_cost_ms << "\nmap_ms = " << p.cost.map_cost_ms
      << "\nmp_ms = " << p.cost.mp_cost_ms << "\n";
  out << "[ablation]\nno_mp = " << (p.no_mp ? "true" : "false")
      << "\nno_epi_verify = " << (p.no_epi_verify ? "true" : "false")
      << "\nno_backend = " << (p.no_backend ? "true" : "false")
      << "\ninstant_mp = " << (p.instant_mp ? "true" : "false")
      << "\nfixed_alpha = " << (p.fixed_alpha ? "true" : "false")
      << "\nfixed_alpha_value = " << p.fixed_alpha_value
      << "\nk_zero = " << (p.k_zero ? "true" : "false")
      << "\nk_one = " << (p.k_one ? "true" : "false") << "\n";
  out << "[corruption]\nmode = " << corr << "\nseverity = "
      << (spec.corruption.severity == CorruptionSeverity::Severe ? "severe" : "mild")
      << "\nmagnitude = " << spec.corruption.magnitude << "\n";
  return out.str();
}

}  // namespace mpsplat

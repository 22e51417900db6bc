#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mpsplat/config.hpp"
#include "mpsplat/metrics.hpp"
#include "mpsplat/pipeline.hpp"
#include "mpsplat/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace mpsplat;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// All volatile data lives in the single generated_at field; everything else
// is a pure function of inputs and seeds.
void write_manifest(const fs::path& dir, const std::string& command,
                    const std::vector<std::string>& outputs) {
  ordered_json j;
  j["command"] = command;
  j["outputs"] = outputs;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["generated_at"] = buf;
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

struct CliOverrides {
  std::optional<uint64_t> seed;
  std::string sched;
  std::string corruption;
  std::string out;
};

ExperimentSpec load_spec(const std::string& config_path, const CliOverrides& ov) {
  ExperimentSpec spec = load_experiment(parse_config_file(config_path));
  if (ov.seed) {
    spec.scene.seed = *ov.seed;
    spec.pipeline.seed = *ov.seed;
  }
  if (!ov.sched.empty()) {
    if (ov.sched == "on_demand") spec.pipeline.sched_policy = SchedPolicy::OnDemand;
    else if (ov.sched == "always") spec.pipeline.sched_policy = SchedPolicy::Always;
    else if (ov.sched == "fixed") spec.pipeline.sched_policy = SchedPolicy::FixedInterval;
    else throw ConfigError("--sched: expected on_demand|always|fixed, got '" + ov.sched + "'");
  }
  if (!ov.corruption.empty()) {
    CorruptionSeverity sev = CorruptionSeverity::Mild;
    std::string mode = ov.corruption;
    const size_t colon = mode.find(':');
    if (colon != std::string::npos) {
      const std::string s = mode.substr(colon + 1);
      mode = mode.substr(0, colon);
      if (s == "severe") sev = CorruptionSeverity::Severe;
      else if (s != "mild")
        throw ConfigError("--corruption: expected mild|severe severity, got '" + s + "'");
    }
    CorruptionMode m;
    if (mode == "none") m = CorruptionMode::None;
    else if (mode == "dilate_erode") m = CorruptionMode::DilateErode;
    else if (mode == "dropout") m = CorruptionMode::Dropout;
    else if (mode == "delay") m = CorruptionMode::Delay;
    else throw ConfigError("--corruption: unknown mode '" + mode + "'");
    spec.corruption = m == CorruptionMode::None ? MaskCorruption{} : make_corruption(m, sev);
  }
  if (!ov.out.empty()) spec.out_dir = ov.out;
  return spec;
}

MaskProvider make_mask_provider(const Scene& scene, const ExperimentSpec& spec) {
  auto masks = std::make_shared<std::vector<std::vector<InstanceMask>>>(
      spec.corruption.mode == CorruptionMode::None
          ? scene.truth.true_masks
          : corrupt_masks(scene.truth.true_masks, spec.corruption, spec.scene.seed));
  return [masks](int frame) {
    if (frame < 0 || size_t(frame) >= masks->size()) return std::vector<InstanceMask>{};
    return (*masks)[size_t(frame)];
  };
}

Trajectory true_trajectory(const Scene& scene, double fps) {
  Trajectory gt;
  for (size_t i = 0; i < scene.truth.true_poses.size(); ++i)
    gt.samples.emplace_back(double(i) / fps, invert(scene.truth.true_poses[i]));
  return gt;
}

ordered_json run_metrics(const Scene& scene, const ExperimentSpec& spec,
                         const RunReport& report) {
  ordered_json m;
  const Trajectory gt = true_trajectory(scene, spec.scene.fps);
  try {
    const AteResult a = ate(report.trajectory, gt);
    m["ate_rmse_m"] = a.rmse;
    m["ate_std_m"] = a.stddev;
  } catch (const std::exception& e) {
    m["ate_error"] = e.what();
  }

  if (!report.frames.empty() && !scene.frames.empty()) {
    const FrameReport& last = report.frames.back();
    const SimFrame& gt_frame = scene.frames[size_t(last.frame)];
    RenderConfig rcfg = spec.pipeline.render;
    const RenderOutput out = render(report.final_map, last.pose, scene.k, rcfg);
    m["psnr_db"] = psnr(out.color, gt_frame.color);
    m["ssim"] = ssim(to_gray(out.color), to_gray(gt_frame.color));
  }

  const Prf prf = label_prf(report.final_labels, scene.truth.dynamic_flag);
  m["precision"] = prf.precision;
  m["recall"] = prf.recall;
  m["f1"] = prf.f1;

  double flip_sum = 0.0;
  int flip_n = 0;
  for (const FrameReport& f : report.frames) {
    if (f.keyframe && f.frame > 0) {
      flip_sum += f.flip_ratio_keyframe;
      ++flip_n;
    }
  }
  m["flip_ratio_pct"] = flip_n ? flip_sum / flip_n : 0.0;

  const RuntimeStats rt = runtime_accounting(report.semantic_calls, spec.pipeline.cost,
                                             int(report.frames.size()));
  m["semantic_calls"] = report.semantic_calls;
  m["amortized_semantic_ms"] = rt.amortized_semantic_ms;
  m["semantic_pct"] = rt.semantic_pct;
  m["total_ms"] = rt.total_ms;
  m["fps"] = rt.fps;
  m["tracking_lost"] = report.tracking_lost;
  if (report.tracking_lost) m["lost_frame"] = report.lost_frame;
  return m;
}

int cmd_simulate(const std::string& config_path, const CliOverrides& ov) {
  const ExperimentSpec spec = load_spec(config_path, ov);
  const Scene scene = generate(spec.scene);
  const fs::path dir = spec.out_dir;
  fs::create_directories(dir);

  std::vector<std::string> outputs;
  char name[64];
  for (const SimFrame& f : scene.frames) {
    std::snprintf(name, sizeof name, "frame_%05d.ppm", f.index);
    write_ppm((dir / name).string(), f.color);
    outputs.emplace_back(name);
    std::snprintf(name, sizeof name, "depth_%05d.pgm", f.index);
    write_pgm16((dir / name).string(), f.depth);
    outputs.emplace_back(name);
  }
  write_text(dir / "groundtruth.tum", serialize_tum(true_trajectory(scene, spec.scene.fps)));
  outputs.emplace_back("groundtruth.tum");

  ordered_json truth;
  for (const auto& [id, dyn] : scene.truth.dynamic_flag)
    truth[std::to_string(id)] = dyn;
  write_text(dir / "dynamic_truth.json", truth.dump(2) + "\n");
  outputs.emplace_back("dynamic_truth.json");

  write_text(dir / "resolved_config.ini", resolved_config_text(spec));
  outputs.emplace_back("resolved_config.ini");
  write_manifest(dir, "simulate", outputs);
  std::cout << "wrote " << scene.frames.size() << " frames to " << dir.string() << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, const CliOverrides& ov) {
  const ExperimentSpec spec = load_spec(config_path, ov);
  const Scene scene = generate(spec.scene);
  const fs::path dir = spec.out_dir;
  fs::create_directories(dir);
  write_text(dir / "resolved_config.ini", resolved_config_text(spec));

  const RunReport report =
      run_pipeline(scene, spec.pipeline, make_mask_provider(scene, spec));

  write_text(dir / "trajectory.tum", serialize_tum(report.trajectory));
  write_text(dir / "per_frame.csv", per_frame_csv(report));
  write_text(dir / "trigger_log.csv", trigger_log_csv(report.trigger_log));
  write_text(dir / "run_report.json", run_report_json(report) + "\n");
  const ordered_json metrics = run_metrics(scene, spec, report);
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  write_manifest(dir, "run",
                 {"resolved_config.ini", "trajectory.tum", "per_frame.csv",
                  "trigger_log.csv", "run_report.json", "metrics.json"});
  std::cout << metrics.dump(2) << "\n";
  if (report.tracking_lost) {
    std::cerr << "tracking lost at frame " << report.lost_frame << "\n";
    return 2;
  }
  return 0;
}

// Named presets over the ablation switches and scheduler policy.
PipelineConfig apply_variant(PipelineConfig base, const std::string& name) {
  base.no_mp = base.no_epi_verify = base.no_backend = false;
  base.instant_mp = base.fixed_alpha = base.k_zero = base.k_one = false;
  base.sched_policy = SchedPolicy::OnDemand;
  if (name == "full" || name == "fusion" || name == "adaptive" || name == "on_demand")
    return base;
  if (name == "no_mp") base.no_mp = true;
  else if (name == "no_epi_verify") base.no_epi_verify = true;
  else if (name == "no_backend") base.no_backend = true;
  else if (name == "instant") base.instant_mp = true;
  else if (name == "fixed") base.fixed_alpha = true;
  else if (name == "k_zero") base.k_zero = true;
  else if (name == "k_one") base.k_one = true;
  else if (name == "always") base.sched_policy = SchedPolicy::Always;
  else if (name == "fixed_interval") base.sched_policy = SchedPolicy::FixedInterval;
  else throw ConfigError("ablate.variants: unknown variant '" + name + "'");
  return base;
}

int cmd_ablate(const std::string& config_path, const CliOverrides& ov) {
  const ExperimentSpec spec = load_spec(config_path, ov);
  const ConfigFile file = parse_config_file(config_path);
  std::vector<std::string> variants;
  {
    std::istringstream in(file.get_string("ablate", "variants", ""));
    std::string item;
    while (std::getline(in, item, ',')) {
      const size_t a = item.find_first_not_of(" \t");
      if (a == std::string::npos) continue;
      variants.push_back(item.substr(a, item.find_last_not_of(" \t") - a + 1));
    }
  }
  if (variants.size() < 2) throw ConfigError("ablate.variants: >=2 variants required");

  const Scene scene = generate(spec.scene);
  const fs::path dir = spec.out_dir;
  fs::create_directories(dir);

  const std::vector<std::string> columns = {"variant",   "ate_rmse_m", "psnr_db",
                                            "f1",        "flip_ratio_pct",
                                            "semantic_calls", "fps"};
  std::vector<std::vector<std::string>> rows;
  for (const std::string& v : variants) {
    ExperimentSpec vs = spec;
    vs.pipeline = apply_variant(spec.pipeline, v);
    const RunReport report =
        run_pipeline(scene, vs.pipeline, make_mask_provider(scene, vs));
    const ordered_json m = run_metrics(scene, vs, report);
    const auto num = [&](const char* key) {
      if (!m.contains(key)) return std::string("nan");
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6g", m[key].get<double>());
      return std::string(buf);
    };
    rows.push_back({v, num("ate_rmse_m"), num("psnr_db"), num("f1"),
                    num("flip_ratio_pct"),
                    std::to_string(m["semantic_calls"].get<int>()), num("fps")});
  }

  std::ostringstream csv;
  for (size_t c = 0; c < columns.size(); ++c)
    csv << columns[c] << (c + 1 < columns.size() ? "," : "\n");
  for (const auto& row : rows)
    for (size_t c = 0; c < row.size(); ++c)
      csv << row[c] << (c + 1 < row.size() ? "," : "\n");
  write_text(dir / "ablation.csv", csv.str());

  std::vector<size_t> widths(columns.size());
  for (size_t c = 0; c < columns.size(); ++c) {
    widths[c] = columns[c].size();
    for (const auto& row : rows) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream txt;
  const auto emit_row = [&](const std::vector<std::string>& row) {
    for (size_t c = 0; c < row.size(); ++c) {
      txt << row[c] << std::string(widths[c] - row[c].size() + 2, ' ');
    }
    txt << "\n";
  };
  emit_row(columns);
  for (const auto& row : rows) emit_row(row);
  write_text(dir / "ablation.txt", txt.str());
  write_manifest(dir, "ablate", {"ablation.csv", "ablation.txt"});
  std::cout << txt.str();
  return 0;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path,
             const std::string& out_path) {
  const auto read_file = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read trajectory file: " + p);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  const Trajectory est = parse_tum(read_file(est_path));
  const Trajectory gt = parse_tum(read_file(gt_path));
  const AteResult a = ate(est, gt);
  ordered_json m;
  m["ate_rmse_m"] = a.rmse;
  m["ate_std_m"] = a.stddev;
  const std::string text = m.dump(2) + "\n";
  if (!out_path.empty()) {
    fs::create_directories(fs::path(out_path).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(out_path).parent_path());
    write_text(out_path, text);
  }
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mpsplat: motion-probability gaussian splatting pipeline"};
  app.require_subcommand(1);

  CliOverrides ov;
  std::string config_path, est_path, gt_path, eval_out;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config file")->required();
    cmd->add_option("--seed", ov.seed, "override scene/pipeline seed");
    cmd->add_option("--out", ov.out, "override output directory");
    cmd->add_option("--sched", ov.sched, "scheduler policy: on_demand|always|fixed");
    cmd->add_option("--corruption", ov.corruption,
                    "mask corruption, e.g. dropout:severe or none");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "generate scene artifacts");
  add_common(simulate);
  CLI::App* run = app.add_subcommand("run", "run the pipeline on a generated scene");
  add_common(run);
  CLI::App* ablate = app.add_subcommand("ablate", "run a variant grid");
  add_common(ablate);
  CLI::App* eval = app.add_subcommand("eval", "ATE between two TUM trajectory files");
  eval->add_option("--est", est_path, "estimated trajectory")->required();
  eval->add_option("--gt", gt_path, "ground-truth trajectory")->required();
  eval->add_option("--out", eval_out, "optional metrics output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(config_path, ov);
    if (run->parsed()) return cmd_run(config_path, ov);
    if (ablate->parsed()) return cmd_ablate(config_path, ov);
    return cmd_eval(est_path, gt_path, eval_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

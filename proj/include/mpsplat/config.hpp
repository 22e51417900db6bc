#pragma once

#include <map>
#include <string>

#include "mpsplat/pipeline.hpp"
#include "mpsplat/simulator.hpp"

namespace mpsplat {

// Sectioned key/value text ("[section]" headers, "key = value" lines,
// '#'/';' comments). Keys map to "section.key" paths in error messages.
struct ConfigFile {
  std::map<std::string, std::map<std::string, std::string>> sections;

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  std::string require_string(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  uint64_t require_u64(const std::string& section, const std::string& key) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
};

ConfigFile parse_config(const std::string& text);
ConfigFile parse_config_file(const std::string& path);

struct ExperimentSpec {
  std::string name = "experiment";
  std::string out_dir = "out";
  SceneConfig scene;
  PipelineConfig pipeline;
  MaskCorruption corruption;
};

// Builds a fully validated spec; every key is optional except scene.seed.
// Command-line overrides (seed, scheduler policy, corruption) are applied by
// the CLI after loading.
ExperimentSpec load_experiment(const ConfigFile& file);

// Every effective value, including defaults, in parseable config syntax.
std::string resolved_config_text(const ExperimentSpec& spec);

}  // namespace mpsplat

// Config parsing, experiment loading, and command-line harness behavior.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mpsplat/config.hpp"

using namespace mpsplat;
namespace fs = std::filesystem;

#ifndef MPSPLAT_CLI_PATH
#define MPSPLAT_CLI_PATH "./mpsplat"
#endif

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MPSPLAT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mpsplat_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kTinyScene =
    "[scene]\n"
    "seed = 9\n"
    "n_static = 50\n"
    "n_dynamic_objects = 1\n"
    "gaussians_per_object = 8\n"
    "n_frames = 8\n"
    "width = 64\n"
    "height = 48\n"
    "feature_density = 80\n"
    "object_speed = 0.05\n";

}  // namespace

TEST_CASE("sectioned key-value text parses with comments and whitespace") {
  const ConfigFile f = parse_config(
      "# leading comment\n"
      "[scene]\n"
      "seed = 42   ; trailing comment\n"
      "n_frames=10\n"
      "\n"
      "[pipeline]\n"
      "keyframe_every = 3\n");
  CHECK(f.has("scene", "seed"));
  CHECK(f.require_u64("scene", "seed") == 42);
  CHECK(f.get_int("scene", "n_frames", 0) == 10);
  CHECK(f.get_int("pipeline", "keyframe_every", 0) == 3);
  CHECK(f.get_double("pipeline", "missing", 1.5) == 1.5);
}

TEST_CASE("experiment loading requires the scene seed") {
  const ConfigFile f = parse_config("[scene]\nn_frames = 10\n");
  try {
    load_experiment(f);
    FAIL("expected a config error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("seed") != std::string::npos);
  }
}

TEST_CASE("the resolved config dump parses back to the same experiment") {
  const ConfigFile f = parse_config(std::string(kTinyScene) +
                                    "[pipeline]\nkeyframe_every = 4\n");
  const ExperimentSpec spec = load_experiment(f);
  const std::string dump = resolved_config_text(spec);
  const ExperimentSpec round = load_experiment(parse_config(dump));
  CHECK(round.scene.seed == spec.scene.seed);
  CHECK(round.scene.n_frames == spec.scene.n_frames);
  CHECK(round.scene.object_speed == spec.scene.object_speed);
  CHECK(round.pipeline.keyframe_every == spec.pipeline.keyframe_every);
  CHECK(resolved_config_text(round) == dump);
}

TEST_CASE("the simulate command writes the advertised artifacts") {
  const fs::path dir = fresh_dir("simulate");
  spit(dir / "scene.ini", kTinyScene);
  REQUIRE(run_cli("simulate --config " + (dir / "scene.ini").string() + " --out " +
                  (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "manifest.json"));
  CHECK(fs::exists(dir / "out" / "groundtruth.tum"));
  int frame_files = 0;
  for (const auto& e : fs::directory_iterator(dir / "out"))
    if (e.path().extension() == ".ppm") ++frame_files;
  CHECK(frame_files == 8);
}

TEST_CASE("a config without a seed fails with exit code 1") {
  const fs::path dir = fresh_dir("noseed");
  spit(dir / "scene.ini", "[scene]\nn_frames = 4\n");
  CHECK(run_cli("simulate --config " + (dir / "scene.ini").string() + " --out " +
                (dir / "out").string()) == 1);
}

TEST_CASE("repeated runs write identical metrics") {
  const fs::path dir = fresh_dir("rerun");
  spit(dir / "scene.ini", kTinyScene);
  REQUIRE(run_cli("run --config " + (dir / "scene.ini").string() + " --out " +
                  (dir / "a").string()) == 0);
  REQUIRE(run_cli("run --config " + (dir / "scene.ini").string() + " --out " +
                  (dir / "b").string()) == 0);
  CHECK(slurp(dir / "a" / "metrics.json") == slurp(dir / "b" / "metrics.json"));
  CHECK(slurp(dir / "a" / "trajectory.tum") == slurp(dir / "b" / "trajectory.tum"));
  CHECK(slurp(dir / "a" / "per_frame.csv") == slurp(dir / "b" / "per_frame.csv"));
  CHECK(!slurp(dir / "a" / "metrics.json").empty());
}

TEST_CASE("the ablation command refuses a single variant") {
  const fs::path dir = fresh_dir("ablate1");
  spit(dir / "scene.ini", std::string(kTinyScene) + "[ablate]\nvariants = full\n");
  CHECK(run_cli("ablate --config " + (dir / "scene.ini").string() + " --out " +
                (dir / "out").string()) == 1);
}

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpsplat/geometry.hpp"
#include "mpsplat/image.hpp"
#include "mpsplat/mp_engine.hpp"
#include "mpsplat/renderer.hpp"

namespace mpsplat {

enum class TrajectoryKind { Orbit, Line, RandomWalk };

struct SceneConfig {
  uint64_t seed = 7;
  int n_static = 500;
  int n_dynamic_objects = 2;
  int gaussians_per_object = 50;
  double extent = 2.0;        // side of the world box, meters
  double object_speed = 0.02; // meters per frame, rigid translation
  double object_spread = 0.06;  // member std around the object center, x extent
  TrajectoryKind trajectory = TrajectoryKind::Orbit;
  double trajectory_step = 0.01;  // radians (orbit) or meters (line / random walk)
  int n_frames = 50;
  int width = 64;
  int height = 48;
  int feature_density = 300;  // tracked points per frame
  double pixel_noise_sigma = 0.3;
  double depth_noise_sigma = 0.0;
  double fps = 30.0;
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class CorruptionMode { None, DilateErode, Dropout, Delay };
enum class CorruptionSeverity { Mild, Severe };

struct MaskCorruption {
  CorruptionMode mode = CorruptionMode::None;
  double magnitude = 0.0;  // pixels (dilate/erode), probability (dropout), frames (delay)
  CorruptionSeverity severity = CorruptionSeverity::Mild;
};

// Fills in the conventional magnitude for a mode/severity pair.
MaskCorruption make_corruption(CorruptionMode mode, CorruptionSeverity severity);

struct SceneTruth {
  std::map<int, bool> dynamic_flag;
  std::vector<Pose> true_poses;                          // camera-from-world, per frame
  std::vector<std::vector<InstanceMask>> true_masks;     // per frame, pre-corruption
  std::vector<std::vector<TrackedFeature>> true_tracks;  // per frame, noise-free pixels
};

struct SimFrame {
  int index = 0;
  double timestamp = 0.0;
  ImageRgb color;
  ImageF depth;
  std::vector<TrackedFeature> features;  // observed (noisy) tracks
};

struct Scene {
  Intrinsics k;
  std::vector<GaussianPrimitive> gaussians;  // world state at frame 0
  SceneTruth truth;
  std::vector<SimFrame> frames;
};

Scene generate(const SceneConfig& cfg);

// Dynamic-object mean at a given frame (rigid per-frame translation).
Eigen::Vector3d dynamic_mean_at(const Eigen::Vector3d& mean0,
                                const Eigen::Vector3d& velocity, int frame);

std::vector<std::vector<InstanceMask>> corrupt_masks(
    const std::vector<std::vector<InstanceMask>>& masks, const MaskCorruption& c,
    uint64_t seed);

// Morphological helpers (square structuring element of the given radius).
Bitmap dilate(const Bitmap& in, int radius);
Bitmap erode(const Bitmap& in, int radius);

}  // namespace mpsplat

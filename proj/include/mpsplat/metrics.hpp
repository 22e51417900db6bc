#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpsplat/geometry.hpp"
#include "mpsplat/image.hpp"
#include "mpsplat/mp_engine.hpp"
#include "mpsplat/scheduler.hpp"

namespace mpsplat {

// Poses stored in the file's own convention (world-from-camera for TUM files);
// translation is the camera position used by the trajectory metrics.
struct Trajectory {
  std::vector<std::pair<double, Pose>> samples;  // (timestamp, pose), increasing time
};

struct ParseError : std::runtime_error {
  int line;
  ParseError(int line_, const std::string& reason)
      : std::runtime_error("line " + std::to_string(line_) + ": " + reason), line(line_) {}
};
struct InsufficientPairs : std::runtime_error {
  InsufficientPairs() : std::runtime_error("fewer than 3 associated pose pairs") {}
};
struct DegenerateGeometry : std::runtime_error {
  DegenerateGeometry() : std::runtime_error("trajectory positions are collinear") {}
};
struct DimensionMismatch : std::runtime_error {
  DimensionMismatch() : std::runtime_error("image dimensions differ") {}
};

// "timestamp tx ty tz qx qy qz qw"; '#' lines are comments; quaternions are
// normalized on load.
Trajectory parse_tum(const std::string& text);
std::string serialize_tum(const Trajectory& traj);

// Closed-form least-squares SE(3) (no scale) minimizing sum |T*est_i - gt_i|^2
// over positions, associated by nearest timestamp within 20 ms.
Pose align_se3(const Trajectory& est, const Trajectory& gt);

struct AteResult {
  double rmse = 0.0;
  double stddev = 0.0;  // population std of residual norms
};
AteResult ate(const Trajectory& est, const Trajectory& gt);

// 10*log10(1/MSE); +inf for identical images.
double psnr(const ImageRgb& img, const ImageRgb& ref);
double psnr(const ImageF& img, const ImageF& ref);

// Gaussian-window SSIM (11x11, sigma 1.5, K1=0.01, K2=0.03), averaged over
// windows fully inside the image; the window shrinks to fit small images.
double ssim(const ImageF& img, const ImageF& ref);

struct Prf {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
};
// Dynamic-class precision/recall/F1 over ids present in both maps; 0/0
// ratios report 1.
Prf label_prf(const std::map<int, MotionLabel>& predicted,
              const std::map<int, bool>& truth);

struct CostModel {
  double semantic_cost_ms = 16.8;
  double track_cost_ms = 7.6;
  double map_cost_ms = 13.4;
  double mp_cost_ms = 1.2;
};

struct RuntimeStats {
  int calls = 0;
  double amortized_semantic_ms = 0.0;
  double semantic_pct = 0.0;
  double total_ms = 0.0;
  double fps = 0.0;
};
RuntimeStats runtime_accounting(int calls, const CostModel& cost, int n_frames);
RuntimeStats runtime_accounting(const std::vector<TriggerLogEntry>& log,
                                const CostModel& cost, int n_frames);

}  // namespace mpsplat

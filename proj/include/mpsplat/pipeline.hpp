#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mpsplat/epipolar.hpp"
#include "mpsplat/geometry.hpp"
#include "mpsplat/losses.hpp"
#include "mpsplat/metrics.hpp"
#include "mpsplat/mp_engine.hpp"
#include "mpsplat/renderer.hpp"
#include "mpsplat/scheduler.hpp"
#include "mpsplat/simulator.hpp"

namespace mpsplat {

enum class PipelineMode { SequentialDeterministic, Pipelined };
enum class SchedPolicy { OnDemand, Always, FixedInterval };

struct PipelineConfig {
  MpConfig mp;
  SchedulerConfig sched;
  EpipolarConfig epi;
  RenderConfig render;
  LossWeights weights;
  LmConfig lm;
  CostModel cost;
  PipelineMode mode = PipelineMode::SequentialDeterministic;
  SchedPolicy sched_policy = SchedPolicy::OnDemand;
  int keyframe_every = 5;
  bool soft_rejection = false;  // down-weight rejected features instead of dropping
  int mapping_steps = 10;
  double mapping_lr = 0.2;
  double edge_threshold = 0.4;
  uint64_t seed = 7;

  // Ablation switches.
  bool no_mp = false;
  bool no_epi_verify = false;
  bool no_backend = false;
  bool instant_mp = false;
  bool fixed_alpha = false;
  double fixed_alpha_value = 0.3;
  bool k_zero = false;  // semantic-only fusion
  bool k_one = false;   // geometric-only fusion

  PipelineConfig resolved() const;  // applies the scheduler policy, validates switches
};

using MaskProvider = std::function<std::vector<InstanceMask>(int frame)>;

struct TrackingLost : std::runtime_error {
  int frame;
  explicit TrackingLost(int frame_)
      : std::runtime_error("tracking diverged on two consecutive frames, frame " +
                           std::to_string(frame_)),
        frame(frame_) {}
};

struct FrameReport {
  int frame = 0;
  double timestamp = 0.0;
  Pose pose;  // estimated camera-from-world
  LossBreakdown losses;
  bool triggered = false;
  double u_bar = 0.0;
  double r = 0.0;
  double score = 0.0;
  int dt = 0;
  double tau = 0.5;
  int n_features = 0;
  int n_rejected = 0;
  std::vector<int> rejected_gaussian_ids;
  double mean_reproj_error = 0.0;
  int n_dynamic_labels = 0;
  bool keyframe = false;
  double flip_ratio_keyframe = 0.0;  // vs previous keyframe, on keyframes only
  RecoveryReport recovery;
  LmReport lm;
};

struct RunReport {
  std::vector<FrameReport> frames;
  Trajectory trajectory;  // world-from-camera samples (camera centers)
  std::vector<TriggerLogEntry> trigger_log;
  std::map<int, MotionLabel> final_labels;  // every gaussian labeled at least once
  std::vector<GaussianPrimitive> final_map;
  int semantic_calls = 0;
  bool tracking_lost = false;
  int lost_frame = -1;
};

class Pipeline {
 public:
  Pipeline(const Intrinsics& k, std::vector<GaussianPrimitive> initial_map,
           const Pose& initial_pose, PipelineConfig cfg, MaskProvider masks);

  FrameReport step(const SimFrame& frame);

  const std::vector<GaussianPrimitive>& map() const { return gaussians_; }
  const SchedulerState& scheduler_state() const { return sched_state_; }
  const std::map<int, MotionLabel>& labels() const { return labels_; }
  const Pose& current_pose() const { return pose_; }

 private:
  Intrinsics k_;
  std::vector<GaussianPrimitive> gaussians_;
  PipelineConfig cfg_;
  MaskProvider mask_provider_;
  SchedulerState sched_state_;
  std::vector<InstanceMask> current_masks_;

  Pose pose_;       // latest estimate
  Pose pose_prev_;  // estimate one frame back, for the constant-velocity prediction
  bool have_prev_ = false;
  double u_bar_prev_ = 1.0;  // forces attention on the first frames
  double tau_ = 0.5;
  std::map<int, MotionLabel> labels_;
  std::set<int> ever_tracked_;  // gaussian ids the tracker has ever identified
  int consecutive_divergences_ = 0;
  int frame_count_ = 0;

  // Previous-keyframe state for epipolar verification, flip ratio, and the
  // edge-warp term.
  Pose keyframe_pose_;
  std::map<int, Pixel> keyframe_feature_px_;
  std::map<int, MotionLabel> keyframe_labels_;
  std::map<int, Eigen::Vector3d> keyframe_means_;
  std::map<int, double> keyframe_mp_;
  ImageF keyframe_depth_;
  std::vector<std::pair<int, int>> keyframe_edges_;
  bool have_keyframe_ = false;

  int gaussian_index(int id) const;
  Pose predict_pose() const;
};

// Drives a pipeline over a frame stream. Pipelined mode moves frames through
// bounded queues between stage threads; both modes produce identical reports.
RunReport run_pipeline(const Scene& scene, const PipelineConfig& cfg,
                       const MaskProvider& masks);
RunReport run_pipeline(const Intrinsics& k,
                       const std::vector<GaussianPrimitive>& initial_map,
                       const Pose& initial_pose, const std::vector<SimFrame>& frames,
                       const PipelineConfig& cfg, const MaskProvider& masks);

// Serialization used by the CLI and the determinism checks (no wall-clock
// fields; identical runs serialize to identical bytes).
std::string run_report_json(const RunReport& report);
std::string per_frame_csv(const RunReport& report);
std::string trigger_log_csv(const std::vector<TriggerLogEntry>& log);
std::string recovery_report_json(int frame, const RecoveryReport& report);

}  // namespace mpsplat

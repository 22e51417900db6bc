#pragma once

#include <Eigen/Core>

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "mpsplat/geometry.hpp"
#include "mpsplat/image.hpp"
#include "mpsplat/renderer.hpp"

namespace mpsplat {

struct LossWeights {
  double lambda1 = 0.9;  // photometric
  double lambda2 = 0.1;  // depth
  double lambda3 = 500.0;  // motion-consistency regularizer
  double lambda4 = 300.0;  // edge-warp
  double huber_delta = 0.1;  // meters
};

struct LossBreakdown {
  double pho = 0.0;
  double depth = 0.0;
  double mp_reg = 0.0;
  double edge = 0.0;
  double total = 0.0;
  size_t pho_pixels = 0;
  size_t depth_pixels = 0;
  size_t mp_terms = 0;
  size_t edge_pixels = 0;
};

// Static-weighted L1 color sum over covered pixels.
double photometric_loss(const RenderOutput& render, const ImageRgb& gt_color,
                        size_t* pixel_count = nullptr);

// Static-weighted L1 depth sum; pixels with invalid (zero) reference depth
// are excluded.
double depth_loss(const RenderOutput& render, const ImageF& gt_depth,
                  size_t* pixel_count = nullptr);

// sum_k (1 - mp_k) * |mu_k - rel(mu_prev_k)|^2 over ids present in both maps.
double mp_consistency_loss(const std::map<int, Eigen::Vector3d>& means_curr,
                           const std::map<int, Eigen::Vector3d>& means_prev,
                           const Pose& rel, const std::map<int, double>& mp,
                           size_t* term_count = nullptr);

double huber(double r, double delta);

// Warps frame-i edge pixels into frame j through D_i and the relative pose
// T_ji, compares depths under the bilinearly sampled static weight, and
// accumulates the Huber penalty. Out-of-bounds warps are skipped.
double edge_warp_loss(const ImageF& depth_i,
                      const std::vector<std::pair<int, int>>& edges_i,
                      const ImageF& depth_j, const ImageF& static_weight_j,
                      const Pose& rel_ji, const Intrinsics& k,
                      const LossWeights& weights, size_t* pixel_count = nullptr);

struct LossComponents {
  double pho = 0.0;
  double depth = 0.0;
  double mp_reg = 0.0;
  double edge = 0.0;
};

// Weighted total per the overall objective. When frame_reliability_r is
// given, lambda3 is modulated to lambda3 * (1 - R).
LossBreakdown total_loss(const LossComponents& c, const LossWeights& weights,
                         std::optional<double> frame_reliability_r = std::nullopt);

struct LmConfig {
  int max_iterations = 50;
  double rot_step = 1e-5;    // radians, central-difference step
  double trans_step = 1e-4;  // meters
  double initial_damping = 1e-3;
  double damping_factor = 10.0;
  double max_damping = 1e8;
  double rel_decrease_tol = 1e-6;
};

struct LmReport {
  int iterations = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool converged = false;
  bool diverged = false;
};

// Right-multiplied increment: pose' = pose * (exp(omega), t).
Pose apply_increment(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta);

using PoseResidualFn = std::function<Eigen::VectorXd(const Pose&)>;
using PoseLossFn = std::function<double(const Pose&)>;

// Levenberg-Marquardt over the 6-dof increment with central finite-difference
// Jacobians. Steps are accepted against the scalar loss, so accepted steps
// never increase it. Damping above max_damping reports divergence and yields
// the initial pose.
Pose refine_pose(const Pose& initial, const PoseResidualFn& residuals,
                 const PoseLossFn& loss, const LmConfig& cfg, LmReport* report);

// Convenience wrapper for the tracking objective: residuals and loss built
// from rendering the scene at a candidate pose against the observed frame.
Pose refine_pose(const Pose& initial, const std::vector<GaussianPrimitive>& scene,
                 const ImageRgb& gt_color, const ImageF& gt_depth,
                 const Intrinsics& k, const RenderConfig& rcfg,
                 const LossWeights& weights, const LmConfig& cfg, LmReport* report);

// Tracking loss (lambda1*pho + lambda2*depth) at a given pose.
double tracking_loss(const Pose& pose, const std::vector<GaussianPrimitive>& scene,
                     const ImageRgb& gt_color, const ImageF& gt_depth,
                     const Intrinsics& k, const RenderConfig& rcfg,
                     const LossWeights& weights);

// Central finite-difference gradient of a pose loss.
Eigen::Matrix<double, 6, 1> pose_loss_gradient(const PoseLossFn& loss, const Pose& pose,
                                               double rot_step, double trans_step);

}  // namespace mpsplat

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mpsplat/geometry.hpp"
#include "mpsplat/image.hpp"

namespace mpsplat {

enum class MotionLabel { Static, Dynamic };

struct GaussianPrimitive {
  int id = -1;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  double opacity = 1.0;                                   // [0,1]
  Eigen::Vector3d scale = Eigen::Vector3d::Ones() * 0.1;  // per-axis std-dev, meters
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Rgb color = {0.5, 0.5, 0.5};

  // Motion-probability state.
  double mp = 0.5;
  double uncertainty_raw = 0.0;
  MotionLabel label = MotionLabel::Static;
  int last_observed_frame = -1;
};

struct TrackedFeature {
  Pixel pixel;              // full-resolution coordinates
  int scale_level = 0;      // pyramid level; level-s coordinates are pixel * 2^-s
  std::optional<int> gaussian_id;
  double mp_fused = 0.0;

  Pixel at_level() const {
    const double s = std::pow(0.5, scale_level);
    return {pixel.u * s, pixel.v * s};
  }
};

struct InstanceMask {
  Bitmap region;  // full image resolution, nonzero = inside
  int class_id = 0;
  double confidence = 1.0;  // (0,1]

  bool contains(const Pixel& p) const {
    const int x = int(std::lround(p.u)), y = int(std::lround(p.v));
    if (x < 0 || y < 0 || x >= region.width || y >= region.height) return false;
    return region.at(x, y) != 0;
  }
};

struct MpConfig {
  std::vector<double> radii_per_scale = {8.0, 6.0, 4.0};  // r_s, pixels at each level
  double kernel_bandwidth = 3.0;                          // pixels
  std::map<int, double> prior_table = {{1, 0.9}};         // class_id -> mu
  double mu_bg = 0.1;
  double c_bg = 0.1;
  double lambda_stat = 2.0;  // lambda in the e_ub statistic
  double sigma_g = 2.0;      // pixels, geometric-confidence falloff
  double sigma_c = 2.0;      // pixels, consistency falloff
  double lambda_u = 1.0;     // variance weight in the uncertainty term
  double alpha_min = 0.05;
  double alpha_max = 0.6;
  double epsilon_log = 1e-8;
  double mp_init = 0.5;
  double sigma_e_substitution = 0.25;  // below this, e := mu_e per instance
};

struct EmptyRegion : std::runtime_error {
  EmptyRegion() : std::runtime_error("instance region has no reprojection errors") {}
};
struct ZeroConfidence : std::runtime_error {
  ZeroConfidence() : std::runtime_error("both fusion confidences are zero") {}
};
struct NoObservation : std::runtime_error {
  NoObservation() : std::runtime_error("empty association neighborhood") {}
};

// One associated feature with its kernel weight.
struct Association {
  int feature_index = -1;
  double weight = 0.0;
};
using AssociationMap = std::map<int, std::vector<Association>>;  // gaussian id -> neighborhood

// Radius-gated soft association at the feature's pyramid level.
AssociationMap associate(const std::vector<GaussianPrimitive>& gaussians,
                         const std::vector<TrackedFeature>& features, const Pose& pose,
                         const Intrinsics& k, const MpConfig& cfg);

// Semantic prior lookup: (mp_ins, gamma_ins). Overlaps resolved by highest confidence.
std::pair<double, double> semantic_mp(const TrackedFeature& feature,
                                      const std::vector<InstanceMask>& masks,
                                      const MpConfig& cfg);

struct InstanceStats {
  double mu_e = 0.0;
  double sigma_e = 0.0;
  double e_ub = 0.0;  // mu_e + lambda*sigma_e, floored at 1e-9
};
InstanceStats instance_stats(const std::vector<double>& errors, const MpConfig& cfg);

double geometric_mp(double e, double e_ub);

double fuse_mp(double mp_ins, double gamma_ins, double mp_geo, double gamma_geo);

double aggregate_mp(const std::vector<std::pair<double, double>>& neighborhood);

double uncertainty(double mp_prev, const std::vector<double>& neighborhood_mps,
                   const MpConfig& cfg);

// Min-max over the frame's visible set; degenerate frames fall back to the
// analytic bound ln2 + 0.25*lambda_u.
std::vector<double> normalize_uncertainty(const std::vector<double>& u_raw,
                                          const MpConfig& cfg);

double adaptive_alpha(double u_tilde, double sigma_e_g, const MpConfig& cfg);

double temporal_update(double mp_prev, double observation, double alpha_effective);

struct LabelResult {
  double tau = 0.5;
  std::map<int, MotionLabel> labels;
};
LabelResult label_dynamic(const std::vector<const GaussianPrimitive*>& visible);

double flip_ratio(const std::map<int, MotionLabel>& prev,
                  const std::map<int, MotionLabel>& curr);

double population_variance(const std::vector<double>& xs);
double median(std::vector<double> xs);  // even size: mean of the central pair

}  // namespace mpsplat

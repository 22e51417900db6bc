#pragma once

#include <Eigen/Core>

#include <map>
#include <stdexcept>
#include <vector>

#include "mpsplat/geometry.hpp"
#include "mpsplat/mp_engine.hpp"

namespace mpsplat {

struct Correspondence {
  Pixel p1;  // frame 1 (reference keyframe)
  Pixel p2;  // frame 2 (current)
  int gaussian_id = -1;
};

struct EpipolarConfig {
  double epsilon_px = 1.0;  // static/dynamic decision threshold on the median distance
  int min_matches = 3;
  double densify_clone_sigma = 0.0;  // meters; <= 0 means half the parent's smallest scale
};

enum class EpipolarVerdict { ConfirmStatic, ConfirmDynamic, Inconclusive };

struct DegenerateLine : std::runtime_error {
  DegenerateLine() : std::runtime_error("epipolar line has zero normal (epipole)") {}
};

// Point-to-epipolar-line distance |p2^T F p1| / sqrt(a^2 + b^2), l = F p1.
double epipolar_distance(const Correspondence& c, const Eigen::Matrix3d& f);

EpipolarVerdict verify_gaussian(const std::vector<Correspondence>& matches,
                                const Eigen::Matrix3d& f, const EpipolarConfig& cfg);

struct RecoveryReport {
  std::vector<int> recovered_ids;
  std::vector<int> cloned_ids;
};

// Relabels ConfirmStatic gaussians, caps their mp below 0.5, and spawns one
// seeded clone per recovery. Never removes or touches gaussians outside the
// verdict set.
RecoveryReport recover_and_densify(std::vector<GaussianPrimitive>& gaussians,
                                   const std::map<int, EpipolarVerdict>& verdicts,
                                   const EpipolarConfig& cfg, uint64_t rng_seed);

}  // namespace mpsplat

#pragma once

#include <Eigen/Core>

#include <optional>
#include <utility>
#include <vector>

#include "mpsplat/geometry.hpp"
#include "mpsplat/image.hpp"
#include "mpsplat/mp_engine.hpp"

namespace mpsplat {

struct RenderConfig {
  // The cutoffs below clip negligible fragments for speed. They introduce
  // small jumps in the rendered image as a function of pose; keep them tight
  // enough that the tracker's finite-difference Jacobians stay accurate.
  double alpha_cutoff = 1e-3;
  double saturation_threshold = 1e-6;  // stop compositing when transmittance drops below
  double footprint_sigmas = 3.5;
  Rgb background_color = {0.0, 0.0, 0.0};
  bool keep_fragments = false;  // retain pre-composite splats for mapping updates
};

// Pre-composite splat sample at one pixel, front-to-back order.
struct Fragment {
  int gaussian_id;
  double alpha;   // opacity * kernel falloff, before transmittance
  double z;       // camera-frame depth
  Rgb color;
  double mp;
};

struct RenderOutput {
  ImageRgb color;
  ImageF depth;          // alpha-weighted mean depth; 0 where uncovered
  ImageF static_weight;  // sum_k omega_k * (1 - mp_k); 0 where uncovered
  ImageF coverage;       // sum of compositing weights, in [0,1]
  std::vector<std::vector<std::pair<int, double>>> contrib;  // normalized omega per pixel
  std::vector<std::vector<Fragment>> fragments;              // only if keep_fragments
  std::vector<int> skipped_singular;  // gaussians with non-invertible 2D covariance

  bool covered(int x, int y) const { return coverage.at(x, y) > 0.0; }
};

RenderOutput render(const std::vector<GaussianPrimitive>& gaussians, const Pose& pose,
                    const Intrinsics& k, const RenderConfig& cfg);

// Recomposite a single pixel's fragment list (used by the mapping update to
// evaluate parameter perturbations without a full re-render).
struct PixelComposite {
  Rgb color;
  double depth;
  double static_weight;
  double coverage;
};
PixelComposite composite_fragments(const std::vector<Fragment>& frags,
                                   const RenderConfig& cfg);

// sum_k omega_k * (1 - mp_k) over a pixel's normalized contributions.
double static_weight(const std::vector<std::pair<int, double>>& contrib,
                     const std::map<int, double>& mp_by_id);

// Pixels whose 3x3 Sobel gradient magnitude exceeds the threshold; image
// border excluded.
std::vector<std::pair<int, int>> sobel_edges(const ImageF& image, double threshold);

std::optional<double> bilinear_sample(const ImageF& grid, const Pixel& p);

// Parallelism cap shared by render and grid runs; reads MPSPLAT_THREADS.
int thread_budget();

}  // namespace mpsplat

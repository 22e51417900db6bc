#include "mpsplat/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace mpsplat {

int thread_budget() {
  if (const char* env = std::getenv("MPSPLAT_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : int(std::min(hw, 8u));
}

namespace {

struct Splat {
  int index;  // into the gaussian vector
  double z;
  Pixel center;
  Eigen::Matrix2d inv_cov;
  int x0, x1, y0, y1;  // inclusive pixel bounds
};

}  // namespace

PixelComposite composite_fragments(const std::vector<Fragment>& frags,
                                   const RenderConfig& cfg) {
  PixelComposite out{{0, 0, 0}, 0.0, 0.0, 0.0};
  double transmittance = 1.0;
  double depth_num = 0.0;
  double static_num = 0.0;
  for (const Fragment& f : frags) {
    if (transmittance < cfg.saturation_threshold) break;
    const double w = f.alpha * transmittance;
    transmittance *= 1.0 - f.alpha;
    out.color[0] += w * f.color[0];
    out.color[1] += w * f.color[1];
    out.color[2] += w * f.color[2];
    depth_num += w * f.z;
    static_num += w * (1.0 - f.mp);
    out.coverage += w;
  }
  if (out.coverage > 0.0) {
    out.depth = depth_num / out.coverage;
    out.static_weight = static_num / out.coverage;
  }
  for (int c = 0; c < 3; ++c)
    out.color[c] += (1.0 - out.coverage) * cfg.background_color[c];
  return out;
}

RenderOutput render(const std::vector<GaussianPrimitive>& gaussians, const Pose& pose,
                    const Intrinsics& k, const RenderConfig& cfg) {
  const int w = k.width, h = k.height;
  RenderOutput out;
  out.color = ImageRgb(w, h, cfg.background_color);
  out.depth = ImageF(w, h, 0.0);
  out.static_weight = ImageF(w, h, 0.0);
  out.coverage = ImageF(w, h, 0.0);
  out.contrib.assign(size_t(w) * h, {});

  std::vector<Splat> splats;
  splats.reserve(gaussians.size());
  for (size_t i = 0; i < gaussians.size(); ++i) {
    const GaussianPrimitive& g = gaussians[i];
    const Eigen::Vector3d xc = pose.apply(g.mean);
    if (xc.z() <= 0.0) continue;
    const auto px = project(g.mean, pose, k);
    if (!px) continue;

    const double z = xc.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << k.fx / z, 0, -k.fx * xc.x() / (z * z), 0, k.fy / z, -k.fy * xc.y() / (z * z);
    const Eigen::Matrix3d rot = g.rotation.normalized().toRotationMatrix();
    const Eigen::Matrix3d cov_world =
        rot * g.scale.cwiseProduct(g.scale).asDiagonal() * rot.transpose();
    const Eigen::Matrix3d cov_cam = pose.rotation * cov_world * pose.rotation.transpose();
    const Eigen::Matrix2d cov2 = jac * cov_cam * jac.transpose();
    const double det = cov2.determinant();
    if (!(det > 0.0) || !cov2.allFinite()) {
      out.skipped_singular.push_back(g.id);
      continue;
    }

    Splat s;
    s.index = int(i);
    s.z = z;
    s.center = *px;
    s.inv_cov = cov2.inverse();
    const double eig_max =
        0.5 * (cov2.trace() +
               std::sqrt(std::max(0.0, cov2.trace() * cov2.trace() - 4.0 * det)));
    const double radius = cfg.footprint_sigmas * std::sqrt(eig_max);
    s.x0 = std::max(0, int(std::floor(px->u - radius)));
    s.x1 = std::min(w - 1, int(std::ceil(px->u + radius)));
    s.y0 = std::max(0, int(std::floor(px->v - radius)));
    s.y1 = std::min(h - 1, int(std::ceil(px->v + radius)));
    if (s.x0 > s.x1 || s.y0 > s.y1) continue;
    splats.push_back(s);
  }

  // Front to back by depth, gaussian id breaks ties, so rendering is
  // independent of the input order.
  std::sort(splats.begin(), splats.end(), [&](const Splat& a, const Splat& b) {
    if (a.z != b.z) return a.z < b.z;
    return gaussians[a.index].id < gaussians[b.index].id;
  });

  // Footprints are truncated, so taper the outer annulus of each splat to
  // zero instead of clipping it. A hard edge makes the image jump as the
  // camera moves, which puts a noise floor under the tracker's
  // finite-difference Jacobians; the taper keeps the image continuous in the
  // pose while leaving the kernel exact inside (footprint_sigmas - 1) sigmas.
  const double q_edge = cfg.footprint_sigmas * cfg.footprint_sigmas;
  const double q_inner =
      std::pow(std::max(cfg.footprint_sigmas - 1.0, 0.5 * cfg.footprint_sigmas), 2);
  std::vector<std::vector<Fragment>> frags(size_t(w) * h);
  for (const Splat& s : splats) {
    const GaussianPrimitive& g = gaussians[s.index];
    for (int y = s.y0; y <= s.y1; ++y) {
      for (int x = s.x0; x <= s.x1; ++x) {
        const Eigen::Vector2d delta(x - s.center.u, y - s.center.v);
        const double q = delta.dot(s.inv_cov * delta);
        if (q >= q_edge) continue;
        const double window =
            std::min(1.0, (q_edge - q) / std::max(q_edge - q_inner, 1e-12));
        const double alpha = window * g.opacity * std::exp(-0.5 * q);
        if (alpha < cfg.alpha_cutoff) continue;
        frags[size_t(y) * w + x].push_back({g.id, alpha, s.z, g.color, g.mp});
      }
    }
  }

  const auto composite_rows = [&](int row_begin, int row_end) {
    for (int y = row_begin; y < row_end; ++y) {
      for (int x = 0; x < w; ++x) {
        const size_t idx = size_t(y) * w + x;
        const std::vector<Fragment>& fl = frags[idx];
        if (fl.empty()) continue;
        const PixelComposite pc = composite_fragments(fl, cfg);
        out.color.data[idx] = pc.color;
        out.depth.data[idx] = pc.depth;
        out.static_weight.data[idx] = pc.static_weight;
        out.coverage.data[idx] = pc.coverage;
        if (pc.coverage > 0.0) {
          double transmittance = 1.0;
          auto& contrib = out.contrib[idx];
          for (const Fragment& f : fl) {
            if (transmittance < cfg.saturation_threshold) break;
            const double wk = f.alpha * transmittance;
            transmittance *= 1.0 - f.alpha;
            contrib.emplace_back(f.gaussian_id, wk / pc.coverage);
          }
        }
      }
    }
  };

  const int n_threads = std::min(thread_budget(), std::max(1, h / 16));
  if (n_threads <= 1) {
    composite_rows(0, h);
  } else {
    std::vector<std::thread> pool;
    const int band = (h + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      const int y0 = t * band, y1 = std::min(h, y0 + band);
      if (y0 < y1) pool.emplace_back(composite_rows, y0, y1);
    }
    for (auto& th : pool) th.join();
  }

  if (cfg.keep_fragments) out.fragments = std::move(frags);
  return out;
}

double static_weight(const std::vector<std::pair<int, double>>& contrib,
                     const std::map<int, double>& mp_by_id) {
  double w = 0.0;
  for (const auto& [id, omega] : contrib) {
    const auto it = mp_by_id.find(id);
    const double mp = it != mp_by_id.end() ? it->second : 0.0;
    w += omega * (1.0 - mp);
  }
  return w;
}

std::vector<std::pair<int, int>> sobel_edges(const ImageF& image, double threshold) {
  std::vector<std::pair<int, int>> edges;
  for (int y = 1; y + 1 < image.height; ++y) {
    for (int x = 1; x + 1 < image.width; ++x) {
      const double gx = image.at(x + 1, y - 1) + 2.0 * image.at(x + 1, y) +
                        image.at(x + 1, y + 1) - image.at(x - 1, y - 1) -
                        2.0 * image.at(x - 1, y) - image.at(x - 1, y + 1);
      const double gy = image.at(x - 1, y + 1) + 2.0 * image.at(x, y + 1) +
                        image.at(x + 1, y + 1) - image.at(x - 1, y - 1) -
                        2.0 * image.at(x, y - 1) - image.at(x + 1, y - 1);
      if (std::sqrt(gx * gx + gy * gy) > threshold) edges.emplace_back(x, y);
    }
  }
  return edges;
}

std::optional<double> bilinear_sample(const ImageF& grid, const Pixel& p) {
  if (p.u < 0.0 || p.v < 0.0 || p.u > grid.width - 1 || p.v > grid.height - 1)
    return std::nullopt;
  const int x0 = std::min(int(p.u), grid.width - 2 >= 0 ? grid.width - 2 : 0);
  const int y0 = std::min(int(p.v), grid.height - 2 >= 0 ? grid.height - 2 : 0);
  const int x1 = std::min(x0 + 1, grid.width - 1);
  const int y1 = std::min(y0 + 1, grid.height - 1);
  const double fx = p.u - x0, fy = p.v - y0;
  return (1 - fx) * (1 - fy) * grid.at(x0, y0) + fx * (1 - fy) * grid.at(x1, y0) +
         (1 - fx) * fy * grid.at(x0, y1) + fx * fy * grid.at(x1, y1);
}

}  // namespace mpsplat

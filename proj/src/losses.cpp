#include "mpsplat/losses.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace mpsplat {

double photometric_loss(const RenderOutput& render, const ImageRgb& gt_color,
                        size_t* pixel_count) {
  double loss = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < render.color.data.size(); ++i) {
    if (render.coverage.data[i] <= 0.0) continue;
    const Rgb& c = render.color.data[i];
    const Rgb& g = gt_color.data[i];
    loss += render.static_weight.data[i] *
            (std::abs(c[0] - g[0]) + std::abs(c[1] - g[1]) + std::abs(c[2] - g[2]));
    ++count;
  }
  if (pixel_count) *pixel_count = count;
  return loss;
}

double depth_loss(const RenderOutput& render, const ImageF& gt_depth,
                  size_t* pixel_count) {
  double loss = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < render.depth.data.size(); ++i) {
    if (render.coverage.data[i] <= 0.0) continue;
    if (gt_depth.data[i] <= 0.0) continue;  // invalid reference depth
    loss += render.static_weight.data[i] *
            std::abs(render.depth.data[i] - gt_depth.data[i]);
    ++count;
  }
  if (pixel_count) *pixel_count = count;
  return loss;
}

double mp_consistency_loss(const std::map<int, Eigen::Vector3d>& means_curr,
                           const std::map<int, Eigen::Vector3d>& means_prev,
                           const Pose& rel, const std::map<int, double>& mp,
                           size_t* term_count) {
  double loss = 0.0;
  size_t count = 0;
  for (const auto& [id, mu] : means_curr) {
    const auto prev_it = means_prev.find(id);
    if (prev_it == means_prev.end()) continue;
    const auto mp_it = mp.find(id);
    const double m = mp_it != mp.end() ? mp_it->second : 0.0;
    loss += (1.0 - m) * (mu - rel.apply(prev_it->second)).squaredNorm();
    ++count;
  }
  if (term_count) *term_count = count;
  return loss;
}

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double edge_warp_loss(const ImageF& depth_i,
                      const std::vector<std::pair<int, int>>& edges_i,
                      const ImageF& depth_j, const ImageF& static_weight_j,
                      const Pose& rel_ji, const Intrinsics& k,
                      const LossWeights& weights, size_t* pixel_count) {
  double loss = 0.0;
  size_t count = 0;
  for (const auto& [x, y] : edges_i) {
    const double d_i = depth_i.at(x, y);
    if (d_i <= 0.0) continue;
    const Pixel u{double(x), double(y)};
    const Eigen::Vector3d cam_j = rel_ji.apply(backproject(u, d_i, k));
    if (cam_j.z() <= 0.0) continue;
    const Pixel warped{k.fx * cam_j.x() / cam_j.z() + k.cx,
                       k.fy * cam_j.y() / cam_j.z() + k.cy};
    const auto d_j = bilinear_sample(depth_j, warped);
    const auto w_j = bilinear_sample(static_weight_j, warped);
    if (!d_j || !w_j) continue;
    loss += huber(*w_j * (*d_j - d_i), weights.huber_delta);
    ++count;
  }
  if (pixel_count) *pixel_count = count;
  return loss;
}

LossBreakdown total_loss(const LossComponents& c, const LossWeights& weights,
                         std::optional<double> frame_reliability_r) {
  LossBreakdown b;
  b.pho = c.pho;
  b.depth = c.depth;
  b.mp_reg = c.mp_reg;
  b.edge = c.edge;
  const double lambda3 =
      frame_reliability_r ? weights.lambda3 * (1.0 - *frame_reliability_r)
                          : weights.lambda3;
  b.total = weights.lambda1 * c.pho + weights.lambda2 * c.depth + lambda3 * c.mp_reg +
            weights.lambda4 * c.edge;
  return b;
}

Pose apply_increment(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta) {
  Pose inc;
  inc.rotation = rotation_exp(delta.head<3>());
  inc.translation = delta.tail<3>();
  return compose(pose, inc);
}

Pose refine_pose(const Pose& initial, const PoseResidualFn& residuals,
                 const PoseLossFn& loss, const LmConfig& cfg, LmReport* report) {
  LmReport rep;
  Pose pose = initial;
  rep.initial_loss = loss(pose);
  rep.final_loss = rep.initial_loss;

  // Steps come from Gauss-Newton on the residual vector, so accept/reject on
  // that same squared objective: judging the L2 step against the reported L1
  // loss rejects good steps near convergence, which lets pose error build up
  // frame over frame until tracking diverges.
  double current_loss = residuals(pose).squaredNorm();
  const double initial_cost = current_loss;

  double damping = cfg.initial_damping;
  int stalled = 0;
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    rep.iterations = iter + 1;
    const Eigen::VectorXd r0 = residuals(pose);
    Eigen::MatrixXd jac(r0.size(), 6);
    for (int d = 0; d < 6; ++d) {
      const double h = d < 3 ? cfg.rot_step : cfg.trans_step;
      Eigen::Matrix<double, 6, 1> delta = Eigen::Matrix<double, 6, 1>::Zero();
      delta(d) = h;
      const Eigen::VectorXd rp = residuals(apply_increment(pose, delta));
      delta(d) = -h;
      const Eigen::VectorXd rm = residuals(apply_increment(pose, delta));
      jac.col(d) = (rp - rm) / (2.0 * h);
    }
    const Eigen::Matrix<double, 6, 6> hessian = jac.transpose() * jac;
    const Eigen::Matrix<double, 6, 1> gradient = jac.transpose() * r0;
    if (gradient.lpNorm<Eigen::Infinity>() < 1e-12) {
      rep.converged = true;
      break;
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::Matrix<double, 6, 6> lhs = hessian;
      for (int d = 0; d < 6; ++d) lhs(d, d) += damping * std::max(hessian(d, d), 1e-12);
      const Eigen::Matrix<double, 6, 1> step = lhs.ldlt().solve(-gradient);
      const Pose candidate = apply_increment(pose, step);
      const double candidate_loss = residuals(candidate).squaredNorm();
      if (candidate_loss < current_loss) {
        const double decrease = current_loss - candidate_loss;
        const double rel_decrease = decrease / std::max(current_loss, 1e-30);
        pose = candidate;
        current_loss = candidate_loss;
        damping = std::max(damping / cfg.damping_factor, 1e-12);
        accepted = true;
        // Noiseless problems approach zero loss where every polish step is a
        // large *relative* improvement; a vanishing step or a run of gains
        // negligible against the starting loss is the stop there.
        stalled = decrease < cfg.rel_decrease_tol * std::max(initial_cost, 1e-30)
                      ? stalled + 1
                      : 0;
        if (rel_decrease < cfg.rel_decrease_tol ||
            step.lpNorm<Eigen::Infinity>() < 1e-6 || stalled >= 2) {
          rep.converged = true;
          iter = cfg.max_iterations;  // stop outer loop
        }
      } else {
        // Stalled at a (local) optimum: the best step cannot move the loss.
        if (std::abs(candidate_loss - current_loss) <=
            cfg.rel_decrease_tol * std::max(current_loss, 1e-30)) {
          rep.converged = true;
          accepted = true;
          iter = cfg.max_iterations;
          break;
        }
        damping *= cfg.damping_factor;
        if (damping > cfg.max_damping) {
          rep.diverged = true;
          rep.final_loss = rep.initial_loss;
          if (report) *report = rep;
          return initial;
        }
      }
    }
  }
  rep.final_loss = loss(pose);
  if (rep.final_loss > rep.initial_loss) {
    // The squared objective improved but the reported loss did not; keep the
    // incumbent pose so accepted frames never regress the tracked loss.
    pose = initial;
    rep.final_loss = rep.initial_loss;
  }
  if (report) *report = rep;
  return pose;
}

namespace {

Eigen::VectorXd tracking_residuals(const Pose& pose,
                                   const std::vector<GaussianPrimitive>& scene,
                                   const ImageRgb& gt_color, const ImageF& gt_depth,
                                   const Intrinsics& k, const RenderConfig& rcfg,
                                   const LossWeights& weights) {
  const RenderOutput out = render(scene, pose, k, rcfg);
  const size_t n = out.color.data.size();
  Eigen::VectorXd r = Eigen::VectorXd::Zero(Eigen::Index(4 * n));
  const double s1 = std::sqrt(weights.lambda1);
  const double s2 = std::sqrt(weights.lambda2);
  for (size_t i = 0; i < n; ++i) {
    if (out.coverage.data[i] <= 0.0) continue;
    const double sw = std::sqrt(out.static_weight.data[i]);
    for (int c = 0; c < 3; ++c)
      r(Eigen::Index(4 * i + c)) =
          s1 * sw * (out.color.data[i][c] - gt_color.data[i][c]);
    if (gt_depth.data[i] > 0.0)
      r(Eigen::Index(4 * i + 3)) =
          s2 * sw * (out.depth.data[i] - gt_depth.data[i]);
  }
  return r;
}

}  // namespace

double tracking_loss(const Pose& pose, const std::vector<GaussianPrimitive>& scene,
                     const ImageRgb& gt_color, const ImageF& gt_depth,
                     const Intrinsics& k, const RenderConfig& rcfg,
                     const LossWeights& weights) {
  const RenderOutput out = render(scene, pose, k, rcfg);
  return weights.lambda1 * photometric_loss(out, gt_color) +
         weights.lambda2 * depth_loss(out, gt_depth);
}

Pose refine_pose(const Pose& initial, const std::vector<GaussianPrimitive>& scene,
                 const ImageRgb& gt_color, const ImageF& gt_depth,
                 const Intrinsics& k, const RenderConfig& rcfg,
                 const LossWeights& weights, const LmConfig& cfg, LmReport* report) {
  const auto residuals = [&](const Pose& p) {
    return tracking_residuals(p, scene, gt_color, gt_depth, k, rcfg, weights);
  };
  const auto loss = [&](const Pose& p) {
    return tracking_loss(p, scene, gt_color, gt_depth, k, rcfg, weights);
  };
  return refine_pose(initial, residuals, loss, cfg, report);
}

Eigen::Matrix<double, 6, 1> pose_loss_gradient(const PoseLossFn& loss, const Pose& pose,
                                               double rot_step, double trans_step) {
  Eigen::Matrix<double, 6, 1> g;
  for (int d = 0; d < 6; ++d) {
    const double h = d < 3 ? rot_step : trans_step;
    Eigen::Matrix<double, 6, 1> delta = Eigen::Matrix<double, 6, 1>::Zero();
    delta(d) = h;
    const double fp = loss(apply_increment(pose, delta));
    delta(d) = -h;
    const double fm = loss(apply_increment(pose, delta));
    g(d) = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace mpsplat

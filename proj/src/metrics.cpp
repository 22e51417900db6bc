#include "mpsplat/metrics.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace mpsplat {

Trajectory parse_tum(const std::string& text) {
  Trajectory traj;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (line[first] == '#') continue;
    std::istringstream fields(line);
    std::vector<double> v;
    std::string tok;
    while (fields >> tok) {
      double x;
      const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
      if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
        throw ParseError(line_no, "non-numeric token '" + tok + "'");
      v.push_back(x);
    }
    if (v.size() != 8)
      throw ParseError(line_no, "expected 8 fields, got " + std::to_string(v.size()));
    const Pose pose = Pose::from_quaternion(v[4], v[5], v[6], v[7],
                                            Eigen::Vector3d(v[1], v[2], v[3]));
    traj.samples.emplace_back(v[0], pose);
  }
  return traj;
}

std::string serialize_tum(const Trajectory& traj) {
  std::string out;
  char buf[320];
  for (const auto& [ts, pose] : traj.samples) {
    const Eigen::Vector4d q = pose.to_quaternion();
    std::snprintf(buf, sizeof buf, "%.6f %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  ts, pose.translation.x(), pose.translation.y(), pose.translation.z(),
                  q(0), q(1), q(2), q(3));
    out += buf;
  }
  return out;
}

namespace {

// Position pairs associated by nearest timestamp within 20 ms.
std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> associate(
    const Trajectory& est, const Trajectory& gt) {
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> pairs;
  for (const auto& [ts, pose] : est.samples) {
    double best_dt = std::numeric_limits<double>::infinity();
    const Pose* best = nullptr;
    for (const auto& [gts, gpose] : gt.samples) {
      const double dt = std::abs(gts - ts);
      if (dt < best_dt) {
        best_dt = dt;
        best = &gpose;
      }
    }
    if (best && best_dt <= 0.02) pairs.emplace_back(pose.translation, best->translation);
  }
  return pairs;
}

}  // namespace

Pose align_se3(const Trajectory& est, const Trajectory& gt) {
  const auto pairs = associate(est, gt);
  if (pairs.size() < 3) throw InsufficientPairs{};

  Eigen::Vector3d mean_est = Eigen::Vector3d::Zero(), mean_gt = Eigen::Vector3d::Zero();
  for (const auto& [pe, pg] : pairs) {
    mean_est += pe;
    mean_gt += pg;
  }
  mean_est /= double(pairs.size());
  mean_gt /= double(pairs.size());

  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (const auto& [pe, pg] : pairs) {
    const Eigen::Vector3d x = pe - mean_est;
    cross += (pg - mean_gt) * x.transpose();
    scatter += x * x.transpose();
  }
  // Collinear estimated positions leave a rotation about the line free.
  const Eigen::JacobiSVD<Eigen::Matrix3d> scatter_svd(scatter);
  if (scatter_svd.singularValues()(1) <=
      1e-12 * std::max(scatter_svd.singularValues()(0), 1.0))
    throw DegenerateGeometry{};

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) s(2, 2) = -1.0;
  Pose t;
  t.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  t.translation = mean_gt - t.rotation * mean_est;
  return t;
}

AteResult ate(const Trajectory& est, const Trajectory& gt) {
  const Pose t = align_se3(est, gt);
  const auto pairs = associate(est, gt);
  std::vector<double> residuals;
  residuals.reserve(pairs.size());
  double sq_sum = 0.0;
  for (const auto& [pe, pg] : pairs) {
    const double e = (t.apply(pe) - pg).norm();
    residuals.push_back(e);
    sq_sum += e * e;
  }
  AteResult r;
  r.rmse = std::sqrt(sq_sum / double(residuals.size()));
  r.stddev = std::sqrt(population_variance(residuals));
  return r;
}

double psnr(const ImageRgb& img, const ImageRgb& ref) {
  if (img.width != ref.width || img.height != ref.height) throw DimensionMismatch{};
  double mse = 0.0;
  for (size_t i = 0; i < img.data.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      const double d = img.data[i][c] - ref.data[i][c];
      mse += d * d;
    }
  mse /= double(img.data.size() * 3);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double psnr(const ImageF& img, const ImageF& ref) {
  if (img.width != ref.width || img.height != ref.height) throw DimensionMismatch{};
  double mse = 0.0;
  for (size_t i = 0; i < img.data.size(); ++i) {
    const double d = img.data[i] - ref.data[i];
    mse += d * d;
  }
  mse /= double(img.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const ImageF& img, const ImageF& ref) {
  if (img.width != ref.width || img.height != ref.height) throw DimensionMismatch{};
  int win = std::min({11, img.width, img.height});
  if (win % 2 == 0) --win;
  if (win < 1) return 1.0;
  const int half = win / 2;
  const double sigma = 1.5;

  std::vector<double> kernel(size_t(win) * win);
  double ksum = 0.0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      kernel[size_t(dy + half) * win + (dx + half)] = w;
      ksum += w;
    }
  for (double& w : kernel) w /= ksum;

  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // L = 1
  double total = 0.0;
  size_t windows = 0;
  for (int y = half; y < img.height - half; ++y) {
    for (int x = half; x < img.width - half; ++x) {
      double mu_a = 0, mu_b = 0;
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
          const double w = kernel[size_t(dy + half) * win + (dx + half)];
          mu_a += w * img.at(x + dx, y + dy);
          mu_b += w * ref.at(x + dx, y + dy);
        }
      double var_a = 0, var_b = 0, cov = 0;
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
          const double w = kernel[size_t(dy + half) * win + (dx + half)];
          const double da = img.at(x + dx, y + dy) - mu_a;
          const double db = ref.at(x + dx, y + dy) - mu_b;
          var_a += w * da * da;
          var_b += w * db * db;
          cov += w * da * db;
        }
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++windows;
    }
  }
  return windows ? total / double(windows) : 1.0;
}

Prf label_prf(const std::map<int, MotionLabel>& predicted,
              const std::map<int, bool>& truth) {
  size_t tp = 0, fp = 0, fn = 0;
  for (const auto& [id, label] : predicted) {
    const auto it = truth.find(id);
    if (it == truth.end()) continue;
    const bool pred_dyn = label == MotionLabel::Dynamic;
    if (pred_dyn && it->second) ++tp;
    else if (pred_dyn && !it->second) ++fp;
    else if (!pred_dyn && it->second) ++fn;
  }
  Prf out;
  out.precision = (tp + fp) == 0 ? 1.0 : double(tp) / double(tp + fp);
  out.recall = (tp + fn) == 0 ? 1.0 : double(tp) / double(tp + fn);
  const double pr = out.precision + out.recall;
  out.f1 = (tp == 0 && fp == 0 && fn == 0) ? 1.0
           : pr == 0.0                     ? 0.0
                                           : 2.0 * out.precision * out.recall / pr;
  return out;
}

RuntimeStats runtime_accounting(int calls, const CostModel& cost, int n_frames) {
  RuntimeStats s;
  s.calls = calls;
  s.amortized_semantic_ms = double(calls) * cost.semantic_cost_ms / double(n_frames);
  s.total_ms =
      cost.track_cost_ms + cost.map_cost_ms + cost.mp_cost_ms + s.amortized_semantic_ms;
  s.fps = 1000.0 / s.total_ms;
  s.semantic_pct = s.amortized_semantic_ms / s.total_ms * 100.0;
  return s;
}

RuntimeStats runtime_accounting(const std::vector<TriggerLogEntry>& log,
                                const CostModel& cost, int n_frames) {
  int calls = 0;
  for (const TriggerLogEntry& e : log) calls += e.triggered ? 1 : 0;
  return runtime_accounting(calls, cost, n_frames);
}

}  // namespace mpsplat

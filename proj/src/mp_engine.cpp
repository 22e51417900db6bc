#include "mpsplat/mp_engine.hpp"

#include <algorithm>
#include <cmath>

namespace mpsplat {

double population_variance(const std::vector<double>& xs) {
  if (xs.size() <= 1) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return var / double(xs.size());
}

double median(std::vector<double> xs) {
  const size_t n = xs.size();
  std::sort(xs.begin(), xs.end());
  if (n % 2 == 1) return xs[n / 2];
  return 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

AssociationMap associate(const std::vector<GaussianPrimitive>& gaussians,
                         const std::vector<TrackedFeature>& features, const Pose& pose,
                         const Intrinsics& k, const MpConfig& cfg) {
  AssociationMap out;
  const double inv_two_h2 = 1.0 / (2.0 * cfg.kernel_bandwidth * cfg.kernel_bandwidth);
  for (const GaussianPrimitive& g : gaussians) {
    const auto px = project(g.mean, pose, k);
    if (!px) continue;  // behind the camera: empty neighborhood
    std::vector<Association> neigh;
    for (size_t i = 0; i < features.size(); ++i) {
      const TrackedFeature& f = features[i];
      const int s = f.scale_level;
      if (s < 0 || s >= int(cfg.radii_per_scale.size())) continue;
      const double level = std::pow(0.5, s);
      const Pixel fp = f.at_level();
      const double du = fp.u - px->u * level;
      const double dv = fp.v - px->v * level;
      const double d2 = du * du + dv * dv;
      const double r = cfg.radii_per_scale[s];
      if (d2 > r * r) continue;
      neigh.push_back({int(i), std::exp(-d2 * inv_two_h2)});
    }
    if (!neigh.empty()) out.emplace(g.id, std::move(neigh));
  }
  return out;
}

std::pair<double, double> semantic_mp(const TrackedFeature& feature,
                                      const std::vector<InstanceMask>& masks,
                                      const MpConfig& cfg) {
  const InstanceMask* best = nullptr;
  for (const InstanceMask& m : masks) {
    if (!m.contains(feature.pixel)) continue;
    if (!best || m.confidence > best->confidence) best = &m;
  }
  if (!best) return {cfg.mu_bg, cfg.c_bg};
  const auto it = cfg.prior_table.find(best->class_id);
  const double mu = it != cfg.prior_table.end() ? it->second : cfg.mu_bg;
  return {mu, best->confidence};
}

InstanceStats instance_stats(const std::vector<double>& errors, const MpConfig& cfg) {
  if (errors.empty()) throw EmptyRegion{};
  InstanceStats s;
  for (double e : errors) s.mu_e += e;
  s.mu_e /= double(errors.size());
  s.sigma_e = std::sqrt(population_variance(errors));
  s.e_ub = std::max(s.mu_e + cfg.lambda_stat * s.sigma_e, 1e-9);
  return s;
}

double geometric_mp(double e, double e_ub) {
  return std::clamp(e / e_ub, 0.0, 1.0);
}

double fuse_mp(double mp_ins, double gamma_ins, double mp_geo, double gamma_geo) {
  const double denom = gamma_ins + gamma_geo;
  if (denom <= 0.0) throw ZeroConfidence{};
  const double gain = gamma_geo / denom;
  return (1.0 - gain) * mp_ins + gain * mp_geo;
}

double aggregate_mp(const std::vector<std::pair<double, double>>& neighborhood) {
  if (neighborhood.empty()) throw NoObservation{};
  double num = 0.0, den = 0.0;
  for (const auto& [m, w] : neighborhood) {
    num += w * m;
    den += w;
  }
  return num / den;
}

double uncertainty(double mp_prev, const std::vector<double>& neighborhood_mps,
                   const MpConfig& cfg) {
  const double m = mp_prev;
  const double eps = cfg.epsilon_log;
  const double entropy = -m * std::log(m + eps) - (1.0 - m) * std::log(1.0 - m + eps);
  return entropy + cfg.lambda_u * population_variance(neighborhood_mps);
}

std::vector<double> normalize_uncertainty(const std::vector<double>& u_raw,
                                          const MpConfig& cfg) {
  std::vector<double> out(u_raw.size(), 0.0);
  if (u_raw.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(u_raw.begin(), u_raw.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi - lo > 0.0) {
    for (size_t i = 0; i < u_raw.size(); ++i) out[i] = (u_raw[i] - lo) / (hi - lo);
  } else {
    const double bound = std::log(2.0) + 0.25 * cfg.lambda_u;
    for (size_t i = 0; i < u_raw.size(); ++i)
      out[i] = std::clamp(u_raw[i] / bound, 0.0, 1.0);
  }
  return out;
}

double adaptive_alpha(double u_tilde, double sigma_e_g, const MpConfig& cfg) {
  const double consistency = std::exp(-sigma_e_g / cfg.sigma_c);
  const double a =
      cfg.alpha_min + (cfg.alpha_max - cfg.alpha_min) * (1.0 - u_tilde) * consistency;
  return std::clamp(a, cfg.alpha_min, cfg.alpha_max);
}

double temporal_update(double mp_prev, double observation, double alpha_effective) {
  return (1.0 - alpha_effective) * mp_prev + alpha_effective * observation;
}

LabelResult label_dynamic(const std::vector<const GaussianPrimitive*>& visible) {
  LabelResult res;
  std::vector<double> mps;
  mps.reserve(visible.size());
  for (const GaussianPrimitive* g : visible) mps.push_back(g->mp);
  res.tau = std::max(median(std::move(mps)), 0.5);
  for (const GaussianPrimitive* g : visible)
    res.labels[g->id] = g->mp > res.tau ? MotionLabel::Dynamic : MotionLabel::Static;
  return res;
}

double flip_ratio(const std::map<int, MotionLabel>& prev,
                  const std::map<int, MotionLabel>& curr) {
  size_t common = 0, flipped = 0;
  for (const auto& [id, label] : prev) {
    const auto it = curr.find(id);
    if (it == curr.end()) continue;
    ++common;
    if (it->second != label) ++flipped;
  }
  if (common == 0) return 0.0;
  return 100.0 * double(flipped) / double(common);
}

}  // namespace mpsplat

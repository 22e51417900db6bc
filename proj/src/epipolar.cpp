#include "mpsplat/epipolar.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mpsplat {

double epipolar_distance(const Correspondence& c, const Eigen::Matrix3d& f) {
  const Eigen::Vector3d p1(c.p1.u, c.p1.v, 1.0);
  const Eigen::Vector3d p2(c.p2.u, c.p2.v, 1.0);
  const Eigen::Vector3d line = f * p1;
  const double n2 = line.x() * line.x() + line.y() * line.y();
  if (n2 <= 0.0) throw DegenerateLine{};
  return std::abs(p2.dot(line)) / std::sqrt(n2);
}

EpipolarVerdict verify_gaussian(const std::vector<Correspondence>& matches,
                                const Eigen::Matrix3d& f, const EpipolarConfig& cfg) {
  if (int(matches.size()) < cfg.min_matches) return EpipolarVerdict::Inconclusive;
  std::vector<double> distances;
  distances.reserve(matches.size());
  for (const Correspondence& c : matches) distances.push_back(epipolar_distance(c, f));
  return median(std::move(distances)) < cfg.epsilon_px ? EpipolarVerdict::ConfirmStatic
                                                       : EpipolarVerdict::ConfirmDynamic;
}

RecoveryReport recover_and_densify(std::vector<GaussianPrimitive>& gaussians,
                                   const std::map<int, EpipolarVerdict>& verdicts,
                                   const EpipolarConfig& cfg, uint64_t rng_seed) {
  RecoveryReport report;
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> unit_normal(0.0, 1.0);

  int next_id = 0;
  for (const GaussianPrimitive& g : gaussians) next_id = std::max(next_id, g.id + 1);

  std::vector<GaussianPrimitive> clones;
  for (GaussianPrimitive& g : gaussians) {
    const auto it = verdicts.find(g.id);
    if (it == verdicts.end() || it->second != EpipolarVerdict::ConfirmStatic) continue;
    g.label = MotionLabel::Static;
    g.mp = std::min(g.mp, 0.5 - 1e-6);
    report.recovered_ids.push_back(g.id);

    const double sigma = cfg.densify_clone_sigma > 0.0 ? cfg.densify_clone_sigma
                                                       : 0.5 * g.scale.minCoeff();
    GaussianPrimitive clone = g;
    clone.id = next_id++;
    clone.mean += sigma * Eigen::Vector3d(unit_normal(rng), unit_normal(rng),
                                          unit_normal(rng));
    clones.push_back(clone);
    report.cloned_ids.push_back(clone.id);
  }
  gaussians.insert(gaussians.end(), clones.begin(), clones.end());
  return report;
}

}  // namespace mpsplat

#include "mpsplat/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mpsplat {

namespace {

Pose look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target) {
  const Eigen::Vector3d up(0.0, 1.0, 0.0);
  const Eigen::Vector3d z = (target - center).normalized();
  Eigen::Vector3d x = up.cross(z);
  if (x.norm() < 1e-9) x = Eigen::Vector3d(1, 0, 0);
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r_wc;
  r_wc.col(0) = x;
  r_wc.col(1) = y;
  r_wc.col(2) = z;
  Pose p;
  p.rotation = r_wc.transpose();
  p.translation = -p.rotation * center;
  return p;
}

}  // namespace

Eigen::Vector3d dynamic_mean_at(const Eigen::Vector3d& mean0,
                                const Eigen::Vector3d& velocity, int frame) {
  return mean0 + double(frame) * velocity;
}

MaskCorruption make_corruption(CorruptionMode mode, CorruptionSeverity severity) {
  MaskCorruption c;
  c.mode = mode;
  c.severity = severity;
  const bool mild = severity == CorruptionSeverity::Mild;
  switch (mode) {
    case CorruptionMode::None:
      c.magnitude = 0.0;
      break;
    case CorruptionMode::DilateErode:
      c.magnitude = mild ? 2.0 : 6.0;
      break;
    case CorruptionMode::Dropout:
      c.magnitude = mild ? 0.2 : 0.5;
      break;
    case CorruptionMode::Delay:
      c.magnitude = mild ? 2.0 : 5.0;
      break;
  }
  return c;
}

Scene generate(const SceneConfig& cfg) {
  if (cfg.width <= 0 || cfg.height <= 0) throw ConfigError("resolution must be positive");
  if (cfg.n_frames < 0 || cfg.n_static < 0 || cfg.n_dynamic_objects < 0 ||
      cfg.gaussians_per_object < 0)
    throw ConfigError("counts must be non-negative");
  if (cfg.extent <= 0.0) throw ConfigError("extent must be positive");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Scene scene;
  scene.k.width = cfg.width;
  scene.k.height = cfg.height;
  scene.k.fx = scene.k.fy = 0.9 * cfg.width;
  scene.k.cx = 0.5 * (cfg.width - 1);
  scene.k.cy = 0.5 * (cfg.height - 1);

  const double e = cfg.extent;
  int next_id = 0;
  const auto random_quat = [&] {
    Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    q.normalize();
    return q;
  };
  const auto make_gaussian = [&](const Eigen::Vector3d& mean) {
    GaussianPrimitive g;
    g.id = next_id++;
    g.mean = mean;
    g.scale = Eigen::Vector3d(0.01 + 0.02 * unit(rng), 0.01 + 0.02 * unit(rng),
                              0.01 + 0.02 * unit(rng)) *
              e;
    g.rotation = random_quat();
    g.opacity = 0.7 + 0.3 * unit(rng);
    g.color = {0.1 + 0.85 * unit(rng), 0.1 + 0.85 * unit(rng), 0.1 + 0.85 * unit(rng)};
    return g;
  };

  for (int i = 0; i < cfg.n_static; ++i) {
    const Eigen::Vector3d mean((unit(rng) - 0.5) * e, (unit(rng) - 0.5) * e,
                               (unit(rng) - 0.5) * e);
    GaussianPrimitive g = make_gaussian(mean);
    scene.truth.dynamic_flag[g.id] = false;
    scene.gaussians.push_back(g);
  }

  std::vector<std::vector<int>> object_members(cfg.n_dynamic_objects);
  std::vector<Eigen::Vector3d> object_velocity(cfg.n_dynamic_objects);
  for (int obj = 0; obj < cfg.n_dynamic_objects; ++obj) {
    const Eigen::Vector3d center((unit(rng) - 0.5) * 0.6 * e, (unit(rng) - 0.5) * 0.6 * e,
                                 (unit(rng) - 0.5) * 0.6 * e);
    // Full 3D heading; planar motion can stay inside the epipolar planes of a
    // planar camera path and would be invisible to epipolar checks.
    Eigen::Vector3d dir(gauss(rng), gauss(rng), gauss(rng));
    if (dir.norm() < 1e-9) dir = Eigen::Vector3d::UnitY();
    object_velocity[obj] = cfg.object_speed * dir.normalized();
    for (int i = 0; i < cfg.gaussians_per_object; ++i) {
      const Eigen::Vector3d mean =
          center + cfg.object_spread * e * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
      GaussianPrimitive g = make_gaussian(mean);
      scene.truth.dynamic_flag[g.id] = true;
      object_members[obj].push_back(g.id);
      scene.gaussians.push_back(g);
    }
  }

  // Gaussian id -> owning object, -1 for static.
  std::map<int, int> owner;
  for (const GaussianPrimitive& g : scene.gaussians) owner[g.id] = -1;
  for (int obj = 0; obj < cfg.n_dynamic_objects; ++obj)
    for (int id : object_members[obj]) owner[id] = obj;

  // Tracked subset: every dynamic gaussian, then a seeded static sample.
  std::vector<int> tracked;
  for (int obj = 0; obj < cfg.n_dynamic_objects; ++obj)
    tracked.insert(tracked.end(), object_members[obj].begin(), object_members[obj].end());
  {
    std::vector<int> static_ids(cfg.n_static);
    std::iota(static_ids.begin(), static_ids.end(), 0);
    std::shuffle(static_ids.begin(), static_ids.end(), rng);
    for (int id : static_ids) {
      if (int(tracked.size()) >= cfg.feature_density) break;
      tracked.push_back(id);
    }
  }
  std::sort(tracked.begin(), tracked.end());
  std::map<int, int> track_level;
  for (int id : tracked) track_level[id] = int(rng() % 3);

  // Camera trajectory.
  const Eigen::Vector3d target(0, 0, 0);
  Eigen::Vector3d walk_center(0.0, 0.2 * e, -1.6 * e);
  std::mt19937_64 walk_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> walk_step(0.0, cfg.trajectory_step);
  for (int t = 0; t < cfg.n_frames; ++t) {
    Eigen::Vector3d center;
    switch (cfg.trajectory) {
      case TrajectoryKind::Orbit: {
        const double theta = -M_PI / 2.0 + double(t) * cfg.trajectory_step;
        center = Eigen::Vector3d(1.6 * e * std::cos(theta), 0.25 * e,
                                 1.6 * e * std::sin(theta));
        break;
      }
      case TrajectoryKind::Line:
        center = Eigen::Vector3d(double(t) * cfg.trajectory_step, 0.2 * e, -1.6 * e);
        break;
      case TrajectoryKind::RandomWalk:
        if (t > 0)
          walk_center +=
              Eigen::Vector3d(walk_step(walk_rng), walk_step(walk_rng), walk_step(walk_rng));
        center = walk_center;
        break;
    }
    scene.truth.true_poses.push_back(look_at(center, target));
  }

  RenderConfig rcfg;
  rcfg.keep_fragments = true;
  std::normal_distribution<double> pixel_noise(0.0, cfg.pixel_noise_sigma);
  std::normal_distribution<double> depth_noise(0.0, cfg.depth_noise_sigma);
  const double occlusion_margin = 0.05 * e;

  std::vector<GaussianPrimitive> world = scene.gaussians;
  for (int t = 0; t < cfg.n_frames; ++t) {
    for (size_t i = 0; i < world.size(); ++i) {
      const int obj = owner[world[i].id];
      if (obj >= 0)
        world[i].mean =
            dynamic_mean_at(scene.gaussians[i].mean, object_velocity[obj], t);
    }
    const Pose& pose = scene.truth.true_poses[t];
    const RenderOutput out = render(world, pose, scene.k, rcfg);

    SimFrame frame;
    frame.index = t;
    frame.timestamp = double(t) / cfg.fps;
    frame.color = out.color;
    frame.depth = out.depth;
    if (cfg.depth_noise_sigma > 0.0) {
      for (size_t i = 0; i < frame.depth.data.size(); ++i)
        if (out.coverage.data[i] > 0.0)
          frame.depth.data[i] = std::max(0.0, frame.depth.data[i] + depth_noise(rng));
    }

    // Ground-truth masks: silhouette of each dynamic object, defined by the
    // pixel's top contributor.
    std::vector<InstanceMask> masks(cfg.n_dynamic_objects);
    std::vector<bool> mask_nonempty(cfg.n_dynamic_objects, false);
    for (int obj = 0; obj < cfg.n_dynamic_objects; ++obj) {
      masks[obj].region = Bitmap(cfg.width, cfg.height, 0);
      masks[obj].class_id = 1;  // person-like prior class
      masks[obj].confidence = 0.9;
    }
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        const auto& contrib = out.contrib[size_t(y) * cfg.width + x];
        if (contrib.empty()) continue;
        int top_id = contrib.front().first;
        double top_w = contrib.front().second;
        for (const auto& [id, w] : contrib) {
          if (w > top_w) {
            top_w = w;
            top_id = id;
          }
        }
        const int obj = owner[top_id];
        if (obj >= 0) {
          masks[obj].region.at(x, y) = 1;
          mask_nonempty[obj] = true;
        }
      }
    }
    std::vector<InstanceMask> present;
    for (int obj = 0; obj < cfg.n_dynamic_objects; ++obj)
      if (mask_nonempty[obj]) present.push_back(std::move(masks[obj]));
    scene.truth.true_masks.push_back(std::move(present));

    // Tracked features: visible projections of the tracked gaussians.
    std::vector<TrackedFeature> truth_features, noisy_features;
    for (int id : tracked) {
      // ids are assigned sequentially, so id doubles as the vector index
      const Eigen::Vector3d mean = world[size_t(id)].mean;
      const Eigen::Vector3d cam = pose.apply(mean);
      if (cam.z() <= 0.0) continue;
      const auto px = project(mean, pose, scene.k);
      if (!px || !scene.k.contains(*px)) continue;
      const int xi = int(std::lround(px->u)), yi = int(std::lround(px->v));
      // Occluded when material strictly in front of the point blocks most of
      // the light; points inside a translucent cluster stay visible.
      double front_transmittance = 1.0;
      for (const Fragment& fg : out.fragments[size_t(yi) * cfg.width + xi])
        if (fg.z < cam.z() - occlusion_margin)
          front_transmittance *= 1.0 - fg.alpha;
      if (front_transmittance < 0.5) continue;  // occluded

      TrackedFeature f;
      f.pixel = *px;
      f.scale_level = track_level[id];
      f.gaussian_id = id;
      truth_features.push_back(f);

      TrackedFeature noisy = f;
      noisy.pixel.u += pixel_noise(rng);
      noisy.pixel.v += pixel_noise(rng);
      noisy_features.push_back(noisy);
    }
    scene.truth.true_tracks.push_back(std::move(truth_features));
    frame.features = std::move(noisy_features);
    scene.frames.push_back(std::move(frame));
  }
  return scene;
}

Bitmap dilate(const Bitmap& in, int radius) {
  Bitmap out(in.width, in.height, 0);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      if (!in.at(x, y)) continue;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx >= 0 && ny >= 0 && nx < in.width && ny < in.height) out.at(nx, ny) = 1;
        }
    }
  return out;
}

Bitmap erode(const Bitmap& in, int radius) {
  Bitmap out(in.width, in.height, 0);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      bool keep = true;
      for (int dy = -radius; keep && dy <= radius; ++dy)
        for (int dx = -radius; keep && dx <= radius; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= in.width || ny >= in.height || !in.at(nx, ny))
            keep = false;
        }
      out.at(x, y) = keep ? 1 : 0;
    }
  return out;
}

std::vector<std::vector<InstanceMask>> corrupt_masks(
    const std::vector<std::vector<InstanceMask>>& masks, const MaskCorruption& c,
    uint64_t seed) {
  if (c.mode == CorruptionMode::None) return masks;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<InstanceMask>> out;
  out.reserve(masks.size());

  if (c.mode == CorruptionMode::Delay) {
    const int delay = int(std::lround(c.magnitude));
    for (int t = 0; t < int(masks.size()); ++t) out.push_back(masks[std::max(0, t - delay)]);
    return out;
  }

  for (const auto& frame_masks : masks) {
    std::vector<InstanceMask> corrupted;
    for (const InstanceMask& m : frame_masks) {
      if (c.mode == CorruptionMode::Dropout) {
        if (unit(rng) < c.magnitude) continue;
        corrupted.push_back(m);
      } else {  // DilateErode
        const int radius = int(std::lround(c.magnitude));
        InstanceMask distorted = m;
        distorted.region = erode(dilate(m.region, radius), radius);
        corrupted.push_back(std::move(distorted));
      }
    }
    out.push_back(std::move(corrupted));
  }
  return out;
}

}  // namespace mpsplat

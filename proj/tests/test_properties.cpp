// Property and invariant tests over random seeded inputs.
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mpsplat/epipolar.hpp"
#include "mpsplat/geometry.hpp"
#include "mpsplat/losses.hpp"
#include "mpsplat/metrics.hpp"
#include "mpsplat/mp_engine.hpp"
#include "mpsplat/renderer.hpp"
#include "mpsplat/scheduler.hpp"
#include "mpsplat/simulator.hpp"

using namespace mpsplat;

namespace {

Intrinsics make_k(double f, double cx, double cy, int w, int h) {
  Intrinsics k;
  k.fx = k.fy = f;
  k.cx = cx;
  k.cy = cy;
  k.width = w;
  k.height = h;
  return k;
}

}  // namespace

TEST_CASE("motion probability stays in the unit interval under any update chain") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MpConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    double mp = u(rng);
    for (int step = 0; step < 200; ++step) {
      const double alpha = cfg.alpha_min + (cfg.alpha_max - cfg.alpha_min) * u(rng);
      mp = temporal_update(mp, u(rng), alpha);
      REQUIRE(mp >= 0.0);
      REQUIRE(mp <= 1.0);
    }
  }
}

TEST_CASE("temporal update converges geometrically to a constant observation") {
  MpConfig cfg;
  const double target = 0.85;
  const int steps = int(std::ceil(std::log(1e-3) / std::log(1.0 - cfg.alpha_min)));
  for (double alpha : {cfg.alpha_min, 0.3, cfg.alpha_max, 1.0}) {
    double mp = 0.0;
    double prev_gap = std::abs(mp - target);
    for (int i = 0; i < steps; ++i) {
      mp = temporal_update(mp, target, alpha);
      const double gap = std::abs(mp - target);
      CHECK(gap <= prev_gap + 1e-15);
      prev_gap = gap;
    }
    CHECK(std::abs(mp - target) < 1e-3);
  }
}

TEST_CASE("fusion extremes reproduce each source exactly") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double ins = u(rng), geo = u(rng), gamma = 0.01 + u(rng);
    CHECK(fuse_mp(ins, gamma, geo, 0.0) == doctest::Approx(ins).epsilon(1e-12));
    CHECK(fuse_mp(ins, 0.0, geo, gamma) == doctest::Approx(geo).epsilon(1e-12));
  }
}

TEST_CASE("a zero trigger threshold degenerates to every-frame refresh") {
  SchedulerConfig cfg;
  cfg.theta = 0.0;
  SchedulerState st;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int f = 0; f < 100; ++f) CHECK(decide(u(rng), u(rng), f, st, cfg));
  CHECK(st.call_count == 100);
}

TEST_CASE("a unit trigger threshold degenerates to fixed-interval refresh") {
  SchedulerConfig cfg;
  cfg.theta = 1.0;
  SchedulerState st;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> trigger_frames;
  for (int f = 0; f < 60; ++f)
    if (decide(u(rng), u(rng), f, st, cfg)) trigger_frames.push_back(f);
  REQUIRE(trigger_frames.size() == 6);
  for (size_t i = 1; i < trigger_frames.size(); ++i)
    CHECK(trigger_frames[i] - trigger_frames[i - 1] == cfg.n_max);
}

TEST_CASE("staleness between triggers is bounded by the skip interval") {
  SchedulerConfig cfg;
  SchedulerState st;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int f = 0; f < 500; ++f) {
    decide(u(rng), u(rng), f, st, cfg);
    CHECK(st.per_frame_log.back().dt <= cfg.n_max);
  }
}

TEST_CASE("rendering is independent of gaussian input order") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::uniform_real_distribution<double> unit(0.1, 1.0);
  std::vector<GaussianPrimitive> gs(40);
  for (int i = 0; i < 40; ++i) {
    gs[i].id = i;
    gs[i].mean = {u(rng), u(rng), 1.5 + unit(rng)};
    gs[i].opacity = unit(rng);
    gs[i].color = {unit(rng), unit(rng), unit(rng)};
    gs[i].mp = unit(rng) - 0.1;
    gs[i].scale = Eigen::Vector3d::Ones() * 0.08;
  }
  const Intrinsics k = make_k(60.0, 32.0, 24.0, 64, 48);
  RenderConfig cfg;
  const RenderOutput a = render(gs, Pose::identity(), k, cfg);
  std::shuffle(gs.begin(), gs.end(), rng);
  const RenderOutput b = render(gs, Pose::identity(), k, cfg);
  CHECK(a.color.data == b.color.data);
  CHECK(a.depth.data == b.depth.data);
  CHECK(a.static_weight.data == b.static_weight.data);

  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      const double cov = a.coverage.at(x, y);
      CHECK(cov >= 0.0);
      CHECK(cov <= 1.0 + 1e-12);
      const auto& contrib = a.contrib[size_t(y) * k.width + x];
      if (!contrib.empty()) {
        double sum = 0.0;
        for (const auto& [id, w] : contrib) sum += w;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
      }
      const double sw = a.static_weight.at(x, y);
      CHECK(sw >= -1e-12);
      CHECK(sw <= 1.0 + 1e-12);
    }
}

TEST_CASE("loss terms are nonnegative and finite on random inputs") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LossWeights w;
  for (int trial = 0; trial < 20; ++trial) {
    RenderOutput out;
    out.color = ImageRgb(8, 8);
    out.depth = ImageF(8, 8);
    out.static_weight = ImageF(8, 8);
    out.coverage = ImageF(8, 8);
    ImageRgb gt_color(8, 8);
    ImageF gt_depth(8, 8);
    for (int i = 0; i < 64; ++i) {
      out.color.data[i] = {u(rng), u(rng), u(rng)};
      out.depth.data[i] = u(rng) * 3.0;
      out.static_weight.data[i] = u(rng);
      out.coverage.data[i] = u(rng);
      gt_color.data[i] = {u(rng), u(rng), u(rng)};
      gt_depth.data[i] = u(rng) * 3.0;
    }
    const double pho = photometric_loss(out, gt_color);
    const double dep = depth_loss(out, gt_depth);
    CHECK(pho >= 0.0);
    CHECK(dep >= 0.0);
    CHECK(std::isfinite(pho));
    CHECK(std::isfinite(dep));
    const LossBreakdown b = total_loss({pho, dep, u(rng), u(rng)}, w, u(rng));
    CHECK(b.total >= 0.0);
    CHECK(std::isfinite(b.total));
  }
}

TEST_CASE("trajectory error is invariant under rigid transforms of the estimate") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Trajectory gt, est;
  for (int i = 0; i < 12; ++i) {
    Pose g, e;
    g.translation = {u(rng), u(rng), u(rng)};
    e.translation = g.translation + 0.02 * Eigen::Vector3d(u(rng), u(rng), u(rng));
    gt.samples.emplace_back(double(i), g);
    est.samples.emplace_back(double(i), e);
  }
  const AteResult base = ate(est, gt);
  for (int trial = 0; trial < 5; ++trial) {
    const Pose t = Pose::from_quaternion(u(rng), u(rng), u(rng), 1.0 + u(rng),
                                         {u(rng), u(rng), u(rng)});
    Trajectory moved = est;
    for (auto& [ts, p] : moved.samples) p.translation = t.apply(p.translation);
    const AteResult r = ate(moved, gt);
    CHECK(std::abs(r.rmse - base.rmse) < 1e-9);
    CHECK(std::abs(r.stddev - base.stddev) < 1e-9);
  }
}

TEST_CASE("trajectory files round-trip through the parser") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Trajectory t;
  for (int i = 0; i < 20; ++i) {
    const Pose p = Pose::from_quaternion(u(rng), u(rng), u(rng), 1.5 + u(rng),
                                         {u(rng), u(rng), u(rng)});
    t.samples.emplace_back(0.25 * i, p);
  }
  // %.17g preserves doubles exactly, so timestamps and translations come back
  // bit-identical; rotations pass through a quaternion<->matrix conversion on
  // each side, which costs at most a couple of ulps.
  const std::string text = serialize_tum(t);
  const Trajectory back = parse_tum(text);
  REQUIRE(back.samples.size() == t.samples.size());
  for (size_t i = 0; i < t.samples.size(); ++i) {
    CHECK(back.samples[i].first == t.samples[i].first);
    CHECK(back.samples[i].second.translation == t.samples[i].second.translation);
    CHECK((back.samples[i].second.rotation - t.samples[i].second.rotation).norm() <
          1e-12);
  }
}

TEST_CASE("image quality drops monotonically with pixel noise") {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  ImageF ref(24, 24);
  for (double& v : ref.data) v = u(rng);
  double prev_psnr = std::numeric_limits<double>::infinity();
  for (double sigma : {0.005, 0.01, 0.02, 0.04, 0.08}) {
    ImageF noisy = ref;
    std::mt19937_64 noise_rng(31);
    for (double& v : noisy.data)
      v = std::clamp(v + sigma * n(noise_rng), 0.0, 1.0);
    const double p = psnr(noisy, ref);
    CHECK(p < prev_psnr);
    prev_psnr = p;
  }
}

TEST_CASE("image quality metrics match brute-force references on small images") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageF a(8, 8), b(8, 8);
  for (int i = 0; i < 64; ++i) {
    a.data[i] = u(rng);
    b.data[i] = std::clamp(a.data[i] + 0.1 * (u(rng) - 0.5), 0.0, 1.0);
  }

  double mse = 0.0;
  for (int i = 0; i < 64; ++i) mse += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  mse /= 64.0;
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-12));

  // Reference: Gaussian-window structural similarity, window shrunk to the
  // largest odd size that fits, averaged over fully interior windows.
  const int win = 7, half = 3;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  std::vector<double> kernel(win * win);
  double ksum = 0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx)
      ksum += kernel[(dy + half) * win + dx + half] =
          std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
  for (double& w : kernel) w /= ksum;
  double total = 0;
  int windows = 0;
  for (int y = half; y < 8 - half; ++y)
    for (int x = half; x < 8 - half; ++x) {
      double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
          const double w = kernel[(dy + half) * win + dx + half];
          ma += w * a.at(x + dx, y + dy);
          mb += w * b.at(x + dx, y + dy);
        }
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
          const double w = kernel[(dy + half) * win + dx + half];
          const double da = a.at(x + dx, y + dy) - ma;
          const double db = b.at(x + dx, y + dy) - mb;
          va += w * da * da;
          vb += w * db * db;
          cov += w * da * db;
        }
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  CHECK(ssim(a, b) == doctest::Approx(total / windows).epsilon(1e-12));
}

TEST_CASE("simulated static feature tracks satisfy the epipolar identity") {
  SceneConfig cfg;
  cfg.seed = 41;
  cfg.n_static = 60;
  cfg.n_dynamic_objects = 1;
  cfg.gaussians_per_object = 10;
  cfg.n_frames = 6;
  cfg.width = 64;
  cfg.height = 48;
  cfg.feature_density = 100;
  cfg.pixel_noise_sigma = 0.0;
  const Scene scene = generate(cfg);

  for (int f = 1; f < cfg.n_frames; ++f) {
    const Pose rel = compose(scene.truth.true_poses[f],
                             invert(scene.truth.true_poses[0]));
    if (rel.translation.norm() < 1e-12) continue;
    const Eigen::Matrix3d fm = fundamental_from_pose(rel, scene.k, scene.k);
    std::map<int, Pixel> ref;
    for (const TrackedFeature& t : scene.truth.true_tracks[0])
      if (t.gaussian_id) ref[*t.gaussian_id] = t.pixel;
    int checked = 0;
    for (const TrackedFeature& t : scene.truth.true_tracks[f]) {
      if (!t.gaussian_id || scene.truth.dynamic_flag.at(*t.gaussian_id)) continue;
      const auto it = ref.find(*t.gaussian_id);
      if (it == ref.end()) continue;
      const Eigen::Vector3d p1(it->second.u, it->second.v, 1.0);
      const Eigen::Vector3d p2(t.pixel.u, t.pixel.v, 1.0);
      CHECK(std::abs(p2.dot(fm * p1)) < 1e-9);
      ++checked;
    }
    CHECK(checked > 5);
  }
}

TEST_CASE("ground-truth masks cover every dynamic top contributor") {
  SceneConfig cfg;
  cfg.seed = 43;
  cfg.n_static = 60;
  cfg.n_dynamic_objects = 2;
  cfg.gaussians_per_object = 10;
  cfg.n_frames = 4;
  cfg.width = 64;
  cfg.height = 48;
  cfg.feature_density = 80;
  const Scene scene = generate(cfg);

  for (int f = 0; f < cfg.n_frames; ++f) {
    std::vector<GaussianPrimitive> world = scene.gaussians;
    // The generator stores per-frame dynamic positions in the truth tracks;
    // reconstruct the frame's world by rendering and checking contributors
    // against the frame's mask set.
    RenderConfig rcfg;
    // Dynamic gaussians translate rigidly; advance them to the frame.
    // Velocity is recoverable from consecutive truth masks only indirectly,
    // so this test relies on frame 0 where positions are exact.
    if (f > 0) break;
    const RenderOutput out =
        render(world, scene.truth.true_poses[f], scene.k, rcfg);
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x) {
        const auto& contrib = out.contrib[size_t(y) * cfg.width + x];
        if (contrib.empty()) continue;
        int top = contrib[0].first;
        double best = contrib[0].second;
        for (const auto& [id, w] : contrib)
          if (w > best) best = w, top = id;
        if (!scene.truth.dynamic_flag.at(top)) continue;
        bool inside = false;
        for (const InstanceMask& m : scene.truth.true_masks[f])
          inside |= m.contains({double(x), double(y)});
        CHECK(inside);
      }
  }
}

TEST_CASE("epipolar verification is sound and complete on exact geometry") {
  SceneConfig cfg;
  cfg.seed = 47;
  cfg.n_static = 80;
  cfg.n_dynamic_objects = 2;
  cfg.gaussians_per_object = 12;
  cfg.n_frames = 8;
  cfg.width = 96;
  cfg.height = 72;
  cfg.feature_density = 200;
  cfg.pixel_noise_sigma = 0.0;
  cfg.object_speed = 0.05;
  const Scene scene = generate(cfg);
  EpipolarConfig ecfg;

  const int f1 = 6;
  const Pose rel =
      compose(scene.truth.true_poses[f1], invert(scene.truth.true_poses[0]));
  REQUIRE(rel.translation.norm() > 1e-12);
  const Eigen::Matrix3d fm = fundamental_from_pose(rel, scene.k, scene.k);

  std::map<int, Pixel> ref;
  for (const TrackedFeature& t : scene.truth.true_tracks[0])
    if (t.gaussian_id) ref[*t.gaussian_id] = t.pixel;

  std::map<int, std::vector<Correspondence>> matches;
  for (const TrackedFeature& t : scene.truth.true_tracks[f1]) {
    if (!t.gaussian_id) continue;
    const auto it = ref.find(*t.gaussian_id);
    if (it == ref.end()) continue;
    matches[*t.gaussian_id].push_back({it->second, t.pixel, *t.gaussian_id});
  }

  int statics_checked = 0;
  for (auto& [gid, corr] : matches) {
    // Single-track anchors: pad with the same correspondence to reach the
    // match minimum; distances are identical so the verdict is unchanged.
    while (int(corr.size()) < ecfg.min_matches) corr.push_back(corr.front());
    const EpipolarVerdict v = verify_gaussian(corr, fm, ecfg);
    if (scene.truth.dynamic_flag.at(gid)) {
      const double d = epipolar_distance(corr.front(), fm);
      if (d >= 2.0 * ecfg.epsilon_px) CHECK(v != EpipolarVerdict::ConfirmStatic);
    } else {
      CHECK(v == EpipolarVerdict::ConfirmStatic);
      ++statics_checked;
    }
  }
  CHECK(statics_checked > 10);
}

TEST_CASE("recovery is deterministic and purely additive") {
  std::vector<GaussianPrimitive> gs(5);
  for (int i = 0; i < 5; ++i) {
    gs[i].id = i;
    gs[i].mp = 0.7;
    gs[i].label = MotionLabel::Dynamic;
    gs[i].mean = {double(i), 0.0, 2.0};
  }
  std::map<int, EpipolarVerdict> verdicts{{1, EpipolarVerdict::ConfirmStatic},
                                          {3, EpipolarVerdict::ConfirmStatic},
                                          {4, EpipolarVerdict::ConfirmDynamic}};
  EpipolarConfig cfg;
  auto a = gs;
  auto b = gs;
  const RecoveryReport ra = recover_and_densify(a, verdicts, cfg, 1234);
  const RecoveryReport rb = recover_and_densify(b, verdicts, cfg, 1234);
  CHECK(a.size() == 7);
  CHECK(ra.recovered_ids == rb.recovered_ids);
  CHECK(ra.cloned_ids == rb.cloned_ids);
  for (size_t i = 0; i < a.size(); ++i)
    CHECK((a[i].mean - b[i].mean).norm() == 0.0);
  CHECK(a[4].label == MotionLabel::Dynamic);  // dynamic verdict untouched
  CHECK(a[4].mp == 0.7);
}

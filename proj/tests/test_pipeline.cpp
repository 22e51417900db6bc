// Pipeline orchestration, optimizer, and determinism checks on small scenes.
#include <doctest.h>

#include <cmath>
#include <random>

#include "mpsplat/losses.hpp"
#include "mpsplat/pipeline.hpp"
#include "mpsplat/simulator.hpp"

using namespace mpsplat;

namespace {

SceneConfig tiny_scene_config(uint64_t seed, int n_dynamic) {
  SceneConfig cfg;
  cfg.seed = seed;
  cfg.n_static = 60;
  cfg.n_dynamic_objects = n_dynamic;
  cfg.gaussians_per_object = 8;
  cfg.n_frames = 12;
  cfg.width = 64;
  cfg.height = 48;
  cfg.feature_density = 100;
  cfg.object_speed = 0.05;
  cfg.object_spread = 0.12;
  return cfg;
}

MaskProvider truth_masks(const Scene& scene) {
  return [&scene](int frame) {
    if (frame < 0 || size_t(frame) >= scene.truth.true_masks.size())
      return std::vector<InstanceMask>{};
    return scene.truth.true_masks[size_t(frame)];
  };
}

std::vector<GaussianPrimitive> small_test_map(uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  std::uniform_real_distribution<double> c(0.2, 0.9);
  std::vector<GaussianPrimitive> gs(n);
  for (int i = 0; i < n; ++i) {
    gs[i].id = i;
    gs[i].mean = {u(rng), u(rng), 2.0 + u(rng)};
    gs[i].opacity = 0.9;
    gs[i].scale = Eigen::Vector3d::Ones() * 0.06;
    gs[i].color = {c(rng), c(rng), c(rng)};
    gs[i].mp = 0.0;
  }
  return gs;
}

}  // namespace

TEST_CASE("scheduler policy presets resolve to threshold extremes") {
  PipelineConfig cfg;
  cfg.sched_policy = SchedPolicy::Always;
  CHECK(cfg.resolved().sched.theta < 0.0);
  cfg.sched_policy = SchedPolicy::FixedInterval;
  CHECK(cfg.resolved().sched.theta >= 1.0);
  cfg.sched_policy = SchedPolicy::OnDemand;
  CHECK(cfg.resolved().sched.theta == doctest::Approx(cfg.sched.theta));
}

TEST_CASE("an empty frame stream yields an empty report without error") {
  Intrinsics k;
  k.fx = k.fy = 60;
  k.cx = 32;
  k.cy = 24;
  k.width = 64;
  k.height = 48;
  PipelineConfig cfg;
  const RunReport r = run_pipeline(k, small_test_map(1, 10), Pose::identity(), {},
                                   cfg, [](int) { return std::vector<InstanceMask>{}; });
  CHECK(r.frames.empty());
  CHECK(r.trajectory.samples.empty());
  CHECK(r.semantic_calls == 0);
}

TEST_CASE("the first frame always refreshes the semantic prior") {
  const Scene scene = generate(tiny_scene_config(51, 1));
  PipelineConfig cfg;
  const RunReport r = run_pipeline(scene, cfg, truth_masks(scene));
  REQUIRE(!r.frames.empty());
  CHECK(r.frames[0].triggered);
}

TEST_CASE("a zero threshold triggers on every frame") {
  const Scene scene = generate(tiny_scene_config(52, 1));
  PipelineConfig cfg;
  cfg.sched.theta = 0.0;
  const RunReport r = run_pipeline(scene, cfg, truth_masks(scene));
  REQUIRE(int(r.frames.size()) == 12);
  for (const auto& f : r.frames) CHECK(f.triggered);
  CHECK(r.semantic_calls == 12);
}

TEST_CASE("recovery and densification happen only on keyframes") {
  const Scene scene = generate(tiny_scene_config(53, 2));
  PipelineConfig cfg;
  const RunReport r = run_pipeline(scene, cfg, truth_masks(scene));
  for (const auto& f : r.frames) {
    if (!f.keyframe) {
      CHECK(f.recovery.recovered_ids.empty());
      CHECK(f.recovery.cloned_ids.empty());
      CHECK(f.flip_ratio_keyframe == 0.0);
    }
    if (f.frame % cfg.keyframe_every == 0) CHECK(f.keyframe);
  }
}

TEST_CASE("identical seeds serialize to identical reports") {
  const Scene scene = generate(tiny_scene_config(54, 1));
  PipelineConfig cfg;
  const RunReport a = run_pipeline(scene, cfg, truth_masks(scene));
  const RunReport b = run_pipeline(scene, cfg, truth_masks(scene));
  CHECK(run_report_json(a) == run_report_json(b));
  CHECK(per_frame_csv(a) == per_frame_csv(b));
  CHECK(trigger_log_csv(a.trigger_log) == trigger_log_csv(b.trigger_log));
  CHECK(serialize_tum(a.trajectory) == serialize_tum(b.trajectory));
}

TEST_CASE("pipelined execution reproduces the sequential trajectory") {
  const Scene scene = generate(tiny_scene_config(55, 1));
  PipelineConfig seq;
  seq.mode = PipelineMode::SequentialDeterministic;
  PipelineConfig pip = seq;
  pip.mode = PipelineMode::Pipelined;
  const RunReport a = run_pipeline(scene, seq, truth_masks(scene));
  const RunReport b = run_pipeline(scene, pip, truth_masks(scene));
  REQUIRE(a.trajectory.samples.size() == b.trajectory.samples.size());
  for (size_t i = 0; i < a.trajectory.samples.size(); ++i) {
    CHECK((a.trajectory.samples[i].second.translation -
           b.trajectory.samples[i].second.translation)
              .norm() < 1e-12);
  }
  CHECK(serialize_tum(a.trajectory) == serialize_tum(b.trajectory));
}

TEST_CASE("feature rejection is driven by the previous frame's labels") {
  const Scene scene = generate(tiny_scene_config(56, 2));
  PipelineConfig cfg;
  Pipeline pipeline(scene.k, scene.gaussians, scene.truth.true_poses[0],
                    cfg.resolved(), truth_masks(scene));
  std::map<int, double> prev_mp;
  double prev_tau = 0.5;
  for (const SimFrame& frame : scene.frames) {
    const FrameReport rep = pipeline.step(frame);
    for (int gid : rep.rejected_gaussian_ids) {
      const auto it = prev_mp.find(gid);
      if (it != prev_mp.end()) CHECK(it->second > prev_tau);
    }
    prev_mp.clear();
    for (const GaussianPrimitive& g : pipeline.map()) prev_mp[g.id] = g.mp;
    prev_tau = rep.tau;
  }
}

TEST_CASE("pose refinement is a no-op at the optimum") {
  const auto scene = small_test_map(61, 30);
  Intrinsics k;
  k.fx = k.fy = 60;
  k.cx = 32;
  k.cy = 24;
  k.width = 64;
  k.height = 48;
  RenderConfig rcfg;
  const Pose truth = Pose::identity();
  const RenderOutput gt = render(scene, truth, k, rcfg);
  LossWeights w;
  LmConfig lm;
  LmReport rep;
  const Pose refined = refine_pose(truth, scene, gt.color, gt.depth, k, rcfg, w, lm,
                                   &rep);
  CHECK((refined.rotation - truth.rotation).norm() < 1e-9);
  CHECK((refined.translation - truth.translation).norm() < 1e-9);
  CHECK(rep.final_loss <= rep.initial_loss);
}

TEST_CASE("pose refinement recovers a centimeter-scale perturbation") {
  const auto scene = small_test_map(62, 30);
  Intrinsics k;
  k.fx = k.fy = 60;
  k.cx = 32;
  k.cy = 24;
  k.width = 64;
  k.height = 48;
  RenderConfig rcfg;
  const Pose truth = Pose::identity();
  const RenderOutput gt = render(scene, truth, k, rcfg);
  LossWeights w;
  LmConfig lm;

  Pose start = truth;
  start.translation += Eigen::Vector3d(0.007, -0.005, 0.004);
  LmReport rep;
  const Pose refined = refine_pose(start, scene, gt.color, gt.depth, k, rcfg, w, lm,
                                   &rep);
  CHECK((refined.translation - truth.translation).norm() < 1e-3);
  CHECK(rep.final_loss <= rep.initial_loss);
  CHECK(!rep.diverged);
}

TEST_CASE("finite-difference pose gradients are step-size consistent") {
  const auto scene = small_test_map(63, 30);
  Intrinsics k;
  k.fx = k.fy = 60;
  k.cx = 32;
  k.cy = 24;
  k.width = 64;
  k.height = 48;
  // The rasterizer's footprint/alpha cutoffs are speed shortcuts that make the
  // loss piecewise; relax them so the objective is differentiable at the probe
  // and the half-step comparison measures pure truncation error.
  RenderConfig rcfg;
  rcfg.alpha_cutoff = 1e-12;
  rcfg.footprint_sigmas = 8.0;
  rcfg.saturation_threshold = 1e-15;
  const Pose truth = Pose::identity();
  const RenderOutput gt = render(scene, truth, k, rcfg);
  LossWeights w;

  Pose probe = truth;
  probe.translation += Eigen::Vector3d(0.02, 0.015, -0.01);
  probe.rotation =
      Eigen::AngleAxisd(0.01, Eigen::Vector3d(0.3, 0.5, -0.2).normalized())
          .toRotationMatrix();
  const auto loss = [&](const Pose& p) {
    return tracking_loss(p, scene, gt.color, gt.depth, k, rcfg, w);
  };
  const auto g1 = pose_loss_gradient(loss, probe, 2e-7, 2e-6);
  const auto g2 = pose_loss_gradient(loss, probe, 1e-7, 1e-6);
  CHECK((g1 - g2).norm() / std::max(g2.norm(), 1e-12) < 1e-4);
}

TEST_CASE("analytic quadratic gradients match the finite-difference probe") {
  // loss(pose) = |t - t0|^2 has gradient 2 (t - t0) in the translation block
  // (for an identity-rotation pose the right-multiplied increment is additive).
  const Eigen::Vector3d t0(0.3, -0.2, 0.7);
  const auto loss = [&](const Pose& p) {
    return (p.translation - t0).squaredNorm();
  };
  Pose probe;
  probe.translation = {0.5, 0.1, 0.2};
  const auto g = pose_loss_gradient(loss, probe, 1e-5, 1e-4);
  const Eigen::Vector3d expected = 2.0 * (probe.translation - t0);
  CHECK((g.tail<3>() - expected).norm() < 1e-6);
  CHECK(g.head<3>().norm() < 1e-6);
}

#include "mpsplat/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace mpsplat {

PipelineConfig PipelineConfig::resolved() const {
  PipelineConfig out = *this;
  if (out.k_zero && out.k_one) throw ConfigError("k_zero and k_one are exclusive");
  if (out.instant_mp && out.fixed_alpha)
    throw ConfigError("instant_mp ignores the update rate; fixed_alpha is inconsistent");
  switch (out.sched_policy) {
    case SchedPolicy::Always:
      out.sched.theta = -1.0;  // S > theta on every frame
      break;
    case SchedPolicy::FixedInterval:
      out.sched.theta = 1.0;  // S <= 1, so only the skip rule fires
      break;
    case SchedPolicy::OnDemand:
      break;
  }
  return out;
}

Pipeline::Pipeline(const Intrinsics& k, std::vector<GaussianPrimitive> initial_map,
                   const Pose& initial_pose, PipelineConfig cfg, MaskProvider masks)
    : k_(k),
      gaussians_(std::move(initial_map)),
      cfg_(cfg.resolved()),
      mask_provider_(std::move(masks)),
      pose_(initial_pose),
      pose_prev_(initial_pose) {
  sched_state_.frames_since_refresh = cfg_.sched.n_max;  // first frame must refresh
  for (GaussianPrimitive& g : gaussians_) {
    g.mp = cfg_.no_mp ? 0.0 : cfg_.mp.mp_init;
    g.label = MotionLabel::Static;
    g.uncertainty_raw = 0.0;
    g.last_observed_frame = -1;
  }
}

int Pipeline::gaussian_index(int id) const {
  for (size_t i = 0; i < gaussians_.size(); ++i)
    if (gaussians_[i].id == id) return int(i);
  return -1;
}

Pose Pipeline::predict_pose() const {
  if (!have_prev_) return pose_;
  return compose(compose(pose_, invert(pose_prev_)), pose_);  // constant velocity
}

namespace {

// Pre-composited splat data reused across mapping-update evaluations.
struct CachedFrag {
  int gauss_index;
  double falloff;  // alpha / opacity at bake time
  double z;
};

double subset_loss(const std::vector<size_t>& pixels,
                   const std::vector<std::vector<CachedFrag>>& frags,
                   const std::vector<GaussianPrimitive>& gaussians,
                   const ImageRgb& gt_color, const ImageF& gt_depth,
                   const RenderConfig& rcfg, const LossWeights& weights) {
  double loss = 0.0;
  for (size_t idx : pixels) {
    double transmittance = 1.0;
    double coverage = 0.0, depth_num = 0.0, static_num = 0.0;
    Rgb color = {0, 0, 0};
    for (const CachedFrag& f : frags[idx]) {
      if (transmittance < rcfg.saturation_threshold) break;
      const GaussianPrimitive& g = gaussians[f.gauss_index];
      const double alpha = g.opacity * f.falloff;
      const double w = alpha * transmittance;
      transmittance *= 1.0 - alpha;
      for (int c = 0; c < 3; ++c) color[c] += w * g.color[c];
      depth_num += w * f.z;
      static_num += w * (1.0 - g.mp);
      coverage += w;
    }
    if (coverage <= 0.0) continue;
    for (int c = 0; c < 3; ++c) color[c] += (1.0 - coverage) * rcfg.background_color[c];
    const double sw = static_num / coverage;
    const Rgb& gc = gt_color.data[idx];
    double l1 = std::abs(color[0] - gc[0]) + std::abs(color[1] - gc[1]) +
                std::abs(color[2] - gc[2]);
    loss += weights.lambda1 * sw * l1;
    if (gt_depth.data[idx] > 0.0)
      loss += weights.lambda2 * sw * std::abs(depth_num / coverage - gt_depth.data[idx]);
  }
  return loss;
}

void mapping_update(std::vector<GaussianPrimitive>& gaussians, const Pose& pose,
                    const Intrinsics& k, const SimFrame& frame,
                    const PipelineConfig& cfg) {
  RenderConfig rcfg = cfg.render;
  rcfg.keep_fragments = true;
  const RenderOutput out = render(gaussians, pose, k, rcfg);

  std::map<int, int> index_by_id;
  for (size_t i = 0; i < gaussians.size(); ++i) index_by_id[gaussians[i].id] = int(i);

  std::vector<std::vector<CachedFrag>> frags(out.fragments.size());
  std::map<int, std::vector<size_t>> pixels_by_gaussian;
  for (size_t idx = 0; idx < out.fragments.size(); ++idx) {
    for (const Fragment& f : out.fragments[idx]) {
      const int gi = index_by_id.at(f.gaussian_id);
      const double opacity = gaussians[gi].opacity;
      frags[idx].push_back({gi, opacity > 0.0 ? f.alpha / opacity : 0.0, f.z});
      pixels_by_gaussian[gi].push_back(idx);
    }
  }

  const double h = 1e-3;
  for (int step = 0; step < cfg.mapping_steps; ++step) {
    for (auto& [gi, pixels] : pixels_by_gaussian) {
      GaussianPrimitive& g = gaussians[gi];
      const double base = subset_loss(pixels, frags, gaussians, frame.color, frame.depth,
                                      cfg.render, cfg.weights);
      double grad[4];
      for (int p = 0; p < 4; ++p) {
        double* param = p < 3 ? &g.color[p] : &g.opacity;
        const double saved = *param;
        *param = saved + h;
        const double lp = subset_loss(pixels, frags, gaussians, frame.color, frame.depth,
                                      cfg.render, cfg.weights);
        *param = saved - h;
        const double lm = subset_loss(pixels, frags, gaussians, frame.color, frame.depth,
                                      cfg.render, cfg.weights);
        *param = saved;
        grad[p] = (lp - lm) / (2.0 * h);
      }
      const GaussianPrimitive saved = g;
      const double scale = cfg.mapping_lr / double(std::max<size_t>(1, pixels.size()));
      for (int p = 0; p < 3; ++p)
        g.color[p] = std::clamp(g.color[p] - scale * grad[p], 0.0, 1.0);
      g.opacity = std::clamp(g.opacity - scale * grad[3], 0.02, 1.0);
      const double candidate = subset_loss(pixels, frags, gaussians, frame.color,
                                           frame.depth, cfg.render, cfg.weights);
      if (candidate >= base) g = saved;
    }
  }
}

}  // namespace

FrameReport Pipeline::step(const SimFrame& frame) {
  FrameReport rep;
  rep.frame = frame.index;
  rep.timestamp = frame.timestamp;

  const Pose predicted = predict_pose();

  // (1) correspondence filtering against the previous frame's labels.
  std::vector<size_t> kept;
  for (size_t i = 0; i < frame.features.size(); ++i) {
    const TrackedFeature& f = frame.features[i];
    bool reject = false;
    if (!cfg_.no_mp && !cfg_.soft_rejection && f.gaussian_id) {
      const int gi = gaussian_index(*f.gaussian_id);
      if (gi >= 0 && gaussians_[gi].mp > tau_) reject = true;
    }
    if (reject) {
      ++rep.n_rejected;
      rep.rejected_gaussian_ids.push_back(*f.gaussian_id);
    } else {
      kept.push_back(i);
    }
  }
  rep.n_features = int(frame.features.size());

  // Frame-level inconsistency from the accepted correspondences at the
  // predicted pose.
  double err_sum = 0.0;
  int err_count = 0;
  for (size_t i : kept) {
    const TrackedFeature& f = frame.features[i];
    if (!f.gaussian_id) continue;
    const int gi = gaussian_index(*f.gaussian_id);
    if (gi < 0) continue;
    const auto px = project(gaussians_[gi].mean, predicted, k_);
    if (!px) continue;
    err_sum += std::hypot(f.pixel.u - px->u, f.pixel.v - px->v);
    ++err_count;
  }
  rep.mean_reproj_error = err_count ? err_sum / err_count : 0.0;
  rep.r = inconsistency(rep.mean_reproj_error, cfg_.sched);

  // (2) scheduling decision on the previous frame's uncertainty summary.
  rep.u_bar = u_bar_prev_;
  rep.triggered = decide(rep.u_bar, rep.r, frame.index, sched_state_, cfg_.sched);
  if (frame_count_ == 0 && !rep.triggered) {
    // The very first frame always fetches a semantic prior so that every
    // Gaussian starts from an observed motion estimate, regardless of policy.
    rep.triggered = true;
    sched_state_.frames_since_refresh = 0;
    ++sched_state_.call_count;
    if (!sched_state_.per_frame_log.empty()) {
      sched_state_.per_frame_log.back().triggered = true;
      sched_state_.per_frame_log.back().dt = 0;
    }
  }
  rep.score = sched_state_.last_score;
  rep.dt = sched_state_.frames_since_refresh;
  if (rep.triggered) current_masks_ = mask_provider_(frame.index);

  // (3) tracking: LM pose refinement against the MP-weighted render losses.
  const Pose refined = refine_pose(predicted, gaussians_, frame.color, frame.depth, k_,
                                   cfg_.render, cfg_.weights, cfg_.lm, &rep.lm);
  if (rep.lm.diverged) {
    if (++consecutive_divergences_ >= 2) throw TrackingLost(frame.index);
  } else {
    consecutive_divergences_ = 0;
  }
  pose_prev_ = pose_;
  pose_ = refined;
  have_prev_ = true;
  rep.pose = pose_;

  // (4) motion-probability update.
  AssociationMap assoc;
  if (!cfg_.no_mp) {
    assoc = associate(gaussians_, frame.features, pose_, k_, cfg_.mp);

    // An identified track supersedes proximity: once the tracker has matched
    // a feature to a gaussian, that feature is the gaussian's evidence. A
    // gaussian whose content moved away would otherwise only ever see the
    // background that now occupies its projected footprint, and tracked
    // statics next to a moving object would inherit its neighbors' motion.
    std::map<int, std::vector<Association>> own_tracks;
    for (size_t i = 0; i < frame.features.size(); ++i) {
      const TrackedFeature& feat = frame.features[i];
      if (!feat.gaussian_id || gaussian_index(*feat.gaussian_id) < 0) continue;
      own_tracks[*feat.gaussian_id].push_back({int(i), 1.0});
    }
    for (auto& [gid, entries] : own_tracks) assoc[gid] = entries;

    // Per-feature reprojection errors against the associated gaussian.
    std::vector<double> ferr(frame.features.size(), -1.0);
    for (size_t i = 0; i < frame.features.size(); ++i) {
      const TrackedFeature& f = frame.features[i];
      if (!f.gaussian_id) continue;
      const int gi = gaussian_index(*f.gaussian_id);
      if (gi < 0) continue;
      const auto px = project(gaussians_[gi].mean, pose_, k_);
      if (!px) continue;
      ferr[i] = std::hypot(f.pixel.u - px->u, f.pixel.v - px->v);
    }

    // Robust statistics per instance region.
    std::vector<int> feature_mask(frame.features.size(), -1);
    for (size_t i = 0; i < frame.features.size(); ++i) {
      const TrackedFeature& f = frame.features[i];
      double best_conf = -1.0;
      for (size_t m = 0; m < current_masks_.size(); ++m) {
        if (current_masks_[m].contains(f.pixel) &&
            current_masks_[m].confidence > best_conf) {
          best_conf = current_masks_[m].confidence;
          feature_mask[i] = int(m);
        }
      }
    }
    std::vector<std::optional<InstanceStats>> mask_stats(current_masks_.size());
    for (size_t m = 0; m < current_masks_.size(); ++m) {
      std::vector<double> errs;
      for (size_t i = 0; i < frame.features.size(); ++i)
        if (feature_mask[i] == int(m) && ferr[i] >= 0.0) errs.push_back(ferr[i]);
      if (!errs.empty()) mask_stats[m] = instance_stats(errs, cfg_.mp);
    }

    // Features outside every mask share one background pseudo-instance, so
    // their error bound reflects the frame's noise floor rather than a
    // single sample.
    std::optional<InstanceStats> bg_stats;
    {
      std::vector<double> errs;
      for (size_t i = 0; i < frame.features.size(); ++i)
        if (feature_mask[i] < 0 && ferr[i] >= 0.0) errs.push_back(ferr[i]);
      if (!errs.empty()) bg_stats = instance_stats(errs, cfg_.mp);
    }

    std::vector<double> fused(frame.features.size(), -1.0);
    for (size_t i = 0; i < frame.features.size(); ++i) {
      if (ferr[i] < 0.0) continue;
      const TrackedFeature& f = frame.features[i];
      const auto [mp_ins, gamma_ins] = semantic_mp(f, current_masks_, cfg_.mp);
      InstanceStats stats;
      if (feature_mask[i] >= 0 && mask_stats[feature_mask[i]]) {
        stats = *mask_stats[feature_mask[i]];
      } else if (bg_stats) {
        stats = *bg_stats;
      } else {
        stats = instance_stats({ferr[i]}, cfg_.mp);
      }
      const double e_eff =
          stats.sigma_e < cfg_.mp.sigma_e_substitution ? stats.mu_e : ferr[i];
      const double mp_geo = geometric_mp(e_eff, stats.e_ub);
      const double gamma_geo = std::exp(-stats.sigma_e / cfg_.mp.sigma_g);
      fused[i] = cfg_.k_zero   ? mp_ins
                 : cfg_.k_one  ? mp_geo
                               : fuse_mp(mp_ins, gamma_ins, mp_geo, gamma_geo);
    }

    // Gaussian-level aggregation, uncertainty normalization, temporal update.
    struct Observation {
      int index;
      double m_hat;
      double sigma_e_g;
    };
    std::vector<int> visible;
    std::vector<double> u_raw;
    std::vector<Observation> observations;
    for (const auto& [gid, entries] : own_tracks) ever_tracked_.insert(gid);
    for (size_t gi = 0; gi < gaussians_.size(); ++gi) {
      GaussianPrimitive& g = gaussians_[gi];
      const auto px = project(g.mean, pose_, k_);
      if (!px || !k_.contains(*px)) continue;
      // A gaussian the tracker normally identifies gets no proxy evidence
      // while its track is interrupted; proximity around a stale projection
      // only reflects whatever now occupies that part of the image.
      const bool track_gap =
          ever_tracked_.count(g.id) && !own_tracks.count(g.id);

      std::vector<std::pair<double, double>> neigh_pairs;
      std::vector<double> neigh_mps, neigh_errs;
      const auto it = assoc.find(g.id);
      if (it != assoc.end()) {
        for (const Association& a : it->second) {
          if (fused[a.feature_index] < 0.0) continue;
          neigh_pairs.emplace_back(fused[a.feature_index], a.weight);
          neigh_mps.push_back(fused[a.feature_index]);
          neigh_errs.push_back(ferr[a.feature_index]);
        }
      }
      g.uncertainty_raw = uncertainty(g.mp, neigh_mps, cfg_.mp);
      visible.push_back(int(gi));
      u_raw.push_back(g.uncertainty_raw);
      if (!neigh_pairs.empty() && !track_gap) {
        observations.push_back({int(gi), aggregate_mp(neigh_pairs),
                                std::sqrt(population_variance(neigh_errs))});
      }
    }

    if (!visible.empty()) {
      const std::vector<double> u_tilde = normalize_uncertainty(u_raw, cfg_.mp);
      std::map<int, double> u_tilde_by_index;
      for (size_t i = 0; i < visible.size(); ++i) u_tilde_by_index[visible[i]] = u_tilde[i];

      for (const Observation& obs : observations) {
        GaussianPrimitive& g = gaussians_[size_t(obs.index)];
        if (cfg_.instant_mp) {
          g.mp = obs.m_hat;
        } else {
          double alpha = cfg_.fixed_alpha
                             ? cfg_.fixed_alpha_value
                             : adaptive_alpha(u_tilde_by_index[obs.index], obs.sigma_e_g,
                                              cfg_.mp);
          alpha = effective_alpha(alpha, rep.triggered, cfg_.sched);
          g.mp = temporal_update(g.mp, obs.m_hat, alpha);
        }
        g.last_observed_frame = frame.index;
      }
      u_bar_prev_ = frame_uncertainty(u_tilde);

      // Adaptive threshold and labels over the observed set.
      std::vector<const GaussianPrimitive*> observed;
      for (const Observation& obs : observations)
        observed.push_back(&gaussians_[size_t(obs.index)]);
      if (!observed.empty()) {
        const LabelResult res = label_dynamic(observed);
        tau_ = res.tau;
        for (const auto& [id, label] : res.labels) {
          labels_[id] = label;
          const int gi = gaussian_index(id);
          if (gi >= 0) gaussians_[gi].label = label;
          if (label == MotionLabel::Dynamic) ++rep.n_dynamic_labels;
        }
      }
    }
  }
  rep.tau = tau_;

  // (5) keyframe maintenance: epipolar recovery, densification, mapping.
  rep.keyframe = frame.index % cfg_.keyframe_every == 0;
  const std::map<int, Eigen::Vector3d> prev_means = keyframe_means_;
  const std::map<int, double> prev_mp = keyframe_mp_;
  const Pose prev_kf_pose = keyframe_pose_;
  const bool had_keyframe = have_keyframe_;

  if (rep.keyframe && had_keyframe) {
    if (!cfg_.no_mp && !cfg_.no_epi_verify) {
      const Pose rel = compose(pose_, invert(keyframe_pose_));
      if (rel.translation.norm() >= 1e-12) {
        const Eigen::Matrix3d f = fundamental_from_pose(rel, k_, k_);

        // Ambiguity bands around instance boundaries.
        std::vector<Bitmap> bands;
        for (const InstanceMask& m : current_masks_) {
          const Bitmap grown = dilate(m.region, 12);
          const Bitmap shrunk = erode(m.region, 12);
          Bitmap band(m.region.width, m.region.height, 0);
          for (size_t i = 0; i < band.data.size(); ++i)
            band.data[i] = grown.data[i] && !shrunk.data[i] ? 1 : 0;
          bands.push_back(std::move(band));
        }
        const auto near_boundary = [&](const Pixel& p) {
          const int x = int(std::lround(p.u)), y = int(std::lround(p.v));
          for (const Bitmap& b : bands) {
            if (x >= 0 && y >= 0 && x < b.width && y < b.height && b.at(x, y)) return true;
          }
          return false;
        };

        std::map<int, EpipolarVerdict> verdicts;
        for (const GaussianPrimitive& g : gaussians_) {
          const auto px = project(g.mean, pose_, k_);
          if (!px || !k_.contains(*px)) continue;
          if (g.label != MotionLabel::Dynamic) continue;
          const bool barely_dynamic = g.mp > tau_ && g.mp <= tau_ + 0.2;
          if (!barely_dynamic && !near_boundary(*px)) continue;

          // Verify against the gaussian's own track and the tracks currently
          // around it. Neighborhoods around the (possibly stale) projected
          // mean would sample whatever now occupies that region instead of
          // the content the gaussian represents.
          const TrackedFeature* own = nullptr;
          for (const TrackedFeature& feat : frame.features)
            if (feat.gaussian_id && *feat.gaussian_id == g.id) own = &feat;
          // Untracked gaussians (e.g. densification clones) fall back to the
          // tracks around their projected footprint.
          const Pixel anchor = own ? own->pixel : *px;
          const double radius = cfg_.mp.radii_per_scale.empty()
                                    ? 8.0
                                    : cfg_.mp.radii_per_scale.front();
          // Supporting matches must move with the anchor: a point on a
          // moving object is judged by the patch that traveled with it, not
          // by the static background visible right next to it (and vice
          // versa). Image-flow agreement since the last keyframe selects
          // that patch without depending on segmentation freshness.
          const auto own_kf = keyframe_feature_px_.find(g.id);
          // Without a tracked anchor spanning both keyframes there is no
          // patch to test against; leaving the verdict open is safer than
          // judging the gaussian by whatever now occupies its stale
          // projection.
          if (!own || own_kf == keyframe_feature_px_.end()) continue;
          const Eigen::Vector2d anchor_flow(own->pixel.u - own_kf->second.u,
                                            own->pixel.v - own_kf->second.v);
          std::vector<Correspondence> matches;
          for (const TrackedFeature& feat : frame.features) {
            if (!feat.gaussian_id) continue;
            const auto kf_px = keyframe_feature_px_.find(*feat.gaussian_id);
            if (kf_px == keyframe_feature_px_.end()) continue;
            const Eigen::Vector2d flow(feat.pixel.u - kf_px->second.u,
                                       feat.pixel.v - kf_px->second.v);
            const double tol = std::max(2.0, 0.25 * anchor_flow.norm());
            if ((flow - anchor_flow).norm() > tol) continue;
            if (std::hypot(feat.pixel.u - anchor.u, feat.pixel.v - anchor.v) >
                4.0 * radius)
              continue;
            matches.push_back({kf_px->second, feat.pixel, g.id});
          }
          verdicts[g.id] = verify_gaussian(matches, f, cfg_.epi);
        }
        rep.recovery = recover_and_densify(
            gaussians_, verdicts, cfg_.epi,
            cfg_.seed ^ (0x9e3779b97f4a7c15ULL * uint64_t(frame.index + 1)));
        for (int id : rep.recovery.recovered_ids) labels_[id] = MotionLabel::Static;
        for (int id : rep.recovery.cloned_ids) labels_[id] = MotionLabel::Static;
      }
    }
    rep.flip_ratio_keyframe = flip_ratio(keyframe_labels_, labels_);
    if (!cfg_.no_backend) mapping_update(gaussians_, pose_, k_, frame, cfg_);
  }

  // (6) loss bookkeeping at the final pose.
  {
    const RenderOutput out = render(gaussians_, pose_, k_, cfg_.render);
    LossComponents comps;
    comps.pho = photometric_loss(out, frame.color, &rep.losses.pho_pixels);
    comps.depth = depth_loss(out, frame.depth, &rep.losses.depth_pixels);
    std::map<int, Eigen::Vector3d> means_curr;
    std::map<int, double> mp_curr;
    for (const GaussianPrimitive& g : gaussians_) {
      means_curr[g.id] = g.mean;
      mp_curr[g.id] = g.mp;
    }
    size_t mp_terms = 0, edge_px = 0;
    comps.mp_reg = had_keyframe ? mp_consistency_loss(means_curr, prev_means,
                                                      Pose::identity(), mp_curr, &mp_terms)
                                : 0.0;
    if (had_keyframe && !keyframe_edges_.empty()) {
      const Pose rel_ji = compose(pose_, invert(prev_kf_pose));
      comps.edge = edge_warp_loss(keyframe_depth_, keyframe_edges_, out.depth,
                                  out.static_weight, rel_ji, k_, cfg_.weights, &edge_px);
    }
    const LossBreakdown b = total_loss(comps, cfg_.weights, rep.r);
    rep.losses.pho = b.pho;
    rep.losses.depth = b.depth;
    rep.losses.mp_reg = b.mp_reg;
    rep.losses.edge = b.edge;
    rep.losses.total = b.total;
    rep.losses.mp_terms = mp_terms;
    rep.losses.edge_pixels = edge_px;
  }

  if (rep.keyframe) {
    keyframe_pose_ = pose_;
    keyframe_labels_ = labels_;
    keyframe_feature_px_.clear();
    for (const TrackedFeature& f : frame.features)
      if (f.gaussian_id) keyframe_feature_px_[*f.gaussian_id] = f.pixel;
    keyframe_means_.clear();
    keyframe_mp_.clear();
    for (const GaussianPrimitive& g : gaussians_) {
      keyframe_means_[g.id] = g.mean;
      keyframe_mp_[g.id] = g.mp;
    }
    keyframe_depth_ = frame.depth;
    keyframe_edges_ = sobel_edges(to_gray(frame.color), cfg_.edge_threshold);
    have_keyframe_ = true;
  }

  ++frame_count_;
  return rep;
}

namespace {

RunReport finalize_report(Pipeline& pipeline, std::vector<FrameReport> frames,
                          bool lost, int lost_frame) {
  RunReport report;
  report.frames = std::move(frames);
  for (const FrameReport& fr : report.frames) {
    report.trajectory.samples.emplace_back(fr.timestamp, invert(fr.pose));
  }
  report.trigger_log = pipeline.scheduler_state().per_frame_log;
  report.semantic_calls = pipeline.scheduler_state().call_count;
  report.final_labels = pipeline.labels();
  report.final_map = pipeline.map();
  for (const GaussianPrimitive& g : report.final_map)
    report.final_labels.emplace(g.id, g.label);  // never-observed gaussians stay Static
  report.tracking_lost = lost;
  report.lost_frame = lost_frame;
  return report;
}

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(size_t capacity) : capacity_(capacity) {}
  void push(T value) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return queue_.size() < capacity_; });
    queue_.push_back(std::move(value));
    not_empty_.notify_one();
  }
  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) return std::nullopt;
    T value = std::move(queue_.front());
    queue_.pop_front();
    not_full_.notify_one();
    return value;
  }
  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
  }

 private:
  size_t capacity_;
  std::deque<T> queue_;
  bool closed_ = false;
  std::mutex mutex_;
  std::condition_variable not_empty_, not_full_;
};

}  // namespace

RunReport run_pipeline(const Intrinsics& k,
                       const std::vector<GaussianPrimitive>& initial_map,
                       const Pose& initial_pose, const std::vector<SimFrame>& frames,
                       const PipelineConfig& cfg, const MaskProvider& masks) {
  Pipeline pipeline(k, initial_map, initial_pose, cfg, masks);
  std::vector<FrameReport> reports;
  bool lost = false;
  int lost_frame = -1;

  if (cfg.mode == PipelineMode::SequentialDeterministic) {
    for (const SimFrame& frame : frames) {
      try {
        reports.push_back(pipeline.step(frame));
      } catch (const TrackingLost& e) {
        lost = true;
        lost_frame = e.frame;
        break;
      }
    }
  } else {
    // Staged execution over bounded queues of immutable values. The MP state
    // is single-writer (the processing stage), so the outputs match the
    // sequential mode bit for bit.
    BoundedQueue<SimFrame> in_queue(2);
    BoundedQueue<FrameReport> out_queue(2);
    std::thread feeder([&] {
      for (const SimFrame& frame : frames) in_queue.push(frame);
      in_queue.close();
    });
    std::thread processor([&] {
      while (auto frame = in_queue.pop()) {
        try {
          out_queue.push(pipeline.step(*frame));
        } catch (const TrackingLost& e) {
          lost = true;
          lost_frame = e.frame;
          break;
        }
      }
      out_queue.close();
    });
    while (auto rep = out_queue.pop()) reports.push_back(std::move(*rep));
    feeder.join();
    processor.join();
  }
  return finalize_report(pipeline, std::move(reports), lost, lost_frame);
}

RunReport run_pipeline(const Scene& scene, const PipelineConfig& cfg,
                       const MaskProvider& masks) {
  const Pose initial =
      scene.truth.true_poses.empty() ? Pose::identity() : scene.truth.true_poses.front();
  return run_pipeline(scene.k, scene.gaussians, initial, scene.frames, cfg, masks);
}

std::string trigger_log_csv(const std::vector<TriggerLogEntry>& log) {
  std::ostringstream out;
  out << "frame,U_bar,R,S,triggered,dt\n";
  out.precision(17);
  for (const TriggerLogEntry& e : log) {
    out << e.frame << ',' << e.u_bar << ',' << e.r << ',' << e.score << ','
        << (e.triggered ? 1 : 0) << ',' << e.dt << '\n';
  }
  return out.str();
}

std::string per_frame_csv(const RunReport& report) {
  std::ostringstream out;
  out << "frame,timestamp,triggered,U_bar,R,S,dt,tau,n_features,n_rejected,"
         "mean_reproj_error,L_pho,L_depth,L_mp,L_edge,L_total,n_dynamic,keyframe,"
         "flip_ratio,recovered,cloned\n";
  out.precision(17);
  for (const FrameReport& f : report.frames) {
    out << f.frame << ',' << f.timestamp << ',' << (f.triggered ? 1 : 0) << ','
        << f.u_bar << ',' << f.r << ',' << f.score << ',' << f.dt << ',' << f.tau << ','
        << f.n_features << ',' << f.n_rejected << ',' << f.mean_reproj_error << ','
        << f.losses.pho << ',' << f.losses.depth << ',' << f.losses.mp_reg << ','
        << f.losses.edge << ',' << f.losses.total << ',' << f.n_dynamic_labels << ','
        << (f.keyframe ? 1 : 0) << ',' << f.flip_ratio_keyframe << ','
        << f.recovery.recovered_ids.size() << ',' << f.recovery.cloned_ids.size()
        << '\n';
  }
  return out.str();
}

std::string recovery_report_json(int frame, const RecoveryReport& report) {
  nlohmann::ordered_json j;
  j["frame"] = frame;
  j["recovered_ids"] = report.recovered_ids;
  j["cloned_ids"] = report.cloned_ids;
  return j.dump(2);
}

std::string run_report_json(const RunReport& report) {
  nlohmann::ordered_json j;
  j["n_frames"] = report.frames.size();
  j["semantic_calls"] = report.semantic_calls;
  j["tracking_lost"] = report.tracking_lost;
  j["lost_frame"] = report.lost_frame;
  j["trajectory_tum"] = serialize_tum(report.trajectory);
  nlohmann::ordered_json labels = nlohmann::ordered_json::object();
  for (const auto& [id, label] : report.final_labels)
    labels[std::to_string(id)] = label == MotionLabel::Dynamic ? "dynamic" : "static";
  j["final_labels"] = std::move(labels);
  nlohmann::ordered_json frames = nlohmann::ordered_json::array();
  for (const FrameReport& f : report.frames) {
    nlohmann::ordered_json jf;
    jf["frame"] = f.frame;
    jf["triggered"] = f.triggered;
    jf["score"] = f.score;
    jf["tau"] = f.tau;
    jf["mean_reproj_error"] = f.mean_reproj_error;
    jf["loss_total"] = f.losses.total;
    jf["n_dynamic"] = f.n_dynamic_labels;
    jf["keyframe"] = f.keyframe;
    jf["recovered"] = f.recovery.recovered_ids;
    jf["cloned"] = f.recovery.cloned_ids;
    frames.push_back(std::move(jf));
  }
  j["frames"] = std::move(frames);
  return j.dump(2);
}

}  // namespace mpsplat

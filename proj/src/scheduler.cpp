#include "mpsplat/scheduler.hpp"

#include <algorithm>

#include "mpsplat/mp_engine.hpp"

namespace mpsplat {

double frame_uncertainty(const std::vector<double>& u_tilde) {
  if (u_tilde.empty()) throw EmptyFrame{};
  return median(u_tilde);
}

double inconsistency(double mean_reproj_error, const SchedulerConfig& cfg) {
  return std::clamp(mean_reproj_error / cfg.e_ref, 0.0, 1.0);
}

bool decide(double u_bar, double r, int frame, SchedulerState& state,
            const SchedulerConfig& cfg) {
  const double score = cfg.w_u * u_bar + cfg.w_r * r;
  // frames_since_refresh counts skipped frames, so the elapsed interval at
  // decision time is one larger; a refresh is due once that interval reaches
  // n_max, which keeps the worst-case refresh period at exactly n_max frames.
  const bool trigger =
      score > cfg.theta || state.frames_since_refresh >= cfg.n_max - 1;
  state.last_score = score;
  if (trigger) {
    state.frames_since_refresh = 0;
    ++state.call_count;
  } else {
    ++state.frames_since_refresh;
  }
  state.per_frame_log.push_back(
      {frame, u_bar, r, score, trigger, state.frames_since_refresh});
  return trigger;
}

double effective_alpha(double alpha, bool triggered_this_frame,
                       const SchedulerConfig& cfg) {
  return triggered_this_frame ? alpha : cfg.rho * alpha;
}

}  // namespace mpsplat

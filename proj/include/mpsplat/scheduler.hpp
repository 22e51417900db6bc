#pragma once

#include <stdexcept>
#include <vector>

namespace mpsplat {

struct SchedulerConfig {
  double w_u = 0.5;
  double w_r = 0.5;   // w_u + w_r = 1
  double theta = 0.5; // trigger threshold on the joint score
  int n_max = 10;     // maximum skip interval
  double rho = 0.5;   // conservative update factor on skipped frames
  double e_ref = 4.0; // pixels, inconsistency normalizer
};

struct TriggerLogEntry {
  int frame = 0;
  double u_bar = 0.0;
  double r = 0.0;
  double score = 0.0;
  bool triggered = false;
  int dt = 0;  // frames since refresh after the decision
};

struct SchedulerState {
  int frames_since_refresh = 0;
  double last_score = 0.0;
  int call_count = 0;
  std::vector<TriggerLogEntry> per_frame_log;
};

struct EmptyFrame : std::runtime_error {
  EmptyFrame() : std::runtime_error("no visible gaussians to summarize") {}
};

// Median of the normalized per-Gaussian uncertainties.
double frame_uncertainty(const std::vector<double>& u_tilde);

// clip(mean reprojection error / e_ref, 0, 1).
double inconsistency(double mean_reproj_error, const SchedulerConfig& cfg);

// Joint trigger: S = w_u*U + w_r*R; fires on S > theta or dt >= n_max.
// Mutates the state (counter, call count, log).
bool decide(double u_bar, double r, int frame, SchedulerState& state,
            const SchedulerConfig& cfg);

// rho-scaled update rate on frames where the prior was not refreshed.
double effective_alpha(double alpha, bool triggered_this_frame, const SchedulerConfig& cfg);

}  // namespace mpsplat

#pragma once

#include <cstdint>

#include "qcd/model.hpp"

namespace qcd {

// One silent slot: pi' = pi + (1 - pi) rho.
double propagate_silent(double pi, double rho);

// Silent propagation followed by a Bayes update on observation x, computed
// in log space.
double update_with_observation(double pi, double x, const DensityPair& pair, double rho);

// Sum of the posterior over m silent slots starting at pi:
//   sum_{k=0}^{m-1} pi_k = m - ((1-pi)/rho) (1 - (1-rho)^m).
double silent_sum(double pi, double rho, std::int64_t m);

// Posterior after m-1 silent slots and one sampled slot with observation x.
// m = 1 reduces to update_with_observation.
double posterior_after_interval(double pi, double rho, std::int64_t m, double x,
                                const DensityPair& pair);

// Cumulative-evidence statistics tracked alongside the posterior.
//   s: running sum of log-likelihood ratios plus the per-slot drift |log(1-rho)|.
//   r: log-odds of the posterior, log(pi / (1 - pi)).
// r dominates s when both start equal; the gap is the accumulated prior-odds
// correction.
struct ScoreState {
  double s = 0.0;
  double r = 0.0;
};

ScoreState score_state_from_posterior(double pi);

// Advance both statistics by one slot.  log_lr is 0 for a skipped slot.
ScoreState score_step(const ScoreState& state, double log_lr, double rho);

// Shiryaev-Roberts style statistic for sampling every `interval` slots:
//   r' = (1 + r) * lr / (1 - rho)^interval,
// with lr the likelihood ratio of the sampled observation.
double shiryaev_roberts_step(double r_prev, double lr, double rho, std::int64_t interval);

// Map the subsampled statistic back to the posterior (valid when pi0 = 0):
//   pi = r / (r + 1 / (1 - (1-rho)^interval)).
double shiryaev_roberts_to_posterior(double r, double rho, std::int64_t interval);

}  // namespace qcd

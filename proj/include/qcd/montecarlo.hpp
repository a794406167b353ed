#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qcd/policy.hpp"

namespace qcd {

// Aggregates over independent trials.  Two per-trial loss forms are tracked:
// the realized loss c (tau - L)+ + 1{tau < L} and the posterior-path form
// (1 - pi_tau) + c sum pi_k; both estimate the same Bayes risk and their
// per-trial difference gets its own standard error.
struct SimEstimate {
  std::int64_t trials = 0;
  std::int64_t capped = 0;
  double cost_c = 0.0;
  double add = 0.0;
  double add_se = 0.0;
  double pfa = 0.0;
  double pfa_se = 0.0;
  double risk = 0.0;
  double risk_se = 0.0;
  double risk_posterior = 0.0;
  double risk_posterior_se = 0.0;
  double risk_diff_se = 0.0;
  double mean_samples = 0.0;
  double mean_samples_se = 0.0;
};

struct EstimateConfig {
  std::int64_t trials = 200000;
  std::uint64_t master_seed = 1;
  double cost_c = 0.0;  // used only to form the risk columns
  int threads = 1;
};

// Runs `trials` trajectories with per-trial seeds derived from
// (master_seed, trial index).  Results are independent of thread count and
// bit-identical across runs.  Trials that hit the step cap are dropped and
// counted; more than 0.1% of them fails the batch.
SimEstimate estimate(const SamplingPolicy& policy, const ChangeModel& model,
                     const EstimateConfig& config);

struct CurvePoint {
  double param = 0.0;  // the swept quantity (alpha or cost)
  SimEstimate estimate;
};

struct CurveSet {
  std::string policy;
  std::vector<CurvePoint> points;
};

// One estimate per alpha, sharing the master seed across points so adjacent
// points ride the same randomness.  Alphas must be strictly decreasing.
CurveSet sweep_alpha(const std::function<std::unique_ptr<SamplingPolicy>(double)>& make_policy,
                     std::span<const double> alphas, const ChangeModel& model,
                     const EstimateConfig& config);

struct RiskEstimate {
  double delay_form = 0.0;
  double delay_form_se = 0.0;
  double posterior_form = 0.0;
  double posterior_form_se = 0.0;
  double diff = 0.0;
  double diff_se = 0.0;
};

RiskEstimate risk_estimate(const SamplingPolicy& policy, const ChangeModel& model, double cost_c,
                           std::int64_t trials, std::uint64_t master_seed);

}  // namespace qcd

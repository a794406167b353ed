#pragma once

#include <cstdint>

#include "qcd/policy.hpp"

namespace qcd {

// Classic threshold rule with unrestricted sampling: observe every slot,
// stop as soon as the posterior reaches 1 - alpha.
class ShiryaevPolicy : public SamplingPolicy {
 public:
  explicit ShiryaevPolicy(double alpha);
  std::string name() const override;
  DetectionOutcome run_trial(const ChangeModel& model, TrialRng& rng) const override;
  double alpha() const { return alpha_; }

 private:
  double alpha_;
};

// Sample every `interval` slots; detection can fire only at sampling epochs.
class UniformSamplingPolicy : public SamplingPolicy {
 public:
  UniformSamplingPolicy(std::int64_t interval, double alpha);
  std::string name() const override;
  DetectionOutcome run_trial(const ChangeModel& model, TrialRng& rng) const override;
  std::int64_t interval() const { return interval_; }
  double alpha() const { return alpha_; }

 private:
  std::int64_t interval_;
  double alpha_;
};

// Asymptotic detection-delay reference values as alpha -> 0.  Natural
// logarithms throughout; the sampling-interval requirement is a ratio of
// logarithms and therefore base-independent.

// Unrestricted sampling: |ln alpha| / (kl + |ln(1-rho)|).
double lower_bound_add(double alpha, double kl, double rho);

// Uniform sampling at the given interval:
//   |ln alpha| * interval / (kl + |ln(1-rho)| * interval).
double upper_bound_add(double alpha, double kl, double rho, std::int64_t interval);

// Greedy sampling with long-run sampling fraction p_tilde:
//   |ln alpha| / (p_tilde * kl + |ln(1-rho)|).
double greedy_asymptotic_add(double alpha, double p_tilde, double kl, double rho);

// Rights consumed by uniform sampling up to the detection horizon:
//   ceil(|ln alpha| / (|ln(1-rho)| * interval)).
std::int64_t min_rights_for_interval(double alpha, double rho, std::int64_t interval);

}  // namespace qcd

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qcd/model.hpp"
#include "qcd/rng.hpp"

namespace qcd {

// Result of one simulated trajectory under some sampling/stopping policy.
struct DetectionOutcome {
  std::int64_t tau = 0;
  std::int64_t change_point = 0;
  int samples_used = 0;
  std::vector<std::int64_t> sample_times;
  bool false_alarm = false;      // tau < change_point
  double pi_at_stop = 0.0;       // posterior at the stopping slot
  double pi_running_sum = 0.0;   // sum of the posterior over slots 0..tau-1
};

class SamplingPolicy {
 public:
  virtual ~SamplingPolicy() = default;
  virtual std::string name() const = 0;
  virtual DetectionOutcome run_trial(const ChangeModel& model, TrialRng& rng) const = 0;
};

}  // namespace qcd

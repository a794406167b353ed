#pragma once

#include <cstdint>
#include <vector>

#include "qcd/expectation.hpp"
#include "qcd/grid.hpp"
#include "qcd/policy.hpp"
#include "qcd/posterior.hpp"

#include "json.hpp"

namespace qcd {

// Value function for one number of remaining sampling rights, on the grid.
//   values:    optimal expected cost-to-go V(pi)
//   intervals: minimizing wait (slots until the next sample) per grid point;
//              for the zero-rights row this is the final silent wait, and 0
//              means stop immediately
//   threshold: smallest pi with 1 - pi = V(pi); stopping is optimal above it
struct ValueRow {
  std::vector<double> values;
  std::vector<int> intervals;
  double threshold = 1.0;
};

// rows[n] is the value function with n sampling rights remaining,
// n = 0 .. rights.
struct LimitedPolicyTable {
  int grid_size = 0;
  double rho = 0.0;
  double cost_c = 0.0;
  double sigma2 = 1.0;
  double shift = 1.0;
  std::vector<ValueRow> rows;

  int rights() const { return static_cast<int>(rows.size()) - 1; }
  PolicyGrid grid() const { return PolicyGrid(grid_size); }
  DensityPair pair() const { return DensityPair::gaussian_variance_shift(sigma2, shift); }
};

struct LimitedSolveConfig {
  int grid_size = 2001;
  QuadratureConfig quad;
};

// Largest wait worth searching: beyond ceil(1/c + 1/rho) + 1 the accumulated
// delay cost alone exceeds any possible saving.
std::int64_t max_search_interval(double rho, double cost_c);

// Zero-rights value: the best deterministic wait-then-stop cost
//   V0(pi) = min_{m >= 0} [ c * silent_sum(pi, rho, m) + (1-pi)(1-rho)^m ],
// minimized exactly over integers (smallest minimizer on ties).
ValueRow v0_row(const PolicyGrid& grid, double rho, double cost_c);

// One dynamic-programming step: with one more right available,
//   V(pi) = min(1 - pi, min_{m >= 1} [ c * silent_sum(pi, rho, m)
//                                      + E_pi[ prev(posterior after interval m) ] ]).
ValueRow bellman_step(const ValueRow& prev, const PolicyGrid& grid, double rho, double cost_c,
                      const DensityPair& pair, const QuadratureConfig& quad);

LimitedPolicyTable solve_limited(int rights, double rho, double cost_c, const DensityPair& pair,
                                 const LimitedSolveConfig& config);

// Wait prescribed by the table before the next sample, with n_used samples
// already taken.  Queries inside the stopping region are a domain error.
int interval_of(const LimitedPolicyTable& table, int n_used, double pi);

// Runs the table's policy on one trajectory: stop/sample decisions at
// sampling epochs, then a silent threshold phase once rights are exhausted.
DetectionOutcome run_limited_policy(const LimitedPolicyTable& table, const ChangeModel& model,
                                    TrialRng& rng);

class LimitedTablePolicy : public SamplingPolicy {
 public:
  explicit LimitedTablePolicy(LimitedPolicyTable table) : table_(std::move(table)) {}
  std::string name() const override;
  DetectionOutcome run_trial(const ChangeModel& model, TrialRng& rng) const override;
  const LimitedPolicyTable& table() const { return table_; }

 private:
  LimitedPolicyTable table_;
};

nlohmann::ordered_json to_json(const LimitedPolicyTable& table);
LimitedPolicyTable limited_table_from_json(const nlohmann::json& j);

}  // namespace qcd

#pragma once

#include <cstdint>
#include <vector>

#include "qcd/expectation.hpp"
#include "qcd/grid.hpp"
#include "qcd/policy.hpp"
#include "qcd/posterior.hpp"

#include "json.hpp"

namespace qcd {

// Value function over (posterior grid point, stored rights).  v[n][g] is the
// cost-to-go with n rights in the battery and posterior grid.point(g).
using ValueMatrix = std::vector<std::vector<double>>;

struct StochasticSolveConfig {
  int grid_size = 501;
  double vi_tol = 1e-9;
  int max_iters = 5000;
  QuadratureConfig quad;
};

// Converged value function for the stochastic-replenishment problem.
//   v[n][g]          cost-to-go before the next slot's arrival is seen
//   obs_value[n][g]  E[v(posterior, n)] after one sampled slot whose
//                    propagated prior is propagate_silent(point(g), rho);
//                    interpolating it at pi evaluates the sampling branch
//   w[n][j][g]       best branch value when j rights arrive with n stored
struct StochasticValueTable {
  int grid_size = 0;
  double rho = 0.0;
  double cost_c = 0.0;
  double sigma2 = 1.0;
  double shift = 1.0;
  EnergyModel energy;
  ValueMatrix v;
  ValueMatrix obs_value;
  std::vector<ValueMatrix> w;
  int iterations = 0;
  double achieved_tol = 0.0;

  PolicyGrid grid() const { return PolicyGrid(grid_size); }
  DensityPair pair() const { return DensityPair::gaussian_variance_shift(sigma2, shift); }
};

// Backward induction over a fixed horizon.  Element k of the result is the
// value with k slots elapsed (element horizon is the terminal cost 1 - pi).
std::vector<ValueMatrix> finite_horizon_solve(int horizon, double rho, double cost_c,
                                              const DensityPair& pair, const EnergyModel& energy,
                                              const StochasticSolveConfig& config);

// Value iteration from the terminal cost until the sup-norm change drops
// below vi_tol; throws ConvergenceError if max_iters hits first.
StochasticValueTable infinite_horizon_solve(double rho, double cost_c, const DensityPair& pair,
                                            const EnergyModel& energy,
                                            const StochasticSolveConfig& config);

// Spend a right this slot?  Decided before the observation is taken, from
// last slot's posterior, the stored rights and this slot's arrival.
// Ties keep the right; no right available forces 0.
int optimal_action(const StochasticValueTable& table, double pi, int stored_rights, int arrived);

// Stop once stopping is no dearer than continuing one more slot.
bool optimal_stop(const StochasticValueTable& table, double pi, int stored_rights);

// Myopic scheme: sample whenever a right is available.
int greedy_action(int stored_rights, int arrived);
bool greedy_threshold_stop(double pi, double alpha);

// Markov chain of the stored-rights process under the greedy scheme.
std::vector<std::vector<double>> transition_matrix(const EnergyModel& energy);

// Unique stationary law of a row-stochastic matrix, solved by dense
// elimination and cross-checked with power iteration.  Chains without a
// single closed recurrent class are rejected.
std::vector<double> stationary_distribution(const std::vector<std::vector<double>>& matrix);

// Long-run fraction of slots the greedy scheme samples: 1 - p0 * w0.
double sampling_fraction(const EnergyModel& energy);

class GreedyStochasticPolicy : public SamplingPolicy {
 public:
  // initial_rights < 0 means "start with a full battery".
  GreedyStochasticPolicy(EnergyModel energy, double alpha, int initial_rights = -1);
  std::string name() const override;
  DetectionOutcome run_trial(const ChangeModel& model, TrialRng& rng) const override;

 private:
  EnergyModel energy_;
  double alpha_;
  int initial_rights_;
};

class OptimalStochasticPolicy : public SamplingPolicy {
 public:
  explicit OptimalStochasticPolicy(StochasticValueTable table, int initial_rights = -1);
  std::string name() const override;
  DetectionOutcome run_trial(const ChangeModel& model, TrialRng& rng) const override;
  const StochasticValueTable& table() const { return table_; }

 private:
  StochasticValueTable table_;
  int initial_rights_;
};

nlohmann::ordered_json to_json(const StochasticValueTable& table);
StochasticValueTable stochastic_table_from_json(const nlohmann::json& j);

}  // namespace qcd

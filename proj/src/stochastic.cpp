#include "qcd/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qcd {

namespace {

struct SweepBuffers {
  ValueMatrix v;
  ValueMatrix obs_value;
  std::vector<ValueMatrix> w;
};

ValueMatrix terminal_cost(const PolicyGrid& grid, int capacity) {
  ValueMatrix v(static_cast<std::size_t>(capacity) + 1,
                std::vector<double>(static_cast<std::size_t>(grid.size())));
  for (int n = 0; n <= capacity; ++n) {
    for (int g = 0; g < grid.size(); ++g) {
      v[static_cast<std::size_t>(n)][static_cast<std::size_t>(g)] = 1.0 - grid.point(g);
    }
  }
  return v;
}

// One backward-induction / value-iteration sweep.  Returns the sup-norm
// change and fills `next` from `cur`.
double sweep(const ValueMatrix& cur, SweepBuffers& next, const PolicyGrid& grid, double rho,
             double cost_c, const DensityPair& pair, const EnergyModel& energy,
             const QuadratureConfig& quad) {
  int G = grid.size();
  int capacity = energy.capacity;
  int arrivals = energy.max_replenishment();

  std::vector<std::span<const double>> rows;
  rows.reserve(cur.size());
  for (const auto& row : cur) rows.emplace_back(row);

  double delta = 0.0;
  for (int g = 0; g < G; ++g) {
    double pi = grid.point(g);
    double q = propagate_silent(pi, rho);
    std::vector<double> sampled =
        expected_posterior_value_multi(std::span(rows), grid, q, pair, quad);
    for (int n = 0; n <= capacity; ++n) {
      next.obs_value[static_cast<std::size_t>(n)][static_cast<std::size_t>(g)] =
          sampled[static_cast<std::size_t>(n)];
    }
    for (int n = 0; n <= capacity; ++n) {
      double expected_w = 0.0;
      for (int j = 0; j <= arrivals; ++j) {
        int total = n + j;
        double w = grid.interpolate(cur[static_cast<std::size_t>(std::min(capacity, total))], q);
        if (total >= 1) {
          double spend = sampled[static_cast<std::size_t>(std::min(capacity, total - 1))];
          if (spend < w) w = spend;
        }
        next.w[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)]
              [static_cast<std::size_t>(g)] = w;
        expected_w += energy.pmf[static_cast<std::size_t>(j)] * w;
      }
      double value = std::min(1.0 - pi, cost_c * pi + expected_w);
      next.v[static_cast<std::size_t>(n)][static_cast<std::size_t>(g)] = value;
      double change =
          std::abs(value - cur[static_cast<std::size_t>(n)][static_cast<std::size_t>(g)]);
      if (change > delta) delta = change;
    }
  }
  return delta;
}

SweepBuffers make_buffers(const PolicyGrid& grid, const EnergyModel& energy) {
  SweepBuffers b;
  auto states = static_cast<std::size_t>(energy.capacity) + 1;
  auto arrivals = static_cast<std::size_t>(energy.max_replenishment()) + 1;
  auto G = static_cast<std::size_t>(grid.size());
  b.v.assign(states, std::vector<double>(G, 0.0));
  b.obs_value.assign(states, std::vector<double>(G, 0.0));
  b.w.assign(states, ValueMatrix(arrivals, std::vector<double>(G, 0.0)));
  return b;
}

void validate_problem(double rho, double cost_c, const EnergyModel& energy) {
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  if (!(cost_c > 0.0)) throw ConfigError("delay cost must be positive");
  energy.validate();
}

}  // namespace

std::vector<ValueMatrix> finite_horizon_solve(int horizon, double rho, double cost_c,
                                              const DensityPair& pair, const EnergyModel& energy,
                                              const StochasticSolveConfig& config) {
  if (horizon < 0) throw ConfigError("horizon must be nonnegative");
  validate_problem(rho, cost_c, energy);
  PolicyGrid grid(config.grid_size);
  std::vector<ValueMatrix> steps(static_cast<std::size_t>(horizon) + 1);
  steps[static_cast<std::size_t>(horizon)] = terminal_cost(grid, energy.capacity);
  SweepBuffers buf = make_buffers(grid, energy);
  for (int k = horizon - 1; k >= 0; --k) {
    sweep(steps[static_cast<std::size_t>(k) + 1], buf, grid, rho, cost_c, pair, energy,
          config.quad);
    steps[static_cast<std::size_t>(k)] = buf.v;
  }
  return steps;
}

StochasticValueTable infinite_horizon_solve(double rho, double cost_c, const DensityPair& pair,
                                            const EnergyModel& energy,
                                            const StochasticSolveConfig& config) {
  validate_problem(rho, cost_c, energy);
  if (config.max_iters < 1) throw ConfigError("max_iters must be positive");
  PolicyGrid grid(config.grid_size);

  ValueMatrix v = terminal_cost(grid, energy.capacity);
  SweepBuffers buf = make_buffers(grid, energy);
  int iterations = 0;
  double delta = std::numeric_limits<double>::infinity();
  while (iterations < config.max_iters) {
    delta = sweep(v, buf, grid, rho, cost_c, pair, energy, config.quad);
    std::swap(v, buf.v);
    ++iterations;
    if (delta < config.vi_tol) break;
  }
  if (!(delta < config.vi_tol)) {
    throw ConvergenceError("value iteration did not reach tolerance", delta);
  }

  StochasticValueTable table;
  table.grid_size = config.grid_size;
  table.rho = rho;
  table.cost_c = cost_c;
  if (pair.is_gaussian()) {
    table.sigma2 = pair.sigma2();
    table.shift = pair.shift();
  } else {
    table.sigma2 = std::numeric_limits<double>::quiet_NaN();
    table.shift = std::numeric_limits<double>::quiet_NaN();
  }
  table.energy = energy;
  table.iterations = iterations;
  table.achieved_tol = delta;
  // One refresh so the stored branch values are consistent with the
  // converged v rather than its predecessor.
  sweep(v, buf, grid, rho, cost_c, pair, energy, config.quad);
  table.v = std::move(v);
  table.obs_value = std::move(buf.obs_value);
  table.w = std::move(buf.w);
  return table;
}

int optimal_action(const StochasticValueTable& table, double pi, int stored_rights, int arrived) {
  if (stored_rights < 0 || stored_rights > table.energy.capacity) {
    throw std::domain_error("stored rights out of range");
  }
  if (arrived < 0) throw std::domain_error("arrived rights must be nonnegative");
  int total = stored_rights + arrived;
  if (total == 0) return 0;
  PolicyGrid grid = table.grid();
  double q = propagate_silent(pi, table.rho);
  int capacity = table.energy.capacity;
  double keep = grid.interpolate(table.v[static_cast<std::size_t>(std::min(capacity, total))], q);
  // obs_value is tabulated against the pre-arrival posterior, so interpolate
  // at pi rather than q.
  double spend =
      grid.interpolate(table.obs_value[static_cast<std::size_t>(std::min(capacity, total - 1))], pi);
  return spend < keep ? 1 : 0;
}

bool optimal_stop(const StochasticValueTable& table, double pi, int stored_rights) {
  if (stored_rights < 0 || stored_rights > table.energy.capacity) {
    throw std::domain_error("stored rights out of range");
  }
  PolicyGrid grid = table.grid();
  double expected_w = 0.0;
  for (int j = 0; j <= table.energy.max_replenishment(); ++j) {
    expected_w +=
        table.energy.pmf[static_cast<std::size_t>(j)] *
        grid.interpolate(table.w[static_cast<std::size_t>(stored_rights)][static_cast<std::size_t>(j)],
                         pi);
  }
  return 1.0 - pi <= table.cost_c * pi + expected_w;
}

int greedy_action(int stored_rights, int arrived) {
  if (stored_rights < 0 || arrived < 0) throw std::domain_error("rights must be nonnegative");
  return stored_rights + arrived >= 1 ? 1 : 0;
}

bool greedy_threshold_stop(double pi, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("alpha must lie in (0, 1)");
  return pi >= 1.0 - alpha;
}

std::vector<std::vector<double>> transition_matrix(const EnergyModel& energy) {
  energy.validate();
  auto states = static_cast<std::size_t>(energy.capacity) + 1;
  std::vector<std::vector<double>> matrix(states, std::vector<double>(states, 0.0));
  for (int i = 0; i <= energy.capacity; ++i) {
    for (int j = 0; j <= energy.max_replenishment(); ++j) {
      int mu = greedy_action(i, j);
      int next = std::min(energy.capacity, i + j - mu);
      matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(next)] +=
          energy.pmf[static_cast<std::size_t>(j)];
    }
  }
  return matrix;
}

namespace {

// Count closed communicating classes; a unique one is required for a
// well-defined stationary law.
int closed_class_count(const std::vector<std::vector<double>>& matrix) {
  int n = static_cast<int>(matrix.size());
  std::vector<std::vector<bool>> reach(static_cast<std::size_t>(n),
                                       std::vector<bool>(static_cast<std::size_t>(n), false));
  for (int i = 0; i < n; ++i) {
    reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = true;
    for (int j = 0; j < n; ++j) {
      if (matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] > 0.0) {
        reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
      }
    }
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      if (!reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]) continue;
      for (int j = 0; j < n; ++j) {
        if (reach[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]) {
          reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
        }
      }
    }
  }
  int closed = 0;
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    if (seen[static_cast<std::size_t>(i)]) continue;
    // Class of i: mutually reachable states.
    std::vector<int> members;
    for (int j = 0; j < n; ++j) {
      if (reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] &&
          reach[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]) {
        members.push_back(j);
        seen[static_cast<std::size_t>(j)] = true;
      }
    }
    bool is_closed = true;
    for (int m : members) {
      for (int j = 0; j < n && is_closed; ++j) {
        if (matrix[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)] > 0.0 &&
            !reach[static_cast<std::size_t>(j)][static_cast<std::size_t>(m)]) {
          is_closed = false;
        }
      }
    }
    if (is_closed) ++closed;
  }
  return closed;
}

}  // namespace

std::vector<double> stationary_distribution(const std::vector<std::vector<double>>& matrix) {
  auto n = matrix.size();
  if (n == 0) throw ConfigError("transition matrix must not be empty");
  for (const auto& row : matrix) {
    if (row.size() != n) throw ConfigError("transition matrix must be square");
    double total = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw ConfigError("transition probabilities must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("transition matrix rows must sum to 1");
  }
  if (closed_class_count(matrix) != 1) {
    throw ConvergenceError("chain has no unique recurrent class", 0.0);
  }

  // Solve w (P - I) = 0 with the first balance equation replaced by the
  // normalization sum(w) = 1.
  std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t col = 0; col < n; ++col) a[0][col] = 1.0;
  a[0][n] = 1.0;
  for (std::size_t row = 1; row < n; ++row) {
    for (std::size_t col = 0; col < n; ++col) {
      a[row][col] = matrix[col][row] - (row == col ? 1.0 : 0.0);
    }
  }
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (std::abs(a[pivot][col]) < 1e-14) {
      throw ConvergenceError("stationary solve hit a singular system", std::abs(a[pivot][col]));
    }
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c <= n; ++c) a[r][c] -= f * a[col][c];
    }
  }
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = a[i][n] / a[i][i];
  for (double& x : w) {
    if (x < 0.0 && x > -1e-12) x = 0.0;
  }

  // Independent cross-check: power iteration from the uniform law.
  std::vector<double> p(n, 1.0 / static_cast<double>(n)), next(n);
  double change = 1.0;
  for (int it = 0; it < 1000000 && change > 1e-14; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) next[j] += p[i] * matrix[i][j];
    }
    change = 0.0;
    for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(next[i] - p[i]));
    p.swap(next);
  }
  double mismatch = 0.0;
  for (std::size_t i = 0; i < n; ++i) mismatch = std::max(mismatch, std::abs(p[i] - w[i]));
  if (change > 1e-12 || mismatch > 1e-10) {
    throw ConvergenceError("stationary cross-check disagrees", std::max(change, mismatch));
  }
  return w;
}

double sampling_fraction(const EnergyModel& energy) {
  energy.validate();
  if (energy.pmf[0] == 0.0) return 1.0;  // a right arrives every slot
  std::vector<double> w = stationary_distribution(transition_matrix(energy));
  return 1.0 - energy.pmf[0] * w[0];
}

GreedyStochasticPolicy::GreedyStochasticPolicy(EnergyModel energy, double alpha,
                                               int initial_rights)
    : energy_(std::move(energy)), alpha_(alpha), initial_rights_(initial_rights) {
  energy_.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (initial_rights_ > energy_.capacity) throw ConfigError("initial rights exceed capacity");
}

std::string GreedyStochasticPolicy::name() const { return "greedy"; }

DetectionOutcome GreedyStochasticPolicy::run_trial(const ChangeModel& model,
                                                   TrialRng& rng) const {
  double threshold = 1.0 - alpha_;
  double rho = model.prior.rho;
  DetectionOutcome out;
  out.change_point = sample_change_point(model.prior, rng.lambda_stream());
  double pi = model.prior.pi0;
  double cum = 0.0;
  std::int64_t k = 0;
  int stored = initial_rights_ < 0 ? energy_.capacity : initial_rights_;
  while (pi < threshold) {
    if (k >= kTrialStepCap) throw StepCapError("trial exceeded the step cap");
    cum += pi;
    ++k;
    int arrived = sample_replenishment(energy_, rng.replenish_stream());
    int total = stored + arrived;
    if (greedy_action(stored, arrived) == 1) {
      double x = sample_observation(model.pair, k >= out.change_point, rng.obs_stream());
      pi = update_with_observation(pi, x, model.pair, rho);
      stored = std::min(energy_.capacity, total - 1);
      out.sample_times.push_back(k);
    } else {
      pi = propagate_silent(pi, rho);
      stored = std::min(energy_.capacity, total);
    }
  }
  out.tau = k;
  out.samples_used = static_cast<int>(out.sample_times.size());
  out.false_alarm = out.tau < out.change_point;
  out.pi_at_stop = pi;
  out.pi_running_sum = cum;
  return out;
}

OptimalStochasticPolicy::OptimalStochasticPolicy(StochasticValueTable table, int initial_rights)
    : table_(std::move(table)), initial_rights_(initial_rights) {
  table_.energy.validate();
  if (initial_rights_ > table_.energy.capacity) throw ConfigError("initial rights exceed capacity");
}

std::string OptimalStochasticPolicy::name() const { return "optimal"; }

DetectionOutcome OptimalStochasticPolicy::run_trial(const ChangeModel& model,
                                                    TrialRng& rng) const {
  if (table_.rho != model.prior.rho) throw ConfigError("table was solved for a different rho");
  double rho = model.prior.rho;
  DetectionOutcome out;
  out.change_point = sample_change_point(model.prior, rng.lambda_stream());
  double pi = model.prior.pi0;
  double cum = 0.0;
  std::int64_t k = 0;
  int stored = initial_rights_ < 0 ? table_.energy.capacity : initial_rights_;
  while (!optimal_stop(table_, pi, stored)) {
    if (k >= kTrialStepCap) throw StepCapError("trial exceeded the step cap");
    cum += pi;
    ++k;
    int arrived = sample_replenishment(table_.energy, rng.replenish_stream());
    int total = stored + arrived;
    if (optimal_action(table_, pi, stored, arrived) == 1) {
      double x = sample_observation(model.pair, k >= out.change_point, rng.obs_stream());
      pi = update_with_observation(pi, x, model.pair, rho);
      stored = std::min(table_.energy.capacity, total - 1);
      out.sample_times.push_back(k);
    } else {
      pi = propagate_silent(pi, rho);
      stored = std::min(table_.energy.capacity, total);
    }
  }
  out.tau = k;
  out.samples_used = static_cast<int>(out.sample_times.size());
  out.false_alarm = out.tau < out.change_point;
  out.pi_at_stop = pi;
  out.pi_running_sum = cum;
  return out;
}

nlohmann::ordered_json to_json(const StochasticValueTable& table) {
  if (std::isnan(table.sigma2)) {
    throw ConfigError("tables solved with custom densities are not serializable");
  }
  nlohmann::ordered_json j;
  j["format"] = 1;
  j["kind"] = "stochastic_value_table";
  j["grid_size"] = table.grid_size;
  j["rho"] = table.rho;
  j["cost_c"] = table.cost_c;
  j["density"] = {{"kind", "gaussian_variance_shift"},
                  {"sigma2", table.sigma2},
                  {"shift", table.shift}};
  j["energy"] = {{"capacity", table.energy.capacity}, {"pmf", table.energy.pmf}};
  j["v"] = table.v;
  j["obs_value"] = table.obs_value;
  j["w"] = table.w;
  j["iterations"] = table.iterations;
  j["achieved_tol"] = table.achieved_tol;
  return j;
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                    const char* where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError(std::string("unknown key '") + item.key() + "' in " + where);
  }
}

}  // namespace

StochasticValueTable stochastic_table_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("table document must be a JSON object");
  reject_unknown(j,
                 {"format", "kind", "grid_size", "rho", "cost_c", "density", "energy", "v",
                  "obs_value", "w", "iterations", "achieved_tol"},
                 "table document");
  if (!j.contains("format") || j.at("format") != 1) throw ConfigError("unsupported table format");
  if (!j.contains("kind") || j.at("kind") != "stochastic_value_table") {
    throw ConfigError("not a stochastic value table");
  }
  StochasticValueTable table;
  table.grid_size = j.at("grid_size").get<int>();
  if (table.grid_size < 2) throw ConfigError("grid_size must be at least 2");
  table.rho = j.at("rho").get<double>();
  table.cost_c = j.at("cost_c").get<double>();
  const auto& density = j.at("density");
  reject_unknown(density, {"kind", "sigma2", "shift"}, "density");
  if (density.at("kind") != "gaussian_variance_shift") {
    throw ConfigError("unsupported density kind in table");
  }
  table.sigma2 = density.at("sigma2").get<double>();
  table.shift = density.at("shift").get<double>();
  const auto& energy = j.at("energy");
  reject_unknown(energy, {"capacity", "pmf"}, "energy");
  table.energy.capacity = energy.at("capacity").get<int>();
  table.energy.pmf = energy.at("pmf").get<std::vector<double>>();
  table.energy.validate();
  table.v = j.at("v").get<ValueMatrix>();
  table.obs_value = j.at("obs_value").get<ValueMatrix>();
  table.w = j.at("w").get<std::vector<ValueMatrix>>();
  table.iterations = j.at("iterations").get<int>();
  table.achieved_tol = j.at("achieved_tol").get<double>();

  auto states = static_cast<std::size_t>(table.energy.capacity) + 1;
  auto arrivals = static_cast<std::size_t>(table.energy.max_replenishment()) + 1;
  auto G = static_cast<std::size_t>(table.grid_size);
  auto check_matrix = [&](const ValueMatrix& m, const char* name) {
    if (m.size() != states) throw ConfigError(std::string(name) + " has wrong energy extent");
    for (const auto& row : m) {
      if (row.size() != G) throw ConfigError(std::string(name) + " has wrong grid extent");
    }
  };
  check_matrix(table.v, "v");
  check_matrix(table.obs_value, "obs_value");
  if (table.w.size() != states) throw ConfigError("w has wrong energy extent");
  for (const auto& per_arrival : table.w) {
    if (per_arrival.size() != arrivals) throw ConfigError("w has wrong arrival extent");
    for (const auto& row : per_arrival) {
      if (row.size() != G) throw ConfigError("w has wrong grid extent");
    }
  }
  return table;
}

}  // namespace qcd

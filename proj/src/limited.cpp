#include "qcd/limited.hpp"

#include <cmath>
#include <limits>

namespace qcd {

namespace {

void validate_costs(double rho, double cost_c) {
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  if (!(cost_c > 0.0)) throw ConfigError("delay cost must be positive");
}

// Smallest pi where stopping (cost 1 - pi) is no dearer than the best
// waiting branch.  Interpolating the unclamped continuation cost instead of
// the clamped value keeps the crossing accurate inside a grid cell; the
// clamped value equals 1 - pi on the whole stopping side, which would pull
// the crossing to the nearest grid point.
double extract_threshold(const PolicyGrid& grid, const std::vector<double>& continuation) {
  auto gap = [&](int i) {
    return 1.0 - grid.point(i) - continuation[static_cast<std::size_t>(i)];
  };
  int first = -1;
  for (int i = 0; i < grid.size(); ++i) {
    if (gap(i) <= 0.0) {
      first = i;
      break;
    }
  }
  if (first == 0) return 0.0;
  if (first < 0) return 1.0;
  double lo = gap(first - 1), hi = gap(first);
  double t = lo - hi > 0.0 ? lo / (lo - hi) : 1.0;
  return grid.point(first - 1) + t * (grid.point(first) - grid.point(first - 1));
}

}  // namespace

std::int64_t max_search_interval(double rho, double cost_c) {
  validate_costs(rho, cost_c);
  return static_cast<std::int64_t>(std::ceil(1.0 / cost_c + 1.0 / rho)) + 1;
}

ValueRow v0_row(const PolicyGrid& grid, double rho, double cost_c) {
  validate_costs(rho, cost_c);
  std::int64_t m_max = max_search_interval(rho, cost_c);
  ValueRow row;
  row.values.resize(static_cast<std::size_t>(grid.size()));
  row.intervals.resize(static_cast<std::size_t>(grid.size()));
  double rho_bar = 1.0 - rho;
  std::vector<double> continuation(static_cast<std::size_t>(grid.size()));
  for (int i = 0; i < grid.size(); ++i) {
    double pi = grid.point(i);
    double pibar = 1.0 - pi;   // 1 - pi_m along the silent path
    double ssum = 0.0;         // sum of pi_k, k < m
    double best = std::numeric_limits<double>::infinity();
    std::int64_t best_m = 1;
    for (std::int64_t m = 1; m <= m_max; ++m) {
      ssum += 1.0 - pibar;
      pibar *= rho_bar;
      double cost = cost_c * ssum + pibar;
      if (cost < best) {
        best = cost;
        best_m = m;
      }
    }
    continuation[static_cast<std::size_t>(i)] = best;
    bool stop = 1.0 - pi <= best;  // m = 0: stop immediately, preferred on ties
    row.values[static_cast<std::size_t>(i)] = stop ? 1.0 - pi : best;
    row.intervals[static_cast<std::size_t>(i)] = stop ? 0 : static_cast<int>(best_m);
  }
  row.threshold = extract_threshold(grid, continuation);
  return row;
}

ValueRow bellman_step(const ValueRow& prev, const PolicyGrid& grid, double rho, double cost_c,
                      const DensityPair& pair, const QuadratureConfig& quad) {
  validate_costs(rho, cost_c);
  if (static_cast<int>(prev.values.size()) != grid.size()) {
    throw ConfigError("value row does not match the grid");
  }
  std::int64_t m_max = max_search_interval(rho, cost_c);
  int G = grid.size();

  // Expected continuation E[prev(posterior) | propagated prior q] on the
  // same grid of q; the m-scan below reads it through interpolation.
  std::vector<double> expected(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    expected[static_cast<std::size_t>(g)] =
        expected_posterior_value(prev.values, grid, grid.point(g), pair, quad);
  }

  ValueRow row;
  row.values.resize(static_cast<std::size_t>(G));
  row.intervals.resize(static_cast<std::size_t>(G));
  std::vector<double> continuation(static_cast<std::size_t>(G));
  double rho_bar = 1.0 - rho;
  for (int i = 0; i < G; ++i) {
    double pi = grid.point(i);
    double pibar = 1.0 - pi;
    double ssum = 0.0;
    double best = std::numeric_limits<double>::infinity();
    std::int64_t best_m = 1;
    for (std::int64_t m = 1; m <= m_max; ++m) {
      ssum += 1.0 - pibar;
      pibar *= rho_bar;
      double cost = cost_c * ssum + grid.interpolate(expected, 1.0 - pibar);
      if (cost < best) {
        best = cost;
        best_m = m;
      }
    }
    continuation[static_cast<std::size_t>(i)] = best;
    row.values[static_cast<std::size_t>(i)] = std::min(1.0 - pi, best);
    row.intervals[static_cast<std::size_t>(i)] = static_cast<int>(best_m);
  }
  row.threshold = extract_threshold(grid, continuation);
  return row;
}

LimitedPolicyTable solve_limited(int rights, double rho, double cost_c, const DensityPair& pair,
                                 const LimitedSolveConfig& config) {
  if (rights < 0) throw ConfigError("rights must be nonnegative");
  PolicyGrid grid(config.grid_size);
  LimitedPolicyTable table;
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
  table.rows.reserve(static_cast<std::size_t>(rights) + 1);
  table.rows.push_back(v0_row(grid, rho, cost_c));
  for (int n = 1; n <= rights; ++n) {
    table.rows.push_back(bellman_step(table.rows.back(), grid, rho, cost_c, pair, config.quad));
  }
  return table;
}

int interval_of(const LimitedPolicyTable& table, int n_used, double pi) {
  int rights = table.rights();
  if (n_used < 0 || n_used >= rights) {
    throw std::domain_error("interval lookup needs at least one unused right");
  }
  if (!(pi >= 0.0 && pi <= 1.0)) throw std::domain_error("posterior out of [0, 1]");
  const ValueRow& row = table.rows[static_cast<std::size_t>(rights - n_used)];
  if (pi >= row.threshold) throw std::domain_error("posterior inside the stopping region");
  return row.intervals[static_cast<std::size_t>(table.grid().nearest(pi))];
}

DetectionOutcome run_limited_policy(const LimitedPolicyTable& table, const ChangeModel& model,
                                    TrialRng& rng) {
  if (table.rows.empty()) throw ConfigError("policy table has no rows");
  if (table.rho != model.prior.rho) throw ConfigError("table was solved for a different rho");
  PolicyGrid grid = table.grid();
  int rights = table.rights();
  double rho = model.prior.rho;
  double log_rho_bar = std::log1p(-rho);

  DetectionOutcome out;
  out.change_point = sample_change_point(model.prior, rng.lambda_stream());
  double pi = model.prior.pi0;
  double cum = 0.0;
  std::int64_t k = 0;
  int n_used = 0;

  for (;;) {
    const ValueRow& row = table.rows[static_cast<std::size_t>(rights - n_used)];
    if (pi >= row.threshold) break;
    if (n_used == rights) {
      // Silent phase: the posterior climbs deterministically, so the first
      // slot at or above the threshold has closed form.
      double pibar = 1.0 - pi;
      double remaining = 1.0 - row.threshold;
      if (!(remaining > 0.0) || pibar <= 0.0) {
        throw StepCapError("silent phase cannot reach the stopping threshold");
      }
      auto j = static_cast<std::int64_t>(std::ceil(std::log(remaining / pibar) / log_rho_bar));
      if (j < 1) j = 1;
      if (k > kTrialStepCap - j) throw StepCapError("trial exceeded the step cap");
      cum += silent_sum(pi, rho, j);
      pi = 1.0 - pibar * std::exp(static_cast<double>(j) * log_rho_bar);
      k += j;
      break;
    }
    std::int64_t m = row.intervals[static_cast<std::size_t>(grid.nearest(pi))];
    if (k > kTrialStepCap - m) throw StepCapError("trial exceeded the step cap");
    cum += silent_sum(pi, rho, m);
    k += m;
    double x = sample_observation(model.pair, k >= out.change_point, rng.obs_stream());
    pi = posterior_after_interval(pi, rho, m, x, model.pair);
    out.sample_times.push_back(k);
    ++n_used;
  }

  out.tau = k;
  out.samples_used = n_used;
  out.false_alarm = out.tau < out.change_point;
  out.pi_at_stop = pi;
  out.pi_running_sum = cum;
  return out;
}

std::string LimitedTablePolicy::name() const {
  return "limited[" + std::to_string(table_.rights()) + "]";
}

DetectionOutcome LimitedTablePolicy::run_trial(const ChangeModel& model, TrialRng& rng) const {
  return run_limited_policy(table_, model, rng);
}

nlohmann::ordered_json to_json(const LimitedPolicyTable& table) {
  if (std::isnan(table.sigma2)) {
    throw ConfigError("tables solved with custom densities are not serializable");
  }
  nlohmann::ordered_json j;
  j["format"] = 1;
  j["kind"] = "limited_policy_table";
  j["grid_size"] = table.grid_size;
  j["rho"] = table.rho;
  j["cost_c"] = table.cost_c;
  j["density"] = {{"kind", "gaussian_variance_shift"},
                  {"sigma2", table.sigma2},
                  {"shift", table.shift}};
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const ValueRow& row : table.rows) {
    rows.push_back({{"values", row.values},
                    {"intervals", row.intervals},
                    {"threshold", row.threshold}});
  }
  j["rows"] = std::move(rows);
  return j;
}

namespace {

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
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

LimitedPolicyTable limited_table_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("table document must be a JSON object");
  reject_unknown_keys(j, {"format", "kind", "grid_size", "rho", "cost_c", "density", "rows"},
                      "table document");
  if (!j.contains("format") || j.at("format") != 1) {
    throw ConfigError("unsupported table format");
  }
  if (!j.contains("kind") || j.at("kind") != "limited_policy_table") {
    throw ConfigError("not a limited policy table");
  }
  LimitedPolicyTable table;
  table.grid_size = j.at("grid_size").get<int>();
  if (table.grid_size < 2) throw ConfigError("grid_size must be at least 2");
  table.rho = j.at("rho").get<double>();
  table.cost_c = j.at("cost_c").get<double>();
  const auto& density = j.at("density");
  reject_unknown_keys(density, {"kind", "sigma2", "shift"}, "density");
  if (density.at("kind") != "gaussian_variance_shift") {
    throw ConfigError("unsupported density kind in table");
  }
  table.sigma2 = density.at("sigma2").get<double>();
  table.shift = density.at("shift").get<double>();
  const auto& rows = j.at("rows");
  if (!rows.is_array() || rows.empty()) throw ConfigError("table must have at least one row");
  for (const auto& rj : rows) {
    reject_unknown_keys(rj, {"values", "intervals", "threshold"}, "row");
    ValueRow row;
    row.values = rj.at("values").get<std::vector<double>>();
    row.intervals = rj.at("intervals").get<std::vector<int>>();
    row.threshold = rj.at("threshold").get<double>();
    if (static_cast<int>(row.values.size()) != table.grid_size ||
        static_cast<int>(row.intervals.size()) != table.grid_size) {
      throw ConfigError("row length does not match grid_size");
    }
    if (!(row.threshold >= 0.0 && row.threshold <= 1.0)) {
      throw ConfigError("row threshold out of [0, 1]");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace qcd

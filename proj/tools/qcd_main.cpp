// Batch front end: JSON experiment configs in, solved-policy JSON and CSV
// curves out.  Exit codes: 0 success, 2 config error, 3 numerical
// non-convergence, 4 simulation step cap exceeded.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "qcd/baselines.hpp"
#include "qcd/errors.hpp"
#include "qcd/limited.hpp"
#include "qcd/model.hpp"
#include "qcd/montecarlo.hpp"
#include "qcd/stochastic.hpp"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json default_config() {
  return ordered_json{
      {"format", 1},
      {"model",
       {{"pi0", 0.0}, {"rho", 0.1}, {"sigma2", 1.0}, {"snr_db", 0.0}}},
      {"energy", {{"capacity", 3}, {"pmf", {0.85, 0.1, 0.03, 0.01, 0.01}}}},
      {"solver",
       {{"grid_size", 2001}, {"quad_tol", 1e-8}, {"vi_tol", 1e-9}, {"max_iters", 5000}}},
      {"run",
       {{"policy", "greedy"},
        {"alphas", {0.1, 0.01, 0.001}},
        {"c_values", nullptr},
        {"cost_c", nullptr},
        {"rights", 8},
        {"interval", 11},
        {"initial_rights", nullptr},
        {"table", nullptr},
        {"trials", 200000},
        {"master_seed", 1},
        {"out", nullptr}}}};
}

// Overlays the user file onto the defaults.  Every key must already exist in
// the defaults, so typos and stale keys fail loudly instead of being ignored.
void merge_into(ordered_json& base, const json& user, const std::string& path) {
  for (const auto& [key, value] : user.items()) {
    if (!base.contains(key)) {
      throw qcd::ConfigError("unknown config key: " + path + key);
    }
    ordered_json& slot = base[key];
    if (slot.is_object()) {
      if (!value.is_object()) {
        throw qcd::ConfigError("config key " + path + key + " must be an object");
      }
      merge_into(slot, value, path + key + ".");
    } else {
      slot = value;
    }
  }
}

bool is_set(const ordered_json& node) { return !node.is_null(); }

double as_number(const ordered_json& node, const std::string& path) {
  if (!node.is_number()) throw qcd::ConfigError(path + " must be a number");
  return node.get<double>();
}

std::int64_t as_integer(const ordered_json& node, const std::string& path) {
  if (!node.is_number_integer() && !node.is_number_unsigned()) {
    throw qcd::ConfigError(path + " must be an integer");
  }
  return node.get<std::int64_t>();
}

std::uint64_t as_seed(const ordered_json& node, const std::string& path) {
  if (!node.is_number_unsigned() && !(node.is_number_integer() && node.get<std::int64_t>() >= 0)) {
    throw qcd::ConfigError(path + " must be a non-negative integer");
  }
  return node.get<std::uint64_t>();
}

std::string as_string(const ordered_json& node, const std::string& path) {
  if (!node.is_string()) throw qcd::ConfigError(path + " must be a string");
  return node.get<std::string>();
}

std::vector<double> as_number_array(const ordered_json& node, const std::string& path) {
  if (!node.is_array()) throw qcd::ConfigError(path + " must be an array of numbers");
  std::vector<double> out;
  out.reserve(node.size());
  for (const auto& item : node) {
    if (!item.is_number()) throw qcd::ConfigError(path + " must be an array of numbers");
    out.push_back(item.get<double>());
  }
  return out;
}

struct CliOptions {
  std::string config_path;
  std::string out_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
  bool print_config = false;
};

ordered_json effective_config(const CliOptions& opt) {
  ordered_json cfg = default_config();
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) throw qcd::ConfigError("cannot open config file: " + opt.config_path);
    json user = json::parse(in);
    if (!user.is_object()) throw qcd::ConfigError("config root must be a JSON object");
    merge_into(cfg, user, "");
  }
  if (as_integer(cfg.at("format"), "format") != 1) {
    throw qcd::ConfigError("unsupported config format (expected 1)");
  }
  if (opt.seed_given) cfg["run"]["master_seed"] = opt.seed;
  if (!opt.out_path.empty()) cfg["run"]["out"] = opt.out_path;
  return cfg;
}

qcd::ChangeModel model_from(const ordered_json& cfg) {
  const ordered_json& m = cfg.at("model");
  qcd::GeometricPrior prior;
  prior.pi0 = as_number(m.at("pi0"), "model.pi0");
  prior.rho = as_number(m.at("rho"), "model.rho");
  prior.validate();
  double sigma2 = as_number(m.at("sigma2"), "model.sigma2");
  if (!(sigma2 > 0.0)) throw qcd::ConfigError("model.sigma2 must be positive");
  double snr_db = as_number(m.at("snr_db"), "model.snr_db");
  return qcd::ChangeModel{prior, qcd::make_gaussian_pair(sigma2, snr_db)};
}

qcd::EnergyModel energy_from(const ordered_json& cfg) {
  const ordered_json& e = cfg.at("energy");
  qcd::EnergyModel energy;
  energy.capacity = static_cast<int>(as_integer(e.at("capacity"), "energy.capacity"));
  energy.pmf = as_number_array(e.at("pmf"), "energy.pmf");
  energy.validate();
  return energy;
}

int grid_from(const ordered_json& cfg) {
  std::int64_t g = as_integer(cfg.at("solver").at("grid_size"), "solver.grid_size");
  if (g < 2 || g > 2000000) throw qcd::ConfigError("solver.grid_size must lie in [2, 2e6]");
  return static_cast<int>(g);
}

qcd::QuadratureConfig quad_from(const ordered_json& cfg) {
  double tol = as_number(cfg.at("solver").at("quad_tol"), "solver.quad_tol");
  if (!(tol > 0.0 && tol < 1.0)) throw qcd::ConfigError("solver.quad_tol must lie in (0, 1)");
  qcd::QuadratureConfig quad;
  quad.rel_tol = tol;
  quad.abs_tol = tol * 1e-2;
  return quad;
}

std::string fmt(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return buf;
}

// Writes to run.out when set, standard output otherwise.
void write_text(const std::string& text, const ordered_json& run, const char* what) {
  const ordered_json& out = run.at("out");
  if (is_set(out)) {
    std::string path = as_string(out, "run.out");
    std::ofstream file(path, std::ios::binary);
    if (!file) throw qcd::ConfigError("cannot write to " + path);
    file << text;
    file.flush();
    if (!file) throw std::runtime_error("write failed: " + path);
    std::cerr << what << " written to " << path << "\n";
  } else {
    std::cout << text;
  }
}

std::vector<double> alphas_from(const ordered_json& run) {
  std::vector<double> alphas = as_number_array(run.at("alphas"), "run.alphas");
  if (alphas.empty()) throw qcd::ConfigError("run.alphas must not be empty");
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) throw qcd::ConfigError("run.alphas entries must lie in (0, 1)");
  }
  return alphas;
}

// Lagrangian cost whose solved stopping threshold (with no rights left)
// equals 1 - alpha, tying cost-parameterized tables to PFA targets.
double cost_for_alpha(double rho, double alpha) { return rho * alpha / (1.0 - alpha); }

int cmd_solve_limited(const ordered_json& cfg) {
  qcd::ChangeModel model = model_from(cfg);
  const ordered_json& run = cfg.at("run");
  if (!is_set(run.at("cost_c"))) {
    throw qcd::ConfigError("run.cost_c is required for solve-limited");
  }
  double cost_c = as_number(run.at("cost_c"), "run.cost_c");
  if (!(cost_c > 0.0)) throw qcd::ConfigError("run.cost_c must be positive");
  std::int64_t rights = as_integer(run.at("rights"), "run.rights");
  if (rights < 0 || rights > 10000) throw qcd::ConfigError("run.rights must lie in [0, 10000]");

  qcd::LimitedSolveConfig solve_cfg;
  solve_cfg.grid_size = grid_from(cfg);
  solve_cfg.quad = quad_from(cfg);
  qcd::LimitedPolicyTable table =
      qcd::solve_limited(static_cast<int>(rights), model.prior.rho, cost_c, model.pair, solve_cfg);
  std::fprintf(stderr, "solved limited table: rights=%d grid=%d threshold(no rights)=%.9g\n",
               table.rights(), table.grid_size, table.rows[0].threshold);
  write_text(qcd::to_json(table).dump(2) + "\n", run, "policy table");
  return 0;
}

int cmd_solve_stochastic(const ordered_json& cfg) {
  qcd::ChangeModel model = model_from(cfg);
  qcd::EnergyModel energy = energy_from(cfg);
  const ordered_json& run = cfg.at("run");
  if (!is_set(run.at("cost_c"))) {
    throw qcd::ConfigError("run.cost_c is required for solve-stochastic");
  }
  double cost_c = as_number(run.at("cost_c"), "run.cost_c");
  if (!(cost_c > 0.0)) throw qcd::ConfigError("run.cost_c must be positive");

  const ordered_json& solver = cfg.at("solver");
  qcd::StochasticSolveConfig solve_cfg;
  solve_cfg.grid_size = grid_from(cfg);
  solve_cfg.quad = quad_from(cfg);
  solve_cfg.vi_tol = as_number(solver.at("vi_tol"), "solver.vi_tol");
  if (!(solve_cfg.vi_tol > 0.0)) throw qcd::ConfigError("solver.vi_tol must be positive");
  std::int64_t iters = as_integer(solver.at("max_iters"), "solver.max_iters");
  if (iters < 1) throw qcd::ConfigError("solver.max_iters must be positive");
  solve_cfg.max_iters = static_cast<int>(iters);

  qcd::StochasticValueTable table =
      qcd::infinite_horizon_solve(model.prior.rho, cost_c, model.pair, energy, solve_cfg);
  std::fprintf(stderr, "value iteration converged in %d sweeps (sup-norm change %.3g)\n",
               table.iterations, table.achieved_tol);
  write_text(qcd::to_json(table).dump(2) + "\n", run, "value table");
  return 0;
}

struct CurveRow {
  std::string policy;
  double param = 0.0;
  qcd::SimEstimate est;
};

std::string curve_csv(const std::vector<CurveRow>& rows) {
  std::string out = "policy,param,trials,pfa,pfa_se,add,add_se,risk,risk_se,mean_samples\n";
  for (const CurveRow& row : rows) {
    out += row.policy;
    out += ',' + fmt(row.param);
    out += ',' + std::to_string(row.est.trials);
    out += ',' + fmt(row.est.pfa);
    out += ',' + fmt(row.est.pfa_se);
    out += ',' + fmt(row.est.add);
    out += ',' + fmt(row.est.add_se);
    out += ',' + fmt(row.est.risk);
    out += ',' + fmt(row.est.risk_se);
    out += ',' + fmt(row.est.mean_samples);
    out += '\n';
  }
  return out;
}

int initial_rights_from(const ordered_json& run, int capacity) {
  const ordered_json& node = run.at("initial_rights");
  if (!is_set(node)) return -1;
  std::int64_t value = as_integer(node, "run.initial_rights");
  if (value < 0 || value > capacity) {
    throw qcd::ConfigError("run.initial_rights must lie in [0, capacity]");
  }
  return static_cast<int>(value);
}

int cmd_simulate(const ordered_json& cfg, int threads) {
  qcd::ChangeModel model = model_from(cfg);
  const ordered_json& run = cfg.at("run");
  std::string policy = as_string(run.at("policy"), "run.policy");
  double rho = model.prior.rho;

  qcd::EstimateConfig est_cfg;
  est_cfg.trials = as_integer(run.at("trials"), "run.trials");
  est_cfg.master_seed = as_seed(run.at("master_seed"), "run.master_seed");
  est_cfg.threads = threads;

  bool cost_set = is_set(run.at("cost_c"));
  double cost_override = cost_set ? as_number(run.at("cost_c"), "run.cost_c") : 0.0;
  auto cost_for = [&](double alpha) {
    return cost_set ? cost_override : cost_for_alpha(rho, alpha);
  };

  std::vector<CurveRow> rows;
  auto run_point = [&](const qcd::SamplingPolicy& p, double param, double cost_c) {
    est_cfg.cost_c = cost_c;
    qcd::SimEstimate est = qcd::estimate(p, model, est_cfg);
    std::fprintf(stderr, "%s param=%g: pfa=%.4g add=%.4g samples/trial=%.4g\n", p.name().c_str(),
                 param, est.pfa, est.add, est.mean_samples);
    rows.push_back(CurveRow{p.name(), param, est});
  };

  if (policy == "shiryaev") {
    for (double alpha : alphas_from(run)) {
      run_point(qcd::ShiryaevPolicy(alpha), alpha, cost_for(alpha));
    }
  } else if (policy == "uniform") {
    std::int64_t interval = as_integer(run.at("interval"), "run.interval");
    if (interval < 1) throw qcd::ConfigError("run.interval must be positive");
    for (double alpha : alphas_from(run)) {
      run_point(qcd::UniformSamplingPolicy(interval, alpha), alpha, cost_for(alpha));
    }
  } else if (policy == "greedy") {
    qcd::EnergyModel energy = energy_from(cfg);
    int initial = initial_rights_from(run, energy.capacity);
    for (double alpha : alphas_from(run)) {
      run_point(qcd::GreedyStochasticPolicy(energy, alpha, initial), alpha, cost_for(alpha));
    }
  } else if (policy == "limited") {
    std::int64_t rights = as_integer(run.at("rights"), "run.rights");
    if (rights < 0 || rights > 10000) throw qcd::ConfigError("run.rights must lie in [0, 10000]");
    qcd::LimitedSolveConfig solve_cfg;
    solve_cfg.grid_size = grid_from(cfg);
    solve_cfg.quad = quad_from(cfg);
    std::vector<double> params;
    bool sweep_costs = is_set(run.at("c_values"));
    if (sweep_costs) {
      params = as_number_array(run.at("c_values"), "run.c_values");
      if (params.empty()) throw qcd::ConfigError("run.c_values must not be empty");
      for (double c : params) {
        if (!(c > 0.0)) throw qcd::ConfigError("run.c_values entries must be positive");
      }
    } else {
      if (cost_set) {
        throw qcd::ConfigError(
            "run.cost_c does not combine with run.alphas for the limited policy; "
            "use run.c_values to sweep costs directly");
      }
      params = alphas_from(run);
    }
    for (double param : params) {
      double cost_c = sweep_costs ? param : cost_for_alpha(rho, param);
      qcd::LimitedPolicyTable table =
          qcd::solve_limited(static_cast<int>(rights), rho, cost_c, model.pair, solve_cfg);
      run_point(qcd::LimitedTablePolicy(std::move(table)), param, cost_c);
    }
  } else if (policy == "optimal") {
    const ordered_json& table_node = run.at("table");
    if (!is_set(table_node)) {
      throw qcd::ConfigError("run.table (a solve-stochastic output file) is required "
                             "to simulate the optimal policy");
    }
    std::string path = as_string(table_node, "run.table");
    std::ifstream in(path);
    if (!in) throw qcd::ConfigError("cannot open table file: " + path);
    qcd::StochasticValueTable table = qcd::stochastic_table_from_json(json::parse(in));
    if (std::abs(table.rho - rho) > 1e-12 ||
        std::abs(table.sigma2 - model.pair.sigma2()) > 1e-12 ||
        std::abs(table.shift - model.pair.shift()) > 1e-12) {
      throw qcd::ConfigError("table file was solved for a different model block");
    }
    int initial = initial_rights_from(run, table.energy.capacity);
    double cost_c = cost_set ? cost_override : table.cost_c;
    double param = table.cost_c;
    run_point(qcd::OptimalStochasticPolicy(std::move(table), initial), param, cost_c);
  } else {
    throw qcd::ConfigError(
        "run.policy must be one of shiryaev, uniform, limited, greedy, optimal");
  }

  write_text(curve_csv(rows), run, "curve");
  return 0;
}

std::int64_t min_rights_base10(double alpha, double rho, std::int64_t interval) {
  double needed = -std::log10(alpha) / (-std::log10(1.0 - rho) * static_cast<double>(interval));
  return static_cast<std::int64_t>(std::ceil(needed - 1e-9));
}

int cmd_bounds(const ordered_json& cfg) {
  qcd::ChangeModel model = model_from(cfg);
  const ordered_json& run = cfg.at("run");
  std::vector<double> alphas = alphas_from(run);
  std::int64_t interval = as_integer(run.at("interval"), "run.interval");
  if (interval < 1) throw qcd::ConfigError("run.interval must be positive");

  double rho = model.prior.rho;
  double kl = qcd::kl_divergence(model.pair);
  double log_penalty = -std::log1p(-rho);
  double p_tilde = std::numeric_limits<double>::quiet_NaN();
  std::string chain_note;
  try {
    p_tilde = qcd::sampling_fraction(energy_from(cfg));
  } catch (const qcd::ConvergenceError& e) {
    chain_note = e.what();
  }

  std::printf("kl divergence (f1 vs f0, natural log)  %.9g\n", kl);
  std::printf("|ln(1-rho)|                             %.9g\n", log_penalty);
  if (chain_note.empty()) {
    std::printf("greedy sampling fraction                %.9g\n", p_tilde);
  } else {
    std::printf("greedy sampling fraction                unavailable: %s\n", chain_note.c_str());
  }
  std::printf("sampling interval for the upper bound   %lld\n",
              static_cast<long long>(interval));
  std::printf("%-12s %-14s %-14s %-14s %-16s %-16s\n", "alpha", "lower_add", "upper_add",
              "greedy_add", "min_rights(ln)", "min_rights(lg)");

  std::string csv =
      "alpha,interval,kl,lower_add,upper_add,greedy_add,min_rights_natural,min_rights_base10\n";
  for (double alpha : alphas) {
    double lower = qcd::lower_bound_add(alpha, kl, rho);
    double upper = qcd::upper_bound_add(alpha, kl, rho, interval);
    double greedy = std::isnan(p_tilde)
                        ? std::numeric_limits<double>::quiet_NaN()
                        : qcd::greedy_asymptotic_add(alpha, p_tilde, kl, rho);
    std::int64_t rights_nat = qcd::min_rights_for_interval(alpha, rho, interval);
    std::int64_t rights_lg = min_rights_base10(alpha, rho, interval);
    std::printf("%-12g %-14.6g %-14.6g %-14.6g %-16lld %-16lld\n", alpha, lower, upper, greedy,
                static_cast<long long>(rights_nat), static_cast<long long>(rights_lg));
    csv += fmt(alpha) + ',' + std::to_string(interval) + ',' + fmt(kl) + ',' + fmt(lower) + ',' +
           fmt(upper) + ',' + fmt(greedy) + ',' + std::to_string(rights_nat) + ',' +
           std::to_string(rights_lg) + '\n';
  }
  std::fflush(stdout);
  if (is_set(run.at("out"))) write_text(csv, run, "bounds table");
  return 0;
}

int cmd_chain(const ordered_json& cfg) {
  qcd::EnergyModel energy = energy_from(cfg);
  std::vector<std::vector<double>> matrix = qcd::transition_matrix(energy);

  std::printf("stored-rights transition matrix under the greedy scheme (%zu states):\n",
              matrix.size());
  for (const std::vector<double>& row : matrix) {
    for (double value : row) std::printf(" %10.6g", value);
    std::printf("\n");
  }
  if (energy.pmf[0] == 1.0) {
    std::printf("warning: replenishment is almost surely zero; the chain is absorbed at the "
                "empty state and the long-run sampling fraction is 0\n");
  }

  std::vector<double> stationary = qcd::stationary_distribution(matrix);
  double p_tilde = qcd::sampling_fraction(energy);
  std::printf("stationary distribution (linear solve, cross-checked by power iteration to "
              "1e-10):\n");
  for (double value : stationary) std::printf(" %10.8g", value);
  std::printf("\nsampling fraction 1 - pmf[0]*w[0] = %.8g\n", p_tilde);
  std::fflush(stdout);

  const ordered_json& run = cfg.at("run");
  if (is_set(run.at("out"))) {
    ordered_json report{{"format", 1},
                        {"kind", "chain_report"},
                        {"capacity", energy.capacity},
                        {"pmf", energy.pmf},
                        {"transition_matrix", matrix},
                        {"stationary", stationary},
                        {"sampling_fraction", p_tilde}};
    write_text(report.dump(2) + "\n", run, "chain report");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian quickest change-point detection under sampling-right constraints"};
  app.fallthrough();
  CliOptions opt;
  app.add_option("--config", opt.config_path, "JSON experiment config file");
  app.add_option("--out", opt.out_path, "output path (overrides run.out)");
  CLI::Option* seed_opt =
      app.add_option("--seed", opt.seed, "master seed (overrides run.master_seed)");
  app.add_option("--threads", opt.threads, "simulation worker threads")
      ->check(CLI::Range(1, 256));
  app.add_flag("--print-config", opt.print_config,
               "print the effective config (defaults merged with the file) and exit");

  CLI::App* solve_limited =
      app.add_subcommand("solve-limited", "solve the value table for a fixed budget of rights");
  CLI::App* solve_stochastic = app.add_subcommand(
      "solve-stochastic", "solve the value table for stochastically replenished rights");
  CLI::App* simulate =
      app.add_subcommand("simulate", "estimate delay/false-alarm curves by Monte Carlo");
  CLI::App* bounds =
      app.add_subcommand("bounds", "evaluate asymptotic detection-delay bounds");
  CLI::App* chain =
      app.add_subcommand("chain", "report the stored-rights Markov chain of the greedy scheme");
  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  opt.seed_given = seed_opt->count() > 0;

  try {
    ordered_json cfg = effective_config(opt);
    if (opt.print_config) {
      std::cout << cfg.dump(2) << "\n";
      return 0;
    }
    if (solve_limited->parsed()) return cmd_solve_limited(cfg);
    if (solve_stochastic->parsed()) return cmd_solve_stochastic(cfg);
    if (simulate->parsed()) return cmd_simulate(cfg, opt.threads);
    if (bounds->parsed()) return cmd_bounds(cfg);
    if (chain->parsed()) return cmd_chain(cfg);
    std::cerr << "a subcommand is required: solve-limited, solve-stochastic, simulate, "
                 "bounds, or chain (see --help)\n";
    return 2;
  } catch (const qcd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const qcd::ConvergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const qcd::StepCapError& e) {
    std::cerr << "simulation cap exceeded: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

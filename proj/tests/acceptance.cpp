// End-to-end acceptance suite.  Each criterion prints exactly one PASS/FAIL
// line; the process exits 0 only if every criterion passes.  Tolerances are
// pinned here, next to the checks they guard.

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "qcd/baselines.hpp"
#include "qcd/limited.hpp"
#include "qcd/model.hpp"
#include "qcd/montecarlo.hpp"
#include "qcd/posterior.hpp"
#include "qcd/stochastic.hpp"

#include "shiryaev_oracle.hpp"

namespace {

int g_failures = 0;

void report(int id, bool ok, const char* label, const std::string& details) {
  if (!ok) ++g_failures;
  std::printf("criterion %2d: %s - %s (%s)\n", id, ok ? "PASS" : "FAIL", label, details.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

const qcd::EnergyModel kBattery{3, {0.85, 0.1, 0.03, 0.01, 0.01}};

struct Fit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

Fit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  auto n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  Fit fit;
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    double pred = fit.intercept + fit.slope * x[k];
    ss_res += (y[k] - pred) * (y[k] - pred);
    ss_tot += (y[k] - sy / n) * (y[k] - sy / n);
  }
  fit.r2 = 1.0 - ss_res / ss_tot;
  return fit;
}

// Wait-then-stop cost evaluated from the closed forms alone, one power call
// per candidate wait, sharing no accumulation path with the library scan.
struct BruteMin {
  double value = 0.0;
  std::int64_t interval = 0;
};

double wait_cost_at(double pi, double rho, double cost_c, std::int64_t m) {
  if (m == 0) return 1.0 - pi;
  double decay = std::pow(1.0 - rho, static_cast<double>(m));
  double ssum = static_cast<double>(m) - (1.0 - pi) / rho * (1.0 - decay);
  return cost_c * ssum + (1.0 - pi) * decay;
}

BruteMin brute_wait_scan(double pi, double rho, double cost_c, std::int64_t m_cap) {
  BruteMin best{1.0 - pi, 0};
  for (std::int64_t m = 1; m <= m_cap; ++m) {
    double cost = wait_cost_at(pi, rho, cost_c, m);
    if (cost < best.value) best = {cost, m};
  }
  return best;
}

// Stopping region of a solved row: the scan clamps against 1 - pi, so the
// stopped points carry that cost bit for bit.  The zero-rights row marks
// stopping with a zero wait instead.
bool row_is_stopped(const qcd::ValueRow& row, const qcd::PolicyGrid& grid, int i, bool final_row) {
  if (final_row) return row.intervals[static_cast<std::size_t>(i)] == 0;
  return row.values[static_cast<std::size_t>(i)] == 1.0 - grid.point(i);
}

double cost_for_alpha(double rho, double alpha) { return rho * alpha / (1.0 - alpha); }

}  // namespace

int main() {
  const qcd::DensityPair pair0 = qcd::make_gaussian_pair(1.0, 0.0);
  const double kl0 = qcd::kl_divergence(pair0);
  const double drift = std::abs(std::log(0.9));

  // 1. Closed-form information constants.
  {
    bool ok = std::abs(kl0 - 0.153426) <= 1e-5 && std::abs(drift - 0.105361) <= 1e-6;
    report(1, ok, "kl divergence and prior drift constants match pinned references",
           fmt("kl=%.7f vs 0.153426+-1e-5, |ln(1-rho)|=%.7f vs 0.105361+-1e-6", kl0, drift));
  }

  // 2. Zero-rights values against an independent brute-force scan.
  {
    std::mt19937_64 gen(20260814);
    std::uniform_real_distribution<double> rho_draw(0.02, 0.9);
    std::uniform_real_distribution<double> cost_draw(0.005, 3.0);
    qcd::PolicyGrid grid(1001);
    std::uniform_int_distribution<int> idx_draw(0, grid.size() - 1);
    double max_gap = 0.0;
    int mismatches = 0, near_ties = 0;
    for (int t = 0; t < 1000; ++t) {
      double rho = rho_draw(gen), cost_c = cost_draw(gen);
      int idx = idx_draw(gen);
      double pi = grid.point(idx);
      qcd::ValueRow row = qcd::v0_row(grid, rho, cost_c);
      BruteMin ref = brute_wait_scan(pi, rho, cost_c, 10 * qcd::max_search_interval(rho, cost_c));
      max_gap = std::max(max_gap, std::abs(row.values[static_cast<std::size_t>(idx)] - ref.value));
      auto lib_m = static_cast<std::int64_t>(row.intervals[static_cast<std::size_t>(idx)]);
      if (lib_m != ref.interval) {
        // Distinct minimizers are fine only when the two costs are an exact
        // tie up to the last couple of bits of the independent evaluation.
        if (std::abs(wait_cost_at(pi, rho, cost_c, lib_m) - ref.value) <= 2e-13) {
          ++near_ties;
        } else {
          ++mismatches;
        }
      }
    }
    bool ok = max_gap <= 1e-12 && mismatches == 0;
    report(2, ok, "zero-rights value row equals a brute-force wait-then-stop scan",
           fmt("1000 random (pi,rho,c): max value gap %.2e vs 1e-12, %d minimizer mismatches, "
               "%d exact ties",
               max_gap, mismatches, near_ties));
  }

  // 3. Shape of the solved limited-rights value rows.
  {
    qcd::LimitedSolveConfig cfg;
    cfg.grid_size = 2001;
    qcd::LimitedPolicyTable table = qcd::solve_limited(8, 0.1, 0.02, pair0, cfg);
    qcd::PolicyGrid grid = table.grid();
    int G = grid.size();
    double max_concavity = 0.0, max_dominance = 0.0, max_upper = 0.0, max_terminal = 0.0;
    bool single_crossing = true;
    for (int n = 0; n <= table.rights(); ++n) {
      const auto& row = table.rows[static_cast<std::size_t>(n)];
      for (int i = 1; i + 1 < G; ++i) {
        double mid = 0.5 * (row.values[static_cast<std::size_t>(i) - 1] +
                            row.values[static_cast<std::size_t>(i) + 1]);
        max_concavity = std::max(max_concavity, mid - row.values[static_cast<std::size_t>(i)]);
      }
      for (int i = 0; i < G; ++i) {
        max_upper = std::max(max_upper,
                             row.values[static_cast<std::size_t>(i)] - (1.0 - grid.point(i)));
        if (n > 0) {
          max_dominance = std::max(max_dominance,
                                   row.values[static_cast<std::size_t>(i)] -
                                       table.rows[static_cast<std::size_t>(n) - 1]
                                           .values[static_cast<std::size_t>(i)]);
        }
      }
      max_terminal = std::max(max_terminal, std::abs(row.values.back()));
      int first = -1;
      for (int i = 0; i < G; ++i) {
        bool stopped = row_is_stopped(row, grid, i, n == 0);
        if (stopped && first < 0) first = i;
        if (!stopped && first >= 0) single_crossing = false;
      }
      if (first <= 0) {
        single_crossing = false;
      } else if (row.threshold < grid.point(first - 1) - 1e-12 ||
                 row.threshold > grid.point(first) + 1e-12) {
        single_crossing = false;
      }
    }
    bool ok = max_concavity <= 1e-8 && max_upper <= 1e-12 && max_dominance <= 1e-12 &&
              max_terminal <= 1e-15 && single_crossing;
    report(3, ok, "limited-rights value rows are concave with a single stopping crossing",
           fmt("9 rows on 2001 points: concavity defect %.1e vs 1e-8, dominance defect %.1e, "
               "stop-cost defect %.1e, V(1) %.1e, crossings %s",
               max_concavity, max_dominance, max_upper, max_terminal,
               single_crossing ? "single" : "multiple"));
  }

  // 4. Solved table values against Monte Carlo of the induced policy.
  {
    bool ok = true;
    std::string details;
    qcd::ChangeModel model{{0.0, 0.2}, pair0};
    for (int rights = 1; rights <= 2; ++rights) {
      qcd::LimitedSolveConfig cfg;
      cfg.grid_size = 2001;
      qcd::LimitedPolicyTable table = qcd::solve_limited(rights, 0.2, 0.02, pair0, cfg);
      double planned = table.rows[static_cast<std::size_t>(rights)].values[0];
      qcd::LimitedTablePolicy policy(std::move(table));
      qcd::RiskEstimate risk =
          qcd::risk_estimate(policy, model, 0.02, 200000, 8200 + static_cast<unsigned>(rights));
      bool value_ok = std::abs(risk.delay_form - planned) <= 3.0 * risk.delay_form_se;
      bool forms_ok = std::abs(risk.diff) <= 3.0 * risk.diff_se;
      ok = ok && value_ok && forms_ok;
      details += fmt("%sN=%d: table %.5f vs mc %.5f+-%.5f, loss-form gap %.1e vs %.1e",
                     rights == 1 ? "" : "; ", rights, planned, risk.delay_form,
                     3.0 * risk.delay_form_se, std::abs(risk.diff), 3.0 * risk.diff_se);
    }
    report(4, ok, "table value at pi=0 matches Monte Carlo risk of the induced policy", details);
  }

  // 5. Delay curves order by sampling freedom at matched false-alarm levels.
  // The limited tables reuse the cost whose final-phase threshold sits at
  // exactly 1 - alpha; the two smallest-alpha tables feed criterion 9 below.
  std::vector<std::unique_ptr<qcd::LimitedTablePolicy>> final_phase_policies;
  {
    const std::vector<double> alphas{1e-1, 1e-2, 1e-3};
    qcd::ChangeModel model{{0.0, 0.1}, pair0};
    bool ok = true;
    std::string details;
    for (std::size_t k = 0; k < alphas.size(); ++k) {
      double alpha = alphas[k];
      double cost_c = cost_for_alpha(0.1, alpha);
      qcd::LimitedSolveConfig cfg;
      cfg.grid_size = 2001;
      auto lim30 = std::make_unique<qcd::LimitedTablePolicy>(
          qcd::solve_limited(30, 0.1, cost_c, pair0, cfg));
      auto lim8 = std::make_unique<qcd::LimitedTablePolicy>(
          qcd::solve_limited(8, 0.1, cost_c, pair0, cfg));
      qcd::ShiryaevPolicy every_slot(alpha);
      qcd::UniformSamplingPolicy uniform(11, alpha);

      qcd::EstimateConfig run;
      run.trials = 200000;
      run.master_seed = 5100 + static_cast<unsigned>(k);
      run.cost_c = cost_c;
      qcd::SimEstimate a = qcd::estimate(every_slot, model, run);
      qcd::SimEstimate b = qcd::estimate(*lim30, model, run);
      qcd::SimEstimate c = qcd::estimate(*lim8, model, run);
      qcd::SimEstimate d = qcd::estimate(uniform, model, run);
      auto ordered = [](const qcd::SimEstimate& lo, const qcd::SimEstimate& hi) {
        return lo.add <= hi.add + 3.0 * (lo.add_se + hi.add_se);
      };
      ok = ok && ordered(a, b) && ordered(b, c) && ordered(c, d);
      details += fmt("%salpha=%g: %.2f <= %.2f <= %.2f <= %.2f", k == 0 ? "" : "; ", alpha, a.add,
                     b.add, c.add, d.add);
      final_phase_policies.push_back(std::move(lim8));
    }
    report(5, ok, "mean detection delay orders by sampling freedom", details);
  }

  // 6. Stochastic-replenishment solver limits.
  {
    qcd::StochasticSolveConfig cfg;
    cfg.grid_size = 401;
    qcd::EnergyModel every_slot{4, {0.0, 1.0}};
    qcd::StochasticValueTable rich = qcd::infinite_horizon_solve(0.2, 0.05, pair0, every_slot, cfg);
    testoracle::ShiryaevSolution ref =
        testoracle::solve_shiryaev_reference(0.2, 0.05, 1.0, 1.0, 401, 1e-11, 200000);
    double classic_gap = 0.0;
    for (const auto& row : rich.v) {
      for (std::size_t g = 0; g < row.size(); ++g) {
        classic_gap = std::max(classic_gap, std::abs(row[g] - ref.value[g]));
      }
    }

    cfg.grid_size = 201;
    qcd::DensityPair flat = qcd::DensityPair::gaussian_variance_shift(1.0, 0.0);
    qcd::StochasticValueTable useless = qcd::infinite_horizon_solve(0.2, 0.05, flat, kBattery, cfg);
    double energy_gap = 0.0;
    for (std::size_t g = 0; g < useless.v[0].size(); ++g) {
      for (const auto& row : useless.v) {
        energy_gap = std::max(energy_gap, std::abs(row[g] - useless.v[0][g]));
      }
    }

    qcd::StochasticValueTable fixed = qcd::infinite_horizon_solve(0.2, 0.05, pair0, kBattery, cfg);
    std::vector<qcd::ValueMatrix> steps =
        qcd::finite_horizon_solve(200, 0.2, 0.05, pair0, kBattery, cfg);
    double horizon_gap = 0.0;
    for (std::size_t n = 0; n < fixed.v.size(); ++n) {
      for (std::size_t g = 0; g < fixed.v[n].size(); ++g) {
        horizon_gap = std::max(horizon_gap, std::abs(steps[0][n][g] - fixed.v[n][g]));
      }
    }
    bool ok = classic_gap <= 2e-3 && energy_gap <= 1e-8 && horizon_gap <= 1e-8;
    report(6, ok, "stochastic solver matches its classic, flat and finite-horizon limits",
           fmt("unit-arrival vs reference %.2e vs 2e-3, flat-density row spread %.2e vs 1e-8, "
               "200-step vs converged %.2e vs 1e-8 (%d sweeps)",
               classic_gap, energy_gap, horizon_gap, fixed.iterations));
  }

  // 7. Greedy battery chain: exact matrix, stationary law, long-run runs.
  {
    auto matrix = qcd::transition_matrix(kBattery);
    const std::vector<double> first_row{0.95, 0.03, 0.01, 0.01};
    double row_gap = 0.0;
    for (std::size_t j = 0; j < first_row.size(); ++j) {
      row_gap = std::max(row_gap, std::abs(matrix[0][j] - first_row[j]));
    }

    std::vector<double> st = qcd::stationary_distribution(matrix);
    std::vector<double> power(st.size(), 1.0 / static_cast<double>(st.size()));
    for (int iter = 0; iter < 100000; ++iter) {
      std::vector<double> next(power.size(), 0.0);
      for (std::size_t i = 0; i < power.size(); ++i) {
        for (std::size_t j = 0; j < power.size(); ++j) next[j] += power[i] * matrix[i][j];
      }
      double change = 0.0;
      for (std::size_t j = 0; j < power.size(); ++j) change += std::abs(next[j] - power[j]);
      power.swap(next);
      if (change <= 1e-15) break;
    }
    double power_gap = 0.0;
    for (std::size_t j = 0; j < st.size(); ++j) {
      power_gap = std::max(power_gap, std::abs(power[j] - st[j]));
    }

    // Long simulated run, batch means against the stationary law.
    const int batches = 1000, batch_len = 1000;
    std::mt19937_64 gen(7700);
    int state = kBattery.capacity;
    std::vector<std::vector<double>> freq(st.size(), std::vector<double>(batches, 0.0));
    std::vector<double> spend_freq(batches, 0.0);
    for (int b = 0; b < batches; ++b) {
      for (int s = 0; s < batch_len; ++s) {
        freq[static_cast<std::size_t>(state)][static_cast<std::size_t>(b)] += 1.0;
        int arrived = qcd::sample_replenishment(kBattery, gen);
        int spend = state + arrived >= 1 ? 1 : 0;
        spend_freq[static_cast<std::size_t>(b)] += spend;
        state = std::min(kBattery.capacity, state + arrived - spend);
      }
    }
    auto batch_check = [&](const std::vector<double>& counts, double target, double& gap,
                           double& band) {
      double mean = 0.0;
      for (double v : counts) mean += v / batch_len;
      mean /= batches;
      double var = 0.0;
      for (double v : counts) var += (v / batch_len - mean) * (v / batch_len - mean);
      double se = std::sqrt(var / (batches - 1) / batches);
      gap = std::abs(mean - target);
      band = 3.0 * se;
      return gap <= band;
    };
    bool freq_ok = true;
    double worst_gap = 0.0, worst_band = 0.0;
    double worst_margin = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < st.size(); ++i) {
      double gap = 0.0, band = 0.0;
      freq_ok = batch_check(freq[i], st[i], gap, band) && freq_ok;
      if (gap - band > worst_margin) {
        worst_margin = gap - band;
        worst_gap = gap;
        worst_band = band;
      }
    }
    double p_tilde = qcd::sampling_fraction(kBattery);
    double frac_gap = 0.0, frac_band = 0.0;
    freq_ok = batch_check(spend_freq, p_tilde, frac_gap, frac_band) && freq_ok;

    // The published companions of this matrix do not solve w = wP; assert
    // that the computed law is genuinely different so the difference cannot
    // pass unnoticed.
    const std::vector<double> printed{0.7988, 0.0988, 0.0624, 0.0390};
    double printed_gap = 0.0;
    for (std::size_t j = 0; j < st.size(); ++j) {
      printed_gap = std::max(printed_gap, std::abs(st[j] - printed[j]));
    }
    bool discrepancy = printed_gap > 0.01 && std::abs(p_tilde - 0.3610) > 0.01;

    bool ok = row_gap <= 1e-12 && power_gap <= 1e-10 && freq_ok && discrepancy;
    report(7, ok, "greedy battery chain matrix, stationary law and simulated run agree",
           fmt("first row gap %.1e vs 1e-12, power-iteration gap %.1e vs 1e-10, worst run gap "
               "%.1e vs band %.1e, p~=%.7f (printed companions differ by %.3f)",
               row_gap, power_gap, worst_gap, worst_band, p_tilde, printed_gap));
  }

  // 8. Greedy delay slope against the information-rate prediction.
  {
    qcd::DensityPair pair5 = qcd::make_gaussian_pair(1.0, 5.0);
    qcd::ChangeModel model{{0.0, 0.1}, pair5};
    double p_tilde = qcd::sampling_fraction(kBattery);
    double rate = p_tilde * qcd::kl_divergence(pair5) + drift;
    const std::vector<double> alphas{1e-1, 1e-2, 1e-3, 1e-4};
    qcd::EstimateConfig run;
    run.trials = 200000;
    run.master_seed = 8800;
    qcd::CurveSet curve = qcd::sweep_alpha(
        [&](double alpha) -> std::unique_ptr<qcd::SamplingPolicy> {
          return std::make_unique<qcd::GreedyStochasticPolicy>(kBattery, alpha);
        },
        alphas, model, run);
    std::vector<double> x, y;
    for (const auto& point : curve.points) {
      x.push_back(std::abs(std::log(point.param)));
      y.push_back(point.estimate.add);
    }
    Fit fit = least_squares(x, y);
    double slope_error = std::abs(fit.slope * rate - 1.0);
    bool ok = slope_error <= 0.15 && std::abs(fit.intercept) <= 15.0 && fit.r2 >= 0.995;
    report(8, ok, "greedy delay grows with |ln alpha| at the predicted information rate",
           fmt("slope %.4f vs 1/rate %.4f (relative error %.3f vs 0.15), intercept %.2f vs 15, "
               "R^2 %.5f vs 0.995",
               fit.slope, 1.0 / rate, slope_error, fit.intercept, fit.r2));
  }

  // 9. Empirical false-alarm probability stays within alpha for every
  // threshold-at-1-alpha policy, including the limited tables' final phase.
  {
    qcd::ChangeModel model{{0.0, 0.1}, pair0};
    bool ok = true;
    double worst_excess = -1.0;
    std::string worst_name = "none";
    const std::vector<double> alphas{0.1, 0.01};
    for (std::size_t k = 0; k < alphas.size(); ++k) {
      double alpha = alphas[k];
      qcd::ShiryaevPolicy every_slot(alpha);
      qcd::UniformSamplingPolicy uniform(11, alpha);
      qcd::GreedyStochasticPolicy greedy(kBattery, alpha);
      std::vector<const qcd::SamplingPolicy*> policies{&every_slot, &uniform, &greedy,
                                                       final_phase_policies[k].get()};
      for (const auto* policy : policies) {
        qcd::EstimateConfig run;
        run.trials = 100000;
        run.master_seed = 9900 + static_cast<unsigned>(k);
        qcd::SimEstimate est = qcd::estimate(*policy, model, run);
        double excess = est.pfa - alpha - 3.0 * est.pfa_se;
        ok = ok && excess <= 0.0;
        if (excess > worst_excess) {
          worst_excess = excess;
          worst_name = fmt("%s at alpha=%g (pfa %.5f)", policy->name().c_str(), alpha, est.pfa);
        }
      }
    }
    report(9, ok, "threshold policies keep the false-alarm probability within alpha",
           fmt("8 policy/alpha pairs, worst margin %.2e for %s", worst_excess,
               worst_name.c_str()));
  }

  // 10. Closed-form delay references: identities and pinned plug-ins.
  {
    std::mt19937_64 gen(1010);
    std::uniform_real_distribution<double> alpha_draw(1e-6, 0.5);
    std::uniform_real_distribution<double> kl_draw(0.01, 2.0);
    std::uniform_real_distribution<double> rho_draw(0.01, 0.9);
    bool identities = true;
    for (int t = 0; t < 100; ++t) {
      double alpha = alpha_draw(gen), kl = kl_draw(gen), rho = rho_draw(gen);
      identities = identities &&
                   qcd::upper_bound_add(alpha, kl, rho, 1) == qcd::lower_bound_add(alpha, kl, rho);
      identities = identities && qcd::greedy_asymptotic_add(alpha, 1.0, kl, rho) ==
                                     qcd::lower_bound_add(alpha, kl, rho);
    }
    // Plug-in checks quote the worked example's own rounded inputs.
    double lower = qcd::lower_bound_add(1e-5, 0.153426, 0.1);
    double upper = qcd::upper_bound_add(1e-5, 0.153426, 0.1, 11);
    bool plug_ins = std::abs(lower - 44.48811962132097) <= 1e-6 &&
                    std::abs(upper - 96.49724452982548) <= 1e-6 &&
                    qcd::min_rights_for_interval(1e-5, 0.1, 11) == 10 &&
                    qcd::min_rights_for_interval(std::exp(-1.0), 1.0 - std::exp(-1.0), 1) == 1;
    report(10, identities && plug_ins,
           "closed-form delay references obey their identities and pinned values",
           fmt("100 random identity checks %s; lower=%.8f vs 44.48811962, uniform upper=%.8f vs "
               "96.49724453, rights floor %lld and %lld vs 10 and 1",
               identities ? "exact" : "broken", lower, upper,
               static_cast<long long>(qcd::min_rights_for_interval(1e-5, 0.1, 11)),
               static_cast<long long>(
                   qcd::min_rights_for_interval(std::exp(-1.0), 1.0 - std::exp(-1.0), 1))));
  }

  std::printf("%d/10 criteria passed\n", 10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}

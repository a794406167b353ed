#include "qcd/montecarlo.hpp"

#include <cmath>
#include <thread>

#include "qcd/errors.hpp"

namespace qcd {

namespace {

// Kahan-compensated accumulator; block results are later combined in a fixed
// order so the estimate does not depend on the thread count.
struct Accumulator {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) {
    double term = x - comp;
    double next = sum + term;
    comp = (next - sum) - term;
    sum = next;
  }
};

struct BlockSums {
  std::int64_t n = 0;
  std::int64_t capped = 0;
  Accumulator delay, delay2;
  Accumulator fa;
  Accumulator risk, risk2;
  Accumulator alt, alt2;
  Accumulator diff, diff2;
  Accumulator samples, samples2;
};

constexpr std::int64_t kBlockSize = 4096;

void run_block(const SamplingPolicy& policy, const ChangeModel& model,
               const EstimateConfig& config, std::int64_t begin, std::int64_t end,
               BlockSums& out) {
  for (std::int64_t t = begin; t < end; ++t) {
    TrialRng rng(TrajectorySeed{config.master_seed, static_cast<std::uint64_t>(t)});
    DetectionOutcome outcome;
    try {
      outcome = policy.run_trial(model, rng);
    } catch (const StepCapError&) {
      ++out.capped;
      continue;
    }
    double delay = outcome.tau >= outcome.change_point
                       ? static_cast<double>(outcome.tau - outcome.change_point)
                       : 0.0;
    double fa = outcome.false_alarm ? 1.0 : 0.0;
    double risk = config.cost_c * delay + fa;
    double alt = (1.0 - outcome.pi_at_stop) + config.cost_c * outcome.pi_running_sum;
    double n_samples = outcome.samples_used;
    ++out.n;
    out.delay.add(delay);
    out.delay2.add(delay * delay);
    out.fa.add(fa);
    out.risk.add(risk);
    out.risk2.add(risk * risk);
    out.alt.add(alt);
    out.alt2.add(alt * alt);
    out.diff.add(risk - alt);
    out.diff2.add((risk - alt) * (risk - alt));
    out.samples.add(n_samples);
    out.samples2.add(n_samples * n_samples);
  }
}

double se_from_moments(double sum, double sumsq, std::int64_t n) {
  if (n < 2) return 0.0;
  double mean = sum / static_cast<double>(n);
  double var = (sumsq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1);
  if (var < 0.0) var = 0.0;
  return std::sqrt(var / static_cast<double>(n));
}

}  // namespace

SimEstimate estimate(const SamplingPolicy& policy, const ChangeModel& model,
                     const EstimateConfig& config) {
  if (config.trials < 100) throw ConfigError("need at least 100 trials");
  model.prior.validate();

  std::int64_t blocks = (config.trials + kBlockSize - 1) / kBlockSize;
  std::vector<BlockSums> sums(static_cast<std::size_t>(blocks));

  auto worker = [&](std::int64_t first_block, std::int64_t last_block) {
    for (std::int64_t b = first_block; b < last_block; ++b) {
      std::int64_t begin = b * kBlockSize;
      std::int64_t end = std::min(config.trials, begin + kBlockSize);
      run_block(policy, model, config, begin, end, sums[static_cast<std::size_t>(b)]);
    }
  };

  int threads = config.threads;
  if (threads < 1) threads = 1;
  if (threads > blocks) threads = static_cast<int>(blocks);
  if (threads <= 1) {
    worker(0, blocks);
  } else {
    std::vector<std::thread> pool;
    std::int64_t per = (blocks + threads - 1) / threads;
    for (int i = 0; i < threads; ++i) {
      std::int64_t first = i * per;
      std::int64_t last = std::min(blocks, first + per);
      if (first >= last) break;
      pool.emplace_back(worker, first, last);
    }
    for (auto& th : pool) th.join();
  }

  BlockSums total;
  for (const BlockSums& b : sums) {
    total.n += b.n;
    total.capped += b.capped;
    total.delay.add(b.delay.sum);
    total.delay2.add(b.delay2.sum);
    total.fa.add(b.fa.sum);
    total.risk.add(b.risk.sum);
    total.risk2.add(b.risk2.sum);
    total.alt.add(b.alt.sum);
    total.alt2.add(b.alt2.sum);
    total.diff.add(b.diff.sum);
    total.diff2.add(b.diff2.sum);
    total.samples.add(b.samples.sum);
    total.samples2.add(b.samples2.sum);
  }
  if (total.capped * 1000 > config.trials) {
    throw StepCapError("more than 0.1% of trials exceeded the step cap");
  }
  if (total.n < 2) throw StepCapError("too few usable trials");

  SimEstimate est;
  est.trials = total.n;
  est.capped = total.capped;
  est.cost_c = config.cost_c;
  auto n = static_cast<double>(total.n);
  est.add = total.delay.sum / n;
  est.add_se = se_from_moments(total.delay.sum, total.delay2.sum, total.n);
  est.pfa = total.fa.sum / n;
  // Bernoulli second moment equals the first.
  est.pfa_se = se_from_moments(total.fa.sum, total.fa.sum, total.n);
  est.risk = total.risk.sum / n;
  est.risk_se = se_from_moments(total.risk.sum, total.risk2.sum, total.n);
  est.risk_posterior = total.alt.sum / n;
  est.risk_posterior_se = se_from_moments(total.alt.sum, total.alt2.sum, total.n);
  est.risk_diff_se = se_from_moments(total.diff.sum, total.diff2.sum, total.n);
  est.mean_samples = total.samples.sum / n;
  est.mean_samples_se = se_from_moments(total.samples.sum, total.samples2.sum, total.n);
  return est;
}

CurveSet sweep_alpha(const std::function<std::unique_ptr<SamplingPolicy>(double)>& make_policy,
                     std::span<const double> alphas, const ChangeModel& model,
                     const EstimateConfig& config) {
  if (alphas.empty()) throw ConfigError("alpha sweep must not be empty");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0 && alphas[i] < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (i > 0 && !(alphas[i] < alphas[i - 1])) {
      throw ConfigError("alphas must be strictly decreasing");
    }
  }
  CurveSet curve;
  for (double alpha : alphas) {
    std::unique_ptr<SamplingPolicy> policy = make_policy(alpha);
    if (curve.policy.empty()) curve.policy = policy->name();
    CurvePoint point;
    point.param = alpha;
    point.estimate = estimate(*policy, model, config);
    curve.points.push_back(std::move(point));
  }
  return curve;
}

RiskEstimate risk_estimate(const SamplingPolicy& policy, const ChangeModel& model, double cost_c,
                           std::int64_t trials, std::uint64_t master_seed) {
  EstimateConfig config;
  config.trials = trials;
  config.master_seed = master_seed;
  config.cost_c = cost_c;
  SimEstimate est = estimate(policy, model, config);
  RiskEstimate out;
  out.delay_form = est.risk;
  out.delay_form_se = est.risk_se;
  out.posterior_form = est.risk_posterior;
  out.posterior_form_se = est.risk_posterior_se;
  out.diff = est.risk - est.risk_posterior;
  out.diff_se = est.risk_diff_se;
  return out;
}

}  // namespace qcd

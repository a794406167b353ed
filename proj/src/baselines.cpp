#include "qcd/baselines.hpp"

#include <cmath>

#include "qcd/posterior.hpp"

namespace qcd {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

void check_interval(std::int64_t interval) {
  if (interval < 1) throw ConfigError("sampling interval must be at least 1");
}

}  // namespace

ShiryaevPolicy::ShiryaevPolicy(double alpha) : alpha_(alpha) { check_alpha(alpha); }

std::string ShiryaevPolicy::name() const { return "shiryaev"; }

DetectionOutcome ShiryaevPolicy::run_trial(const ChangeModel& model, TrialRng& rng) const {
  double threshold = 1.0 - alpha_;
  double rho = model.prior.rho;
  DetectionOutcome out;
  out.change_point = sample_change_point(model.prior, rng.lambda_stream());
  double pi = model.prior.pi0;
  double cum = 0.0;
  std::int64_t k = 0;
  while (pi < threshold) {
    if (k >= kTrialStepCap) throw StepCapError("trial exceeded the step cap");
    cum += pi;
    ++k;
    double x = sample_observation(model.pair, k >= out.change_point, rng.obs_stream());
    pi = update_with_observation(pi, x, model.pair, rho);
    out.sample_times.push_back(k);
  }
  out.tau = k;
  out.samples_used = static_cast<int>(out.sample_times.size());
  out.false_alarm = out.tau < out.change_point;
  out.pi_at_stop = pi;
  out.pi_running_sum = cum;
  return out;
}

UniformSamplingPolicy::UniformSamplingPolicy(std::int64_t interval, double alpha)
    : interval_(interval), alpha_(alpha) {
  check_interval(interval);
  check_alpha(alpha);
}

std::string UniformSamplingPolicy::name() const {
  return "uniform[" + std::to_string(interval_) + "]";
}

DetectionOutcome UniformSamplingPolicy::run_trial(const ChangeModel& model, TrialRng& rng) const {
  double threshold = 1.0 - alpha_;
  double rho = model.prior.rho;
  DetectionOutcome out;
  out.change_point = sample_change_point(model.prior, rng.lambda_stream());
  double pi = model.prior.pi0;
  double cum = 0.0;
  std::int64_t k = 0;
  while (pi < threshold) {
    if (k > kTrialStepCap - interval_) throw StepCapError("trial exceeded the step cap");
    cum += silent_sum(pi, rho, interval_);
    k += interval_;
    double x = sample_observation(model.pair, k >= out.change_point, rng.obs_stream());
    pi = posterior_after_interval(pi, rho, interval_, x, model.pair);
    out.sample_times.push_back(k);
  }
  out.tau = k;
  out.samples_used = static_cast<int>(out.sample_times.size());
  out.false_alarm = out.tau < out.change_point;
  out.pi_at_stop = pi;
  out.pi_running_sum = cum;
  return out;
}

double lower_bound_add(double alpha, double kl, double rho) {
  check_alpha(alpha);
  if (!(kl >= 0.0)) throw ConfigError("kl divergence must be nonnegative");
  return -std::log(alpha) / (kl - std::log1p(-rho));
}

double upper_bound_add(double alpha, double kl, double rho, std::int64_t interval) {
  check_alpha(alpha);
  check_interval(interval);
  if (!(kl >= 0.0)) throw ConfigError("kl divergence must be nonnegative");
  double s = static_cast<double>(interval);
  return -std::log(alpha) * s / (kl - std::log1p(-rho) * s);
}

double greedy_asymptotic_add(double alpha, double p_tilde, double kl, double rho) {
  check_alpha(alpha);
  if (!(p_tilde >= 0.0 && p_tilde <= 1.0)) throw ConfigError("sampling fraction out of [0, 1]");
  if (!(kl >= 0.0)) throw ConfigError("kl divergence must be nonnegative");
  return -std::log(alpha) / (p_tilde * kl - std::log1p(-rho));
}

std::int64_t min_rights_for_interval(double alpha, double rho, std::int64_t interval) {
  check_alpha(alpha);
  check_interval(interval);
  double needed = -std::log(alpha) / (-std::log1p(-rho) * static_cast<double>(interval));
  // Tiny slack so inputs whose exact ratio is an integer are not pushed up a
  // whole right by floating-point noise in the logs.
  return static_cast<std::int64_t>(std::ceil(needed - 1e-9));
}

}  // namespace qcd

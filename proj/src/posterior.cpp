#include "qcd/posterior.hpp"

#include <cmath>
#include <stdexcept>

namespace qcd {

namespace {

// pi' = w f1(x) / (w f1(x) + (1-w) f0(x)) evaluated through log densities.
double bayes_update(double weight, double x, const DensityPair& pair) {
  if (weight <= 0.0) return 0.0;
  if (weight >= 1.0) return 1.0;
  double l = pair.log_f1(x) - pair.log_f0(x);
  if (std::isnan(l)) throw std::domain_error("posterior update undefined: both densities vanish");
  // log((1-w)/w) - l, then a stable logistic.
  double t = std::log1p(-weight) - std::log(weight) - l;
  if (t >= 0.0) {
    double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

void check_interval(std::int64_t m) {
  if (m < 1) throw std::domain_error("sampling interval must be at least 1");
}

}  // namespace

double propagate_silent(double pi, double rho) {
  return pi + (1.0 - pi) * rho;
}

double update_with_observation(double pi, double x, const DensityPair& pair, double rho) {
  return bayes_update(propagate_silent(pi, rho), x, pair);
}

double silent_sum(double pi, double rho, std::int64_t m) {
  if (m < 0) throw std::domain_error("slot count must be nonnegative");
  if (m == 0) return 0.0;
  double pibar = 1.0 - pi;
  double decay = -std::expm1(static_cast<double>(m) * std::log1p(-rho));  // 1 - (1-rho)^m
  return static_cast<double>(m) - pibar / rho * decay;
}

double posterior_after_interval(double pi, double rho, std::int64_t m, double x,
                                const DensityPair& pair) {
  check_interval(m);
  double pibar = 1.0 - pi;
  double weight = 1.0 - pibar * std::exp(static_cast<double>(m) * std::log1p(-rho));
  return bayes_update(weight, x, pair);
}

ScoreState score_state_from_posterior(double pi) {
  if (pi > 1.0 - 1e-15) pi = 1.0 - 1e-15;
  if (pi < 1e-300) pi = 1e-300;
  return ScoreState{0.0, std::log(pi) - std::log1p(-pi)};
}

ScoreState score_step(const ScoreState& state, double log_lr, double rho) {
  double drift = -std::log1p(-rho);
  // Prior-odds correction log(1 + rho (1-pi)/pi) with (1-pi)/pi = exp(-r),
  // evaluated as log(1 + exp(log rho - r)) to survive very negative r.
  double a = std::log(rho) - state.r;
  double correction = a > 30.0 ? a : std::log1p(std::exp(a));
  ScoreState next;
  next.s = state.s + log_lr + drift;
  next.r = state.r + log_lr + drift + correction;
  return next;
}

double shiryaev_roberts_step(double r_prev, double lr, double rho, std::int64_t interval) {
  check_interval(interval);
  if (!(lr >= 0.0)) throw std::domain_error("likelihood ratio must be nonnegative");
  double decay = std::exp(static_cast<double>(interval) * std::log1p(-rho));
  return (1.0 + r_prev) * lr / decay;
}

double shiryaev_roberts_to_posterior(double r, double rho, std::int64_t interval) {
  check_interval(interval);
  if (!(r >= 0.0)) throw std::domain_error("statistic must be nonnegative");
  double decay = -std::expm1(static_cast<double>(interval) * std::log1p(-rho));
  return r / (r + 1.0 / decay);
}

}  // namespace qcd

#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "qcd/errors.hpp"
#include "qcd/rng.hpp"

namespace qcd {

// Discrete-time change point: P(L = 0) = pi0, P(L = k) = (1-pi0) rho (1-rho)^(k-1).
struct GeometricPrior {
  double pi0 = 0.0;
  double rho = 0.1;

  void validate() const {
    if (!(pi0 >= 0.0 && pi0 < 1.0)) throw ConfigError("pi0 must lie in [0, 1)");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  }
};

// Extension point for user-supplied observation distributions.
class Density {
 public:
  virtual ~Density() = default;
  virtual double log_density(double x) const = 0;
  virtual double sample(std::mt19937_64& gen) const = 0;
  // Scale used to size numerical integration windows.
  virtual double std_dev() const = 0;
};

// Pre/post-change observation densities.  The built-in pair is a zero-mean
// Gaussian whose variance jumps from sigma2 to sigma2 + shift at the change
// point; generic pairs fall back to numerical integration in the solvers.
class DensityPair {
 public:
  static DensityPair gaussian_variance_shift(double sigma2, double shift);
  static DensityPair custom(std::shared_ptr<const Density> pre,
                            std::shared_ptr<const Density> post);

  bool is_gaussian() const { return gaussian_; }
  double sigma2() const { return sigma2_; }
  double shift() const { return shift_; }

  double log_f0(double x) const;
  double log_f1(double x) const;
  double sample(bool post_change, std::mt19937_64& gen) const;
  // Largest standard deviation of either density; integration windows are a
  // fixed multiple of this.
  double max_std() const;

 private:
  DensityPair() = default;
  bool gaussian_ = true;
  double sigma2_ = 1.0;
  double shift_ = 1.0;
  std::shared_ptr<const Density> pre_;
  std::shared_ptr<const Density> post_;
};

// snr_db is the post/pre variance ratio in dB: shift = sigma2 * 10^(snr_db/10).
DensityPair make_gaussian_pair(double sigma2, double snr_db);

// D(f1 || f0).  Closed form for the built-in pair, numeric otherwise.
double kl_divergence(const DensityPair& pair);

// log f1(x) - log f0(x); a skipped slot carries no evidence and returns 0.
double log_likelihood_ratio(const DensityPair& pair, double x, bool sampled);

// Replenishment process: i.i.d. rights per slot with finite pmf
// P(nu = v) = pmf[v], stored up to capacity rights.
struct EnergyModel {
  int capacity = 0;
  std::vector<double> pmf;

  void validate() const;
  int max_replenishment() const { return static_cast<int>(pmf.size()) - 1; }
};

struct ChangeModel {
  GeometricPrior prior;
  DensityPair pair;
};

std::int64_t sample_change_point(const GeometricPrior& prior, std::mt19937_64& gen);
double sample_observation(const DensityPair& pair, bool post_change, std::mt19937_64& gen);
int sample_replenishment(const EnergyModel& energy, std::mt19937_64& gen);

// Per-trial cap on simulated slots; a trajectory that exceeds it aborts.
inline constexpr std::int64_t kTrialStepCap = 10'000'000;

}  // namespace qcd

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qcd {

// Identifies one simulated trajectory.  Every random quantity in a trial is
// a pure function of (master_seed, trial_index), so trials can be generated
// in any order, on any number of threads, with identical results.
struct TrajectorySeed {
  std::uint64_t master_seed = 0;
  std::uint64_t trial_index = 0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent generator streams within one trial.  Change-point, observation
// and replenishment draws come from separate streams so that policies which
// consume different amounts of one kind of randomness still see identical
// draws of the others (needed for shared-stream policy comparisons).
class TrialRng {
 public:
  explicit TrialRng(TrajectorySeed seed)
      : lambda_(stream_seed(seed, 1)),
        obs_(stream_seed(seed, 2)),
        replenish_(stream_seed(seed, 3)) {}

  std::mt19937_64& lambda_stream() { return lambda_; }
  std::mt19937_64& obs_stream() { return obs_; }
  std::mt19937_64& replenish_stream() { return replenish_; }

 private:
  static std::uint64_t stream_seed(TrajectorySeed s, std::uint64_t tag) {
    std::uint64_t h = splitmix64(s.master_seed);
    h = splitmix64(h ^ splitmix64(s.trial_index + 0x51ed270b7a2ce1e5ULL));
    return splitmix64(h ^ tag);
  }

  std::mt19937_64 lambda_;
  std::mt19937_64 obs_;
  std::mt19937_64 replenish_;
};

// Uniform on (0, 1]: never returns 0 so log(u) is always finite.
inline double uniform_open01(std::mt19937_64& g) {
  return (static_cast<double>(g() >> 11) + 1.0) * 0x1.0p-53;
}

// Box-Muller without the cached spare: deterministic draw count per call.
inline double standard_normal(std::mt19937_64& g) {
  double u1 = uniform_open01(g);
  double u2 = uniform_open01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace qcd

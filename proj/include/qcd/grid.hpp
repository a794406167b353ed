#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "qcd/errors.hpp"

namespace qcd {

// Uniform grid on [0, 1] used by both dynamic-programming solvers.
class PolicyGrid {
 public:
  explicit PolicyGrid(int size) : size_(size) {
    if (size < 2) throw ConfigError("grid size must be at least 2");
  }

  int size() const { return size_; }
  double spacing() const { return 1.0 / (size_ - 1); }
  double point(int i) const { return static_cast<double>(i) / (size_ - 1); }

  int nearest(double pi) const {
    double t = pi * (size_ - 1);
    long i = std::lround(t);
    if (i < 0) i = 0;
    if (i >= size_) i = size_ - 1;
    return static_cast<int>(i);
  }

  // Piecewise-linear evaluation of grid values at pi (clamped to [0, 1]).
  double interpolate(std::span<const double> values, double pi) const {
    if (pi <= 0.0) return values.front();
    if (pi >= 1.0) return values.back();
    double t = pi * (size_ - 1);
    int i = static_cast<int>(t);
    if (i >= size_ - 1) return values.back();
    double frac = t - i;
    return values[static_cast<std::size_t>(i)] * (1.0 - frac) +
           values[static_cast<std::size_t>(i) + 1] * frac;
  }

 private:
  int size_;
};

}  // namespace qcd

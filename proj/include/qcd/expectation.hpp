#pragma once

#include <functional>
#include <span>
#include <vector>

#include "qcd/grid.hpp"
#include "qcd/model.hpp"

namespace qcd {

struct QuadratureConfig {
  double rel_tol = 1e-8;
  double abs_tol = 1e-10;
  int panel_order = 16;   // Gauss-Legendre points per panel
  int max_panels = 4096;  // doubling stops here; then ConvergenceError
};

// Nodes/weights for n-point Gauss-Legendre on [-1, 1]; cached per order.
const std::vector<double>& gauss_legendre_nodes(int order);
const std::vector<double>& gauss_legendre_weights(int order);

// Composite Gauss-Legendre on [a, b] with panel doubling until the last
// refinement changes the result by at most max(abs_tol, rel_tol*|I|).
double integrate(const std::function<double(double)>& f, double a, double b,
                 const QuadratureConfig& quad);

// Expected value of a piecewise-linear function of the one-step posterior.
//
// An observation taken with propagated prior q is distributed under the
// mixture q f1 + (1-q) f0 and maps to the posterior
//     u(x) = q f1(x) / (q f1(x) + (1-q) f0(x)).
// Returns E[v(u(X))] where v is the linear interpolant of `values` on `grid`.
//
// For the built-in Gaussian pair the level sets of u are |x| bands, so the
// expectation is a finite sum of Gaussian tail masses per grid cell (exact up
// to rounding).  Generic pairs integrate numerically.
double expected_posterior_value(std::span<const double> values, const PolicyGrid& grid,
                                double q, const DensityPair& pair,
                                const QuadratureConfig& quad);

// Same expectation for several value rows sharing one q; the Gaussian path
// reuses the per-cell tail masses across rows.
std::vector<double> expected_posterior_value_multi(std::span<const std::span<const double>> rows,
                                                   const PolicyGrid& grid, double q,
                                                   const DensityPair& pair,
                                                   const QuadratureConfig& quad);

}  // namespace qcd

#include "qcd/expectation.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace qcd {

namespace {

struct GLRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GLRule build_gauss_legendre(int order) {
  GLRule rule;
  rule.nodes.resize(static_cast<std::size_t>(order));
  rule.weights.resize(static_cast<std::size_t>(order));
  for (int i = 0; i < order; ++i) {
    // Chebyshev initial guess, then Newton on P_n.
    double x = std::cos(3.141592653589793238462643383279 * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= order; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = order * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

const GLRule& cached_rule(int order) {
  static std::mutex mu;
  static std::map<int, GLRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, build_gauss_legendre(order)).first;
  return it->second;
}

double composite_pass(const std::function<double(double)>& f, double a, double b, int panels,
                      const GLRule& rule) {
  double h = (b - a) / panels;
  double total = 0.0, comp = 0.0;
  for (int p = 0; p < panels; ++p) {
    double lo = a + h * p;
    double mid = lo + 0.5 * h;
    double half = 0.5 * h;
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
    }
    double term = acc * half - comp;
    double next = total + term;
    comp = (next - total) - term;
    total = next;
  }
  return total;
}

// Posterior of one observation x taken with propagated prior q, via log
// densities (stable when one density dwarfs the other).
double one_step_posterior(double q, double lf0, double lf1) {
  double t = std::log1p(-q) - std::log(q) + lf0 - lf1;
  if (t >= 0.0) {
    double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

// Exact cell-by-cell expectation for the Gaussian variance-shift pair.
//
// The posterior u(x) is increasing in |x|, so {u_j <= u <= u_{j+1}} is the
// band t_j <= |x| <= t_{j+1} with t solved from the likelihood ratio.  Two
// identities make each cell exact:
//   P(cell)       = q (F1 band mass) + (1-q) (F0 band mass)
//   E[u ; cell]   = q (F1 band mass)
// since (q f1 + (1-q) f0) u = q f1 pointwise.
void gaussian_cell_masses(const PolicyGrid& grid, double q, double sigma2, double shift,
                          std::vector<double>& mass0, std::vector<double>& mass1) {
  int cells = grid.size() - 1;
  mass0.assign(static_cast<std::size_t>(cells), 0.0);
  mass1.assign(static_cast<std::size_t>(cells), 0.0);
  double v0 = sigma2, v1 = sigma2 + shift;
  double d = 0.5 / v0 - 0.5 / v1;
  double log_ratio_at_zero = 0.5 * std::log(v0 / v1);
  double base = std::log1p(-q) - std::log(q);
  double inv_sqrt2_s0 = 1.0 / std::sqrt(2.0 * v0);
  double inv_sqrt2_s1 = 1.0 / std::sqrt(2.0 * v1);

  // Tails P(|X| > t) at the lower boundary of the current cell.
  double tail0_lo = 1.0, tail1_lo = 1.0;
  for (int j = 0; j < cells; ++j) {
    double u_hi = grid.point(j + 1);
    double tail0_hi = 0.0, tail1_hi = 0.0;
    if (u_hi < 1.0) {
      double log_r = std::log(u_hi) - std::log1p(-u_hi) + base;
      double t2 = (log_r - log_ratio_at_zero) / d;
      if (t2 > 0.0) {
        double t = std::sqrt(t2);
        tail0_hi = std::erfc(t * inv_sqrt2_s0);
        tail1_hi = std::erfc(t * inv_sqrt2_s1);
      } else {
        tail0_hi = 1.0;
        tail1_hi = 1.0;
      }
    }
    mass0[static_cast<std::size_t>(j)] = std::max(0.0, tail0_lo - tail0_hi);
    mass1[static_cast<std::size_t>(j)] = std::max(0.0, tail1_lo - tail1_hi);
    tail0_lo = tail0_hi;
    tail1_lo = tail1_hi;
  }
}

double cellwise_expectation(std::span<const double> values, const PolicyGrid& grid, double q,
                            const std::vector<double>& mass0, const std::vector<double>& mass1) {
  int cells = grid.size() - 1;
  double inv_du = static_cast<double>(grid.size() - 1);
  double total = 0.0, comp = 0.0;
  for (int j = 0; j < cells; ++j) {
    auto ju = static_cast<std::size_t>(j);
    double p_cell = q * mass1[ju] + (1.0 - q) * mass0[ju];
    if (p_cell == 0.0 && mass1[ju] == 0.0) continue;
    double slope = (values[ju + 1] - values[ju]) * inv_du;
    double u_mass = q * mass1[ju];  // E[u ; cell]
    double term = values[ju] * p_cell + slope * (u_mass - grid.point(j) * p_cell) - comp;
    double next = total + term;
    comp = (next - total) - term;
    total = next;
  }
  return total;
}

double quadrature_expectation(std::span<const double> values, const PolicyGrid& grid, double q,
                              const DensityPair& pair, const QuadratureConfig& quad) {
  double L = 10.0 * pair.max_std();
  auto integrand = [&](double x) {
    double lf0 = pair.log_f0(x);
    double lf1 = pair.log_f1(x);
    double density = q * std::exp(lf1) + (1.0 - q) * std::exp(lf0);
    if (density <= 0.0) return 0.0;
    double u = one_step_posterior(q, lf0, lf1);
    return density * grid.interpolate(values, u);
  };
  return integrate(integrand, -L, L, quad);
}

}  // namespace

const std::vector<double>& gauss_legendre_nodes(int order) { return cached_rule(order).nodes; }
const std::vector<double>& gauss_legendre_weights(int order) { return cached_rule(order).weights; }

double integrate(const std::function<double(double)>& f, double a, double b,
                 const QuadratureConfig& quad) {
  const GLRule& rule = cached_rule(quad.panel_order);
  int panels = 2;
  double prev = composite_pass(f, a, b, panels, rule);
  double diff = std::abs(prev);
  while (panels * 2 <= quad.max_panels) {
    panels *= 2;
    double cur = composite_pass(f, a, b, panels, rule);
    diff = std::abs(cur - prev);
    if (diff <= std::max(quad.abs_tol, quad.rel_tol * std::abs(cur))) return cur;
    prev = cur;
  }
  throw ConvergenceError("quadrature did not reach tolerance", diff);
}

double expected_posterior_value(std::span<const double> values, const PolicyGrid& grid, double q,
                                const DensityPair& pair, const QuadratureConfig& quad) {
  if (q <= 0.0) return values.front();
  if (q >= 1.0) return values.back();
  if (pair.is_gaussian()) {
    if (pair.shift() == 0.0) return grid.interpolate(values, q);  // uninformative
    std::vector<double> mass0, mass1;
    gaussian_cell_masses(grid, q, pair.sigma2(), pair.shift(), mass0, mass1);
    return cellwise_expectation(values, grid, q, mass0, mass1);
  }
  return quadrature_expectation(values, grid, q, pair, quad);
}

std::vector<double> expected_posterior_value_multi(std::span<const std::span<const double>> rows,
                                                   const PolicyGrid& grid, double q,
                                                   const DensityPair& pair,
                                                   const QuadratureConfig& quad) {
  std::vector<double> out;
  out.reserve(rows.size());
  if (q <= 0.0 || q >= 1.0 || (pair.is_gaussian() && pair.shift() == 0.0)) {
    for (const auto& row : rows) out.push_back(expected_posterior_value(row, grid, q, pair, quad));
    return out;
  }
  if (pair.is_gaussian()) {
    std::vector<double> mass0, mass1;
    gaussian_cell_masses(grid, q, pair.sigma2(), pair.shift(), mass0, mass1);
    for (const auto& row : rows) out.push_back(cellwise_expectation(row, grid, q, mass0, mass1));
    return out;
  }
  for (const auto& row : rows) out.push_back(quadrature_expectation(row, grid, q, pair, quad));
  return out;
}

}  // namespace qcd

#pragma once

// Sup-norm interpolation between the L^2 norm and a Hoelder seminorm for
// piecewise-linear samples g on a grid over [0, T].

#include "mrl/core.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mrl {

// Exact L^2 norm squared of the piecewise-linear interpolant.
inline double l2_squared(const std::vector<double>& grid, const std::vector<double>& g) {
  double s = 0.0;
  for (size_t k = 0; k + 1 < g.size(); ++k)
    s += (grid[k + 1] - grid[k]) / 3.0 * (g[k] * g[k] + g[k] * g[k + 1] + g[k + 1] * g[k + 1]);
  return s;
}

// max over node pairs of |g_t - g_s| / |t - s|^gamma.
inline double holder_seminorm(const std::vector<double>& grid, const std::vector<double>& g, double gamma) {
  double h = 0.0;
  const size_t n = g.size();
  for (size_t s = 0; s < n; ++s)
    for (size_t t = s + 1; t < n; ++t) h = std::max(h, std::abs(g[t] - g[s]) / std::pow(grid[t] - grid[s], gamma));
  return h;
}

struct InterpolationResult {
  bool applicable = false;  // ||g||_{L^2}^2 < 1
  double sup = 0.0, l2sq = 0.0, holder = 0.0;
  double lhs = 0.0, rhs = 0.0;
  bool pass = false;
  // The same quantities for 2 |g|_gamma^{2 gamma/(2 gamma+1)} (|g|_{L^2}^2)^{1/(2 gamma+1)} + 2 |g|_{L^2}^2.
  double printed_rhs = 0.0;
  bool printed_pass = false;
};

// Checks ||g||_inf <= 2 max(T^{-1/2} ||g||_2, ||g||_2^{2 gamma/(2 gamma+1)} |g|_gamma^{1/(2 gamma+1)}).
inline InterpolationResult interpolation_check(const std::vector<double>& grid, const std::vector<double>& g, double gamma) {
  require(grid.size() == g.size() && g.size() >= 2, "interpolation_check: grid and samples must match");
  require(gamma > 0 && gamma <= 1, "interpolation_check: gamma must lie in (0, 1]");
  InterpolationResult r;
  for (double v : g) r.sup = std::max(r.sup, std::abs(v));
  r.l2sq = l2_squared(grid, g);
  r.applicable = r.l2sq < 1.0;
  r.holder = holder_seminorm(grid, g, gamma);
  const double T = grid.back() - grid.front(), l2 = std::sqrt(r.l2sq);
  r.lhs = r.sup;
  r.rhs = 2.0 * std::max(l2 / std::sqrt(T), std::pow(l2, 2 * gamma / (2 * gamma + 1)) * std::pow(r.holder, 1 / (2 * gamma + 1)));
  r.pass = r.lhs <= r.rhs * (1 + 1e-12);
  r.printed_rhs = 2.0 * std::pow(r.holder, 2 * gamma / (2 * gamma + 1)) * std::pow(r.l2sq, 1 / (2 * gamma + 1)) + 2.0 * r.l2sq;
  r.printed_pass = r.lhs <= r.printed_rhs * (1 + 1e-12);
  return r;
}

}  // namespace mrl

#pragma once

// Deterministic Norris-type diagnostic: for Z = int Y dX + int b dt, compare the
// sup norms of (Y, b) with the sup norm of Z along a scaling family.

#include "mrl/estimators/roughness.hpp"
#include "mrl/rough_path.hpp"

#include <cmath>
#include <vector>

namespace mrl {

// Hoelder seminorm of a sampled R^width-valued path over dyadic (or all) grid pairs.
inline double sampled_holder(const std::vector<double>& grid, const std::vector<double>& values, int width, double alpha,
                             bool exact = false) {
  const int M = static_cast<int>(grid.size()) - 1;
  double h = 0.0;
  for (const auto& [s, t] : holder_pairs(M, exact)) {
    double e2 = 0.0;
    for (int a = 0; a < width; ++a) {
      const double e = values[static_cast<size_t>(t) * width + a] - values[static_cast<size_t>(s) * width + a];
      e2 += e * e;
    }
    h = std::max(h, std::sqrt(e2) / std::pow(grid[t] - grid[s], alpha));
  }
  return h;
}

inline double sampled_sup(const std::vector<double>& values, int width) {
  double s = 0.0;
  for (size_t k = 0; k < values.size() / width; ++k) {
    double e2 = 0.0;
    for (int a = 0; a < width; ++a) e2 += values[k * width + a] * values[k * width + a];
    s = std::max(s, std::sqrt(e2));
  }
  return s;
}

// Z_t = int_0^t Y dX + int_0^t b ds (left-point rule for the drift); Y has values in L(R^d, R^m), b in R^m.
inline std::vector<double> norris_compose(const RoughPath& rp, const ControlledPath& Y, const std::vector<double>& b, int m) {
  require(b.size() == rp.grid.size() * m, "norris: drift path has the wrong shape");
  const auto I = rough_integral(Y, rp, m);
  std::vector<double> Z = I.Y;
  double acc[kMaxDim * kMaxDim] = {};
  require(m <= kMaxDim * kMaxDim, "norris: output dimension too large");
  for (int k = 1; k <= rp.M(); ++k)
    for (int a = 0; a < m; ++a) {
      acc[a] += b[static_cast<size_t>(k - 1) * m + a] * (rp.grid[k] - rp.grid[k - 1]);
      Z[static_cast<size_t>(k) * m + a] += acc[a];
    }
  return Z;
}

struct NorrisReport {
  double A_value = 0.0;
  double L_lower = 0.0, rho_alpha = 0.0;
  double holder_Y = 0.0, holder_Yp = 0.0, holder_b = 0.0;
  double sup_Y = 0.0, sup_b = 0.0, sup_Z = 0.0;
  bool counterexample_candidate = false;
};

inline SamplePath first_level(const RoughPath& rp) {
  SamplePath p = make_path(rp.grid, rp.dim);
  p.values = rp.X;
  return p;
}

inline NorrisReport norris_diagnostic(const RoughPath& rp, const ControlledPath& Y, const std::vector<double>& b,
                                      const std::vector<double>& Z, int m, double theta, double alpha) {
  int n_max = 0;
  while ((2 << n_max) <= rp.M() && n_max < 8) ++n_max;
  NorrisReport r;
  r.L_lower = roughness_modulus(first_level(rp), theta, n_max).L_lower;
  r.rho_alpha = holder_norms(rp, alpha).rho_alpha;
  r.holder_Y = sampled_holder(Y.grid, Y.Y, Y.m, alpha);
  r.holder_Yp = sampled_holder(Y.grid, Y.Yp, Y.m * Y.d, alpha);
  r.holder_b = sampled_holder(rp.grid, b, m, alpha);
  r.sup_Y = sampled_sup(Y.Y, Y.m);
  r.sup_b = sampled_sup(b, m);
  r.sup_Z = sampled_sup(Z, m);
  r.A_value = 1.0 + 1.0 / r.L_lower + r.rho_alpha + r.holder_Y + r.holder_Yp + r.holder_b;
  r.counterexample_candidate = r.sup_Z == 0.0 && r.sup_Y + r.sup_b > 0.0;
  return r;
}

struct NorrisScaling {
  std::vector<double> eps, lhs, sup_Z;
  double fitted_l = std::numeric_limits<double>::quiet_NaN();
  bool monotone = false;
};

// Family (eps Y, eps b): fits l in log(|Y|_inf + |b|_inf) ~ l log |Z|_inf and checks that both
// sides shrink together.
inline NorrisScaling norris_scaling_fit(const RoughPath& rp, const ControlledPath& Y, const std::vector<double>& b, int m,
                                        const std::vector<double>& eps) {
  NorrisScaling out;
  out.eps = sorted_decreasing(eps);
  std::vector<double> lx, ly;
  for (double e : out.eps) {
    ControlledPath Ye = Y;
    for (auto& v : Ye.Y) v *= e;
    for (auto& v : Ye.Yp) v *= e;
    std::vector<double> be = b;
    for (auto& v : be) v *= e;
    const auto Z = norris_compose(rp, Ye, be, m);
    out.lhs.push_back(sampled_sup(Ye.Y, Ye.m) + sampled_sup(be, m));
    out.sup_Z.push_back(sampled_sup(Z, m));
    if (out.lhs.back() > 0 && out.sup_Z.back() > 0) {
      lx.push_back(std::log(out.sup_Z.back()));
      ly.push_back(std::log(out.lhs.back()));
    }
  }
  out.fitted_l = least_squares_slope(lx, ly);
  out.monotone = true;
  for (size_t i = 1; i < out.eps.size(); ++i)
    out.monotone = out.monotone && out.lhs[i] < out.lhs[i - 1] && out.sup_Z[i] < out.sup_Z[i - 1];
  return out;
}

}  // namespace mrl

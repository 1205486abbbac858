#pragma once

// Level-2 geometric rough paths on a uniform grid, controlled paths and
// compensated Riemann sums.

#include "mrl/core.hpp"
#include "mrl/path_sim.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace mrl {

// X_{0,t_k} and XX0[k] = XX_{0,t_k}; the second level between two grid points is
// XX_{s,t} = XX0[t] - XX0[s] - X_{0,s} (x) X_{s,t}, which satisfies Chen's relation by construction.
struct RoughPath {
  std::vector<double> grid;
  int dim = 0;
  std::vector<double> X;    // (M+1) x dim, absolute values
  std::vector<double> XX0;  // (M+1) x dim x dim, entry (i,j) = int X^i_{0,u} o dX^j_u
  double alpha = 0.4;

  int M() const { return static_cast<int>(grid.size()) - 1; }
  double x(int k, int i) const { return X[static_cast<size_t>(k) * dim + i]; }
  double inc(int s, int t, int i) const { return x(t, i) - x(s, i); }
  double xx0(int k, int i, int j) const { return XX0[(static_cast<size_t>(k) * dim + i) * dim + j]; }
  double area(int s, int t, int i, int j) const {
    return xx0(t, i, j) - xx0(s, i, j) - (x(s, i) - x(0, i)) * inc(s, t, j);
  }

  Eigen::VectorXd increment(int s, int t) const {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = inc(s, t, i);
    return v;
  }
  Eigen::MatrixXd second(int s, int t) const {
    Eigen::MatrixXd m(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) m(i, j) = area(s, t, i, j);
    return m;
  }
};

inline void require_uniform(const std::vector<double>& g, const char* who) {
  require(g.size() >= 2, std::string(who) + ": grid needs at least one step");
  const double h = (g.back() - g.front()) / static_cast<double>(g.size() - 1);
  require(h > 0, std::string(who) + ": grid must be increasing");
  for (size_t k = 1; k < g.size(); ++k)
    require(std::abs(g[k] - g[k - 1] - h) <= 1e-9 * h, std::string(who) + ": grid is not uniform");
}

// Midpoint (Stratonovich) iterated sums over the fine grid, recorded every base_stride steps.
inline RoughPath midpoint_lift(const SamplePath& path, int base_stride, double alpha = 0.4) {
  require_uniform(path.grid, "midpoint_lift");
  require(base_stride >= 1 && path.N() % base_stride == 0, "midpoint_lift: stride must divide N");
  const int d = path.d, N = path.N(), M = N / base_stride;
  RoughPath rp;
  rp.dim = d;
  rp.alpha = alpha;
  rp.grid.resize(M + 1);
  rp.X.resize(static_cast<size_t>(M + 1) * d);
  rp.XX0.assign(static_cast<size_t>(M + 1) * d * d, 0.0);
  std::vector<double> rel(d, 0.0), acc(static_cast<size_t>(d) * d, 0.0), dx(d);
  for (int k = 0; k <= N; ++k) {
    if (k > 0) {
      for (int i = 0; i < d; ++i) dx[i] = path(k, i) - path(k - 1, i);
      for (int i = 0; i < d; ++i) {
        const double mid = rel[i] + 0.5 * dx[i];
        for (int j = 0; j < d; ++j) acc[static_cast<size_t>(i) * d + j] += mid * dx[j];
      }
      for (int i = 0; i < d; ++i) rel[i] = path(k, i) - path(0, i);
    }
    if (k % base_stride == 0) {
      const int c = k / base_stride;
      rp.grid[c] = path.grid[k];
      for (int i = 0; i < d; ++i) rp.X[static_cast<size_t>(c) * d + i] = path(k, i);
      std::copy(acc.begin(), acc.end(), rp.XX0.begin() + static_cast<std::ptrdiff_t>(c) * d * d);
    }
  }
  return rp;
}

// Uniformly random ordered triples s <= u <= t of grid indices.
inline std::vector<std::array<int, 3>> random_triples(int M, int count, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> pick(0, M);
  std::vector<std::array<int, 3>> out(count);
  for (auto& tr : out) {
    tr = {pick(gen), pick(gen), pick(gen)};
    std::sort(tr.begin(), tr.end());
  }
  return out;
}

inline double chen_defect(const RoughPath& rp, const std::vector<std::array<int, 3>>& triples) {
  double worst = 0.0;
  for (const auto& [s, u, t] : triples) {
    double e2 = 0.0;
    for (int i = 0; i < rp.dim; ++i)
      for (int j = 0; j < rp.dim; ++j) {
        const double e = rp.area(s, t, i, j) - rp.area(s, u, i, j) - rp.area(u, t, i, j) -
                         rp.inc(s, u, i) * rp.inc(u, t, j);
        e2 += e * e;
      }
    worst = std::max(worst, std::sqrt(e2));
  }
  return worst;
}

// max ||Sym XX_{s,t} - X_{s,t} (x) X_{s,t} / 2|| over the given pairs.
inline double symmetry_defect(const RoughPath& rp, const std::vector<std::array<int, 2>>& pairs) {
  double worst = 0.0;
  for (const auto& [s, t] : pairs) {
    double e2 = 0.0;
    for (int i = 0; i < rp.dim; ++i)
      for (int j = 0; j < rp.dim; ++j) {
        const double e = 0.5 * (rp.area(s, t, i, j) + rp.area(s, t, j, i)) - 0.5 * rp.inc(s, t, i) * rp.inc(s, t, j);
        e2 += e * e;
      }
    worst = std::max(worst, std::sqrt(e2));
  }
  return worst;
}

// Scale used for relative lift defects: the largest first- and second-level magnitudes on the grid.
inline double lift_scale(const RoughPath& rp) {
  double s = 1e-300;
  for (int k = 0; k <= rp.M(); ++k) {
    double a = 0, b = 0;
    for (int i = 0; i < rp.dim; ++i) {
      a += rp.inc(0, k, i) * rp.inc(0, k, i);
      for (int j = 0; j < rp.dim; ++j) b += rp.xx0(k, i, j) * rp.xx0(k, i, j);
    }
    s = std::max({s, a, std::sqrt(b)});
  }
  return s;
}

// Grid pairs scanned by the Hoelder diagnostics: all pairs, or the dyadic intervals only.
inline std::vector<std::array<int, 2>> holder_pairs(int M, bool exact) {
  std::vector<std::array<int, 2>> out;
  if (exact || !is_power_of_two(M)) {
    out.reserve(static_cast<size_t>(M) * (M + 1) / 2);
    for (int s = 0; s < M; ++s)
      for (int t = s + 1; t <= M; ++t) out.push_back({s, t});
  } else {
    for (int len = M; len >= 1; len /= 2)
      for (int s = 0; s < M; s += len) out.push_back({s, s + len});
  }
  return out;
}

struct HolderReport {
  double alpha = 0.0;
  double norm_X_alpha = 0.0;
  double norm_XX_2alpha = 0.0;
  double rho_alpha = 0.0;
};

inline HolderReport holder_norms(const RoughPath& rp, double alpha, bool exact = false) {
  require(alpha > 0 && alpha <= 0.5, "holder_norms: alpha must lie in (0, 1/2]");
  HolderReport r;
  r.alpha = alpha;
  for (const auto& [s, t] : holder_pairs(rp.M(), exact)) {
    const double h = rp.grid[t] - rp.grid[s];
    double a = 0, b = 0;
    for (int i = 0; i < rp.dim; ++i) {
      a += rp.inc(s, t, i) * rp.inc(s, t, i);
      for (int j = 0; j < rp.dim; ++j) b += rp.area(s, t, i, j) * rp.area(s, t, i, j);
    }
    r.norm_X_alpha = std::max(r.norm_X_alpha, std::sqrt(a) / std::pow(h, alpha));
    r.norm_XX_2alpha = std::max(r.norm_XX_2alpha, std::sqrt(b) / std::pow(h, 2 * alpha));
  }
  r.rho_alpha = r.norm_X_alpha + r.norm_XX_2alpha;
  return r;
}

// Path Y with values in R^m controlled by a d-dimensional rough path, Y_{s,t} = Y'_s X_{s,t} + R_{s,t}.
struct ControlledPath {
  std::vector<double> grid;
  int m = 0;
  int d = 0;
  std::vector<double> Y;   // (M+1) x m
  std::vector<double> Yp;  // (M+1) x m x d
  double remainder_norm_2a = 0.0;
  // For outputs of rough_integral: max |int_s^t - Y_s X_st - Y'_s XX_st| / |t-s|^{3 alpha}.
  double integral_remainder_3a = std::numeric_limits<double>::quiet_NaN();

  int M() const { return static_cast<int>(grid.size()) - 1; }
  double y(int k, int a) const { return Y[static_cast<size_t>(k) * m + a]; }
  double yp(int k, int a, int i) const { return Yp[(static_cast<size_t>(k) * m + a) * d + i]; }
  Eigen::VectorXd value(int k) const { return Eigen::Map<const Eigen::VectorXd>(Y.data() + static_cast<size_t>(k) * m, m); }
};

inline ControlledPath make_controlled(const std::vector<double>& grid, int m, int d) {
  ControlledPath c;
  c.grid = grid;
  c.m = m;
  c.d = d;
  c.Y.assign(grid.size() * m, 0.0);
  c.Yp.assign(grid.size() * m * d, 0.0);
  return c;
}

inline double remainder_norm(const ControlledPath& c, const RoughPath& rp, double alpha, bool exact = false) {
  double worst = 0.0;
  for (const auto& [s, t] : holder_pairs(c.M(), exact)) {
    double e2 = 0.0;
    for (int a = 0; a < c.m; ++a) {
      double r = c.y(t, a) - c.y(s, a);
      for (int i = 0; i < c.d; ++i) r -= c.yp(s, a, i) * rp.inc(s, t, i);
      e2 += r * r;
    }
    worst = std::max(worst, std::sqrt(e2) / std::pow(rp.grid[t] - rp.grid[s], 2 * alpha));
  }
  return worst;
}

inline void require_same_grid(const std::vector<double>& a, const std::vector<double>& b, const char* who) {
  require(a.size() == b.size(), std::string(who) + ": grid size mismatch");
  for (size_t k = 0; k < a.size(); ++k)
    require(std::abs(a[k] - b[k]) <= 1e-12, std::string(who) + ": grid mismatch");
}

// int Y dX for Y with values in L(R^d, R^m), stored as m*d components (row a, column i at a*d+i),
// with Gubinelli derivative Y'[(a*d+i)*d + j].
inline ControlledPath rough_integral(const ControlledPath& Y, const RoughPath& rp, int m) {
  require_same_grid(Y.grid, rp.grid, "rough_integral");
  require(Y.d == rp.dim && Y.m == m * rp.dim, "rough_integral: integrand shape must be m x d");
  const int d = rp.dim, M = rp.M();
  ControlledPath Z = make_controlled(rp.grid, m, d);
  std::vector<double> z(m, 0.0);
  auto local = [&](int s, int t, int a) {
    double v = 0.0;
    for (int i = 0; i < d; ++i) {
      v += Y.y(s, a * d + i) * rp.inc(s, t, i);
      for (int j = 0; j < d; ++j) v += Y.yp(s, a * d + i, j) * rp.area(s, t, j, i);
    }
    return v;
  };
  for (int k = 0; k <= M; ++k) {
    if (k > 0)
      for (int a = 0; a < m; ++a) z[a] += local(k - 1, k, a);
    for (int a = 0; a < m; ++a) {
      Z.Y[static_cast<size_t>(k) * m + a] = z[a];
      for (int i = 0; i < d; ++i) Z.Yp[(static_cast<size_t>(k) * m + a) * d + i] = Y.y(k, a * d + i);
    }
  }
  Z.remainder_norm_2a = remainder_norm(Z, rp, rp.alpha);
  double worst = 0.0;
  for (const auto& [s, t] : holder_pairs(M, false)) {
    double e2 = 0.0;
    for (int a = 0; a < m; ++a) {
      const double r = Z.y(t, a) - Z.y(s, a) - local(s, t, a);
      e2 += r * r;
    }
    worst = std::max(worst, std::sqrt(e2) / std::pow(rp.grid[t] - rp.grid[s], 3 * rp.alpha));
  }
  Z.integral_remainder_3a = worst;
  return Z;
}

}  // namespace mrl

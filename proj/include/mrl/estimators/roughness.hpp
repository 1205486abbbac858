#pragma once

// Directional widths inf_{|v|=1} sup_k |v.p_k| of increment clouds, the dyadic
// theta-roughness modulus built from them, and small-ball probability estimates.

#include "mrl/estimators/tail.hpp"
#include "mrl/model.hpp"
#include "mrl/path_sim.hpp"
#include "mrl/sphere.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace mrl {

namespace detail {

inline double cross2(const std::array<double, 2>& o, const std::array<double, 2>& a, const std::array<double, 2>& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

// Inradius of the symmetric hull conv{+-p_k}: the distance from the origin to the nearest edge.
inline double planar_width(const double* pts, int count) {
  std::vector<std::array<double, 2>> P;
  P.reserve(2 * count);
  for (int k = 0; k < count; ++k) {
    P.push_back({pts[2 * k], pts[2 * k + 1]});
    P.push_back({-pts[2 * k], -pts[2 * k + 1]});
  }
  std::sort(P.begin(), P.end());
  P.erase(std::unique(P.begin(), P.end()), P.end());
  if (P.size() < 3) return 0.0;
  std::vector<std::array<double, 2>> H(2 * P.size());
  size_t h = 0;
  for (size_t i = 0; i < P.size(); ++i) {
    while (h >= 2 && cross2(H[h - 2], H[h - 1], P[i]) <= 0) --h;
    H[h++] = P[i];
  }
  for (size_t i = P.size() - 1, lo = h + 1; i-- > 0;) {
    while (h >= lo && cross2(H[h - 2], H[h - 1], P[i]) <= 0) --h;
    H[h++] = P[i];
  }
  H.resize(h - 1);
  if (H.size() < 3) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < H.size(); ++i) {
    const auto& a = H[i];
    const auto& b = H[(i + 1) % H.size()];
    const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
    if (len == 0.0) continue;
    best = std::min(best, std::abs(a[0] * b[1] - a[1] * b[0]) / len);
  }
  return std::isfinite(best) ? best : 0.0;
}

inline double support(const double* pts, int count, int d, const Vec& v) {
  double s = 0.0;
  for (int k = 0; k < count; ++k) {
    double p = 0.0;
    for (int i = 0; i < d; ++i) p += v(i) * pts[k * d + i];
    s = std::max(s, std::abs(p));
  }
  return s;
}

// Candidate normals through d of the signed points that are most active at v. The minimum of the
// support function over the sphere sits at a facet normal of conv{+-p_k}, so repeating this from the
// best mesh directions until nothing improves lands on that facet in practice.
inline bool active_set_step(const double* pts, int count, int d, Vec& best, double& fbest) {
  static constexpr int pool_size[kMaxDim + 1] = {0, 0, 0, 14, 10, 8, 8};
  const int K = std::min(count, pool_size[d]);
  if (K < d) return false;
  std::vector<std::pair<double, int>> score(count);
  for (int k = 0; k < count; ++k) {
    double p = 0.0;
    for (int i = 0; i < d; ++i) p += best(i) * pts[k * d + i];
    score[k] = {-std::abs(p), k};
  }
  std::partial_sort(score.begin(), score.begin() + K, score.end());
  std::vector<int> pick(d);
  for (int i = 0; i < d; ++i) pick[i] = i;
  bool improved = false;
  Mat A(d, d);
  const Vec ones = Vec::Ones(d);
  while (true) {
    for (int signs = 0; signs < (1 << (d - 1)); ++signs) {
      for (int r = 0; r < d; ++r) {
        const double sg = (r > 0 && (signs >> (r - 1)) & 1) ? -1.0 : 1.0;
        for (int i = 0; i < d; ++i) A(r, i) = sg * pts[score[pick[r]].second * d + i];
      }
      Eigen::FullPivLU<Mat> lu(A);
      if (!lu.isInvertible()) continue;
      Vec n = lu.solve(ones);
      const double len = n.norm();
      if (!(len > 0) || 1.0 / len >= fbest) continue;
      n /= len;
      const double f = support(pts, count, d, n);
      if (f < fbest) {
        fbest = f;
        best = n;
        improved = true;
      }
    }
    int r = d - 1;
    while (r >= 0 && pick[r] == K - d + r) --r;
    if (r < 0) break;
    ++pick[r];
    for (int i = r + 1; i < d; ++i) pick[i] = pick[i - 1] + 1;
  }
  return improved;
}

inline double mesh_width(const double* pts, int count, int d, const std::vector<Vec>& mesh) {
  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(mesh.size());
  for (size_t m = 0; m < mesh.size(); ++m) ranked.push_back({support(pts, count, d, mesh[m]), static_cast<int>(m)});
  const int starts = std::min<int>(3, static_cast<int>(ranked.size()));
  std::partial_sort(ranked.begin(), ranked.begin() + starts, ranked.end());
  double fbest = ranked.front().first;
  for (int s = 0; s < starts; ++s) {
    Vec v = mesh[ranked[s].second];
    double f = ranked[s].first;
    for (int it = 0; it < 20 && active_set_step(pts, count, d, v, f); ++it) {
    }
    fbest = std::min(fbest, f);
  }
  return fbest;
}

}  // namespace detail

// inf over unit v of max_k |v.p_k| for count points in R^d stored row-major: exact for d <= 2,
// mesh plus active-set refinement above.
inline double directional_width(const double* pts, int count, int d, const std::vector<Vec>& mesh) {
  if (count == 0) return 0.0;
  if (d == 1) {
    double s = 0.0;
    for (int k = 0; k < count; ++k) s = std::max(s, std::abs(pts[k]));
    return s;
  }
  if (d == 2) return detail::planar_width(pts, count);
  return detail::mesh_width(pts, count, d, mesh);
}

// Width of the increments X_t - X_s, t in [s, e] (grid indices).
inline double window_width(const SamplePath& p, int s, int e, const std::vector<Vec>& mesh,
                           std::vector<double>& scratch) {
  const int d = p.d, n = e - s;
  scratch.resize(static_cast<size_t>(n) * d);
  for (int k = 1; k <= n; ++k)
    for (int i = 0; i < d; ++i) scratch[static_cast<size_t>(k - 1) * d + i] = p(s + k, i) - p(s, i);
  return directional_width(scratch.data(), n, d, mesh);
}

struct RoughnessReport {
  double theta = 0.0;
  int n_max = 0;
  double D_hat = 0.0;
  double L_lower = 0.0;
  std::vector<double> level_minima;  // min over l at each level n = 0..n_max
};

inline RoughnessReport roughness_modulus(const SamplePath& path, double theta, int n_max, int sphere_mesh_size = 64) {
  require(theta > 0.5 && theta < 1.0, "roughness_modulus: theta must lie in (1/2, 1)");
  require(n_max >= 0 && n_max < 30 && (1L << n_max) <= path.N(), "roughness_modulus: n_max too deep for the grid");
  require(path.N() % (1 << n_max) == 0, "roughness_modulus: 2^n_max must divide N");
  require(std::abs(path.grid.front()) < 1e-12 && std::abs(path.grid.back() - 1.0) < 1e-12,
          "roughness_modulus: path must live on [0, 1]");
  const auto mesh = sphere_mesh(path.d, sphere_mesh_size);
  RoughnessReport r;
  r.theta = theta;
  r.n_max = n_max;
  r.D_hat = std::numeric_limits<double>::infinity();
  std::vector<double> scratch;
  for (int n = 0; n <= n_max; ++n) {
    const int cells = 1 << n, len = path.N() / cells;
    const double scale = std::pow(2.0, n * theta);
    double level = std::numeric_limits<double>::infinity();
    for (int l = 0; l < cells; ++l) level = std::min(level, window_width(path, l * len, (l + 1) * len, mesh, scratch) * scale);
    r.level_minima.push_back(level);
    r.D_hat = std::min(r.D_hat, level);
  }
  r.L_lower = r.D_hat / (2.0 * std::pow(8.0, theta));
  return r;
}

// Probability that a Brownian bridge with variance rate sigma2 from x to y over time dt stays in
// (lo, lo + w); x and y are assumed inside. Image series truncated at |n| <= 3.
inline double bridge_stay_probability(double x, double y, double lo, double w, double sigma2dt) {
  if (sigma2dt <= 0) return 1.0;
  if ((x - lo) * (y - lo) > 20 * sigma2dt && (lo + w - x) * (lo + w - y) > 20 * sigma2dt && w * w > 20 * sigma2dt)
    return 1.0;
  double s = 0.0;
  for (int n = -3; n <= 3; ++n) {
    s += std::exp((2.0 * n * w * (y - x) - 2.0 * n * n * w * w) / sigma2dt);
    s -= std::exp(-2.0 * (x - lo - n * w) * (y - lo - n * w) / sigma2dt);
  }
  return std::clamp(s, 0.0, 1.0);
}

struct SmallballConfig {
  double s = 0.0, delta = 1.0;
  std::vector<double> eps_grid;
  long n_paths = 1000;
  int N = 1 << 9;
  int sphere_mesh = 64;
  double k = 0.5;  // exponent family exp(-C' delta / eps^(2-2k))
  std::uint64_t seed = 1;
  bool bridge = true;  // continuous-monitoring correction, d = 1 only
};

struct SmallballReport {
  TailReport raw;                           // grid-monitored P(Q <= eps)
  std::vector<double> corrected, corrected_se;  // bridge-corrected estimate, same eps order as raw
  double fitted_exponent = std::numeric_limits<double>::quiet_NaN();
};

// Per-path quantity inf_v sup_{t in window} |v.X_{s,t}| and, for d = 1, the conditional
// probability of continuous confinement for each eps given the grid values.
inline double smallball_path(const DiffusionSpec& spec, const SamplePath& X, int s, int e, const std::vector<Vec>& mesh,
                             const std::vector<double>& eps, bool bridge, std::vector<double>& stay,
                             std::vector<double>& scratch) {
  const double q = window_width(X, s, e, mesh, scratch);
  stay.assign(eps.size(), 0.0);
  if (!(bridge && spec.d == 1)) return q;
  for (size_t j = 0; j < eps.size(); ++j) {
    if (q > eps[j]) continue;
    double p = 1.0;
    for (int k = s; k < e && p > 0; ++k) {
      const double a = spec.is_constant() ? (*spec.constant_sqrt)(0, 0) : sqrt_at(spec, X.at(k))(0, 0);
      p *= bridge_stay_probability(X(k, 0) - X(s, 0), X(k + 1, 0) - X(s, 0), -eps[j], 2 * eps[j],
                                   a * a * (X.grid[k + 1] - X.grid[k]));
    }
    stay[j] = p;
  }
  return q;
}

inline SmallballReport smallball_estimate(const DiffusionSpec& spec, const Vec& x0, const SmallballConfig& c) {
  require(c.s >= 0 && c.delta > 0 && c.s + c.delta <= 1.0 + 1e-12, "smallball: window must lie in [0, 1]");
  require(c.n_paths >= 1, "smallball: n_paths must be positive");
  require(c.k > 0 && c.k < 1, "smallball: k must lie in (0, 1)");
  const int s = static_cast<int>(std::llround(c.s * c.N)), e = static_cast<int>(std::llround((c.s + c.delta) * c.N));
  require(std::abs(s - c.s * c.N) < 1e-9 && std::abs(e - (c.s + c.delta) * c.N) < 1e-9,
          "smallball: window must fall on the grid");
  const auto eps = sorted_decreasing(c.eps_grid);
  const auto mesh = sphere_mesh(spec.d, c.sphere_mesh);
  std::vector<double> q(c.n_paths), sum(eps.size(), 0.0), sum2(eps.size(), 0.0), stay, scratch;
  for (long p = 0; p < c.n_paths; ++p) {
    const auto X = simulate_X(spec, make_driver(c.seed, p, c.N, spec.d), x0);
    q[p] = smallball_path(spec, X, s, e, mesh, eps, c.bridge, stay, scratch);
    for (size_t j = 0; j < eps.size(); ++j) {
      sum[j] += stay[j];
      sum2[j] += stay[j] * stay[j];
    }
  }
  SmallballReport r;
  r.raw = make_tail_report("smallball", q, eps);
  std::vector<double> x, y;
  const bool use_bridge = c.bridge && spec.d == 1;
  for (size_t j = 0; j < eps.size(); ++j) {
    const double n = static_cast<double>(c.n_paths);
    const double m = sum[j] / n;
    r.corrected.push_back(use_bridge ? m : r.raw.probabilities[j]);
    r.corrected_se.push_back(use_bridge ? std::sqrt(std::max(0.0, sum2[j] / n - m * m) / n)
                                        : std::sqrt(r.raw.probabilities[j] * (1 - r.raw.probabilities[j]) / n));
    if (r.corrected[j] > 0 && r.corrected[j] < 1) {
      x.push_back(c.delta / std::pow(eps[j], 2 - 2 * c.k));
      y.push_back(std::log(r.corrected[j]));
    }
  }
  r.fitted_exponent = least_squares_slope(x, y);
  r.raw.fitted_exponent = r.fitted_exponent;
  return r;
}

}  // namespace mrl

#pragma once

// Empirical tail probabilities P(Q <= eps) with Wilson intervals, an isotonic
// (monotone) regularization, and slope fits.

#include "mrl/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace mrl {

struct TailReport {
  std::string quantity_id;
  std::vector<double> epsilons;  // decreasing
  std::vector<long> counts;
  std::vector<double> probabilities;
  std::vector<double> lower, upper;  // Wilson 95%
  std::vector<double> monotone;      // isotonic projection of probabilities
  double fitted_exponent = std::numeric_limits<double>::quiet_NaN();
  long n_paths = 0;
  long excluded = 0;
};

inline std::pair<double, double> wilson_interval(long k, long n, double z = 1.959963984540054) {
  if (n <= 0) return {0.0, 1.0};
  const double p = static_cast<double>(k) / n, z2 = z * z, nn = static_cast<double>(n);
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
  return {k == 0 ? 0.0 : std::max(0.0, centre - half), k == n ? 1.0 : std::min(1.0, centre + half)};
}

// Pool-adjacent-violators: least-squares nondecreasing fit of y with weights w.
inline std::vector<double> isotonic_increasing(const std::vector<double>& y, const std::vector<double>& w) {
  std::vector<double> val, wt;
  std::vector<int> len;
  for (size_t i = 0; i < y.size(); ++i) {
    val.push_back(y[i]);
    wt.push_back(w[i]);
    len.push_back(1);
    while (val.size() > 1 && val[val.size() - 2] > val.back()) {
      const size_t b = val.size() - 1;
      const double ww = wt[b - 1] + wt[b];
      val[b - 1] = (val[b - 1] * wt[b - 1] + val[b] * wt[b]) / ww;
      wt[b - 1] = ww;
      len[b - 1] += len[b];
      val.pop_back();
      wt.pop_back();
      len.pop_back();
    }
  }
  std::vector<double> out;
  for (size_t b = 0; b < val.size(); ++b) out.insert(out.end(), len[b], val[b]);
  return out;
}

// Probabilities along a decreasing eps grid must be nonincreasing.
inline std::vector<double> monotone_tail(const std::vector<double>& probs_decreasing_eps) {
  std::vector<double> rev(probs_decreasing_eps.rbegin(), probs_decreasing_eps.rend());
  auto fit = isotonic_increasing(rev, std::vector<double>(rev.size(), 1.0));
  return {fit.rbegin(), fit.rend()};
}

inline std::vector<double> sorted_decreasing(std::vector<double> eps) {
  std::sort(eps.begin(), eps.end(), std::greater<>());
  return eps;
}

inline void fill_probabilities(TailReport& r) {
  const size_t n = r.epsilons.size();
  r.probabilities.resize(n);
  r.lower.resize(n);
  r.upper.resize(n);
  for (size_t i = 0; i < n; ++i) {
    r.probabilities[i] = r.n_paths > 0 ? static_cast<double>(r.counts[i]) / r.n_paths : 0.0;
    std::tie(r.lower[i], r.upper[i]) = wilson_interval(r.counts[i], r.n_paths);
  }
  r.monotone = monotone_tail(r.probabilities);
}

// Counts of samples with value <= eps for each eps.
inline TailReport make_tail_report(std::string id, const std::vector<double>& samples, std::vector<double> eps_grid,
                                   long excluded = 0) {
  require(!eps_grid.empty(), "tail report: empty eps grid");
  TailReport r;
  r.quantity_id = std::move(id);
  r.epsilons = sorted_decreasing(std::move(eps_grid));
  r.n_paths = static_cast<long>(samples.size());
  r.excluded = excluded;
  std::vector<double> s = samples;
  std::sort(s.begin(), s.end());
  for (double e : r.epsilons)
    r.counts.push_back(static_cast<long>(std::upper_bound(s.begin(), s.end(), e) - s.begin()));
  fill_probabilities(r);
  return r;
}

inline double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

// Log-log slope over the smallest `decades` decades of probability among points with at
// least min_count hits; returns the number of points used through `used`.
inline double loglog_tail_slope(const TailReport& r, long min_count = 30, double decades = 2.0, int* used = nullptr) {
  double p_min = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < r.epsilons.size(); ++i)
    if (r.counts[i] >= min_count && r.epsilons[i] > 0) p_min = std::min(p_min, r.probabilities[i]);
  std::vector<double> x, y;
  for (size_t i = 0; i < r.epsilons.size(); ++i)
    if (r.counts[i] >= min_count && r.epsilons[i] > 0 && r.probabilities[i] <= p_min * std::pow(10.0, decades)) {
      x.push_back(std::log(r.epsilons[i]));
      y.push_back(std::log(r.probabilities[i]));
    }
  if (used) *used = static_cast<int>(x.size());
  return least_squares_slope(x, y);
}

}  // namespace mrl

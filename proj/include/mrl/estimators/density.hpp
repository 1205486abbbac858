#pragma once

// Gaussian-kernel density estimates and Gaussian-envelope fits p(y) <= C1 exp(-C2 |y - y0|^2 / t).

#include "mrl/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

namespace mrl {

class KernelDensity {
 public:
  // samples: n x d row-major. bandwidth <= 0 selects Scott's rule per coordinate.
  KernelDensity(std::vector<double> samples, int d, double bandwidth = 0.0) : d_(d) {
    require(d >= 1, "kde: dimension must be positive");
    require(samples.size() % d == 0, "kde: sample array is not n x d");
    n_ = static_cast<long>(samples.size() / d);
    require(n_ >= 100, "kde: at least 100 samples required");
    h_.assign(d, bandwidth);
    if (bandwidth <= 0) {
      const double factor = std::pow(static_cast<double>(n_), -1.0 / (d + 4));
      for (int i = 0; i < d; ++i) {
        double m = 0, m2 = 0;
        for (long k = 0; k < n_; ++k) m += samples[k * d + i] / n_;
        for (long k = 0; k < n_; ++k) m2 += (samples[k * d + i] - m) * (samples[k * d + i] - m) / (n_ - 1);
        h_[i] = std::sqrt(m2) * factor;
        if (h_[i] <= 0) h_[i] = factor;
      }
    }
    // Sort by the first coordinate so evaluation only scans a window of +-8 bandwidths.
    std::vector<long> order(n_);
    std::iota(order.begin(), order.end(), 0L);
    std::sort(order.begin(), order.end(), [&](long a, long b) { return samples[a * d] < samples[b * d]; });
    x_.resize(samples.size());
    for (long k = 0; k < n_; ++k) std::copy_n(samples.begin() + order[k] * d, d, x_.begin() + k * d);
    first_.resize(n_);
    for (long k = 0; k < n_; ++k) first_[k] = x_[k * d];
    norm_ = 1.0 / n_;
    for (int i = 0; i < d; ++i) norm_ /= h_[i] * std::sqrt(2 * std::numbers::pi);
  }

  double operator()(const double* y) const {
    const double reach = 8.0 * h_[0];
    const long lo = std::lower_bound(first_.begin(), first_.end(), y[0] - reach) - first_.begin();
    const long hi = std::upper_bound(first_.begin(), first_.end(), y[0] + reach) - first_.begin();
    double s = 0.0;
    for (long k = lo; k < hi; ++k) {
      double q = 0.0;
      for (int i = 0; i < d_; ++i) {
        const double z = (y[i] - x_[k * d_ + i]) / h_[i];
        q += z * z;
      }
      if (q < 128.0) s += std::exp(-0.5 * q);
    }
    return s * norm_;
  }
  double operator()(const std::vector<double>& y) const { return (*this)(y.data()); }

  int dim() const { return d_; }
  long size() const { return n_; }
  const std::vector<double>& bandwidth() const { return h_; }

 private:
  int d_;
  long n_ = 0;
  std::vector<double> h_, x_, first_;
  double norm_ = 0.0;
};

// Grid points with spacing `step` inside the ball |y - y0| <= radius.
inline std::vector<std::vector<double>> ball_grid(const std::vector<double>& y0, double radius, double step) {
  const int d = static_cast<int>(y0.size());
  const int per = static_cast<int>(std::floor(radius / step));
  std::vector<std::vector<double>> out;
  std::vector<int> idx(d, -per);
  while (true) {
    std::vector<double> y(d);
    double r2 = 0;
    for (int i = 0; i < d; ++i) {
      y[i] = y0[i] + idx[i] * step;
      r2 += (idx[i] * step) * (idx[i] * step);
    }
    if (r2 <= radius * radius * (1 + 1e-12)) out.push_back(y);
    int p = 0;
    while (p < d && ++idx[p] > per) idx[p++] = -per;
    if (p == d) break;
  }
  return out;
}

struct GaussianBoundFit {
  double C1 = 0.0, C2 = 0.0;
  std::vector<std::vector<double>> violations;
  long n_points = 0;
};

// C2 from the density-weighted least-squares slope of log p against |y-y0|^2/t (clamped at 0),
// then the least C1 with p <= C1 exp(-C2 |y-y0|^2/t) on the grid. A point y != y0 is a violation
// when p(y) >= C1, i.e. no C2 > 0 bounds it under the fitted C1.
inline GaussianBoundFit gaussian_bound_fit(const KernelDensity& kde, const std::vector<double>& y0, double t,
                                           const std::vector<std::vector<double>>& grid) {
  require(t > 0, "gaussian_bound_fit: t must be positive");
  GaussianBoundFit f;
  f.n_points = static_cast<long>(grid.size());
  std::vector<double> p(grid.size()), u(grid.size());
  for (size_t k = 0; k < grid.size(); ++k) {
    p[k] = kde(grid[k]);
    double r2 = 0;
    for (size_t i = 0; i < y0.size(); ++i) r2 += (grid[k][i] - y0[i]) * (grid[k][i] - y0[i]);
    u[k] = r2 / t;
  }
  double sw = 0, mu = 0, ml = 0;
  for (size_t k = 0; k < grid.size(); ++k)
    if (p[k] > 0) {
      sw += p[k];
      mu += p[k] * u[k];
      ml += p[k] * std::log(p[k]);
    }
  if (sw > 0) {
    mu /= sw;
    ml /= sw;
    double sxy = 0, sxx = 0;
    for (size_t k = 0; k < grid.size(); ++k)
      if (p[k] > 0) {
        sxy += p[k] * (u[k] - mu) * (std::log(p[k]) - ml);
        sxx += p[k] * (u[k] - mu) * (u[k] - mu);
      }
    f.C2 = sxx > 0 ? std::max(0.0, -sxy / sxx) : 0.0;
  }
  double logC1 = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < grid.size(); ++k)
    if (p[k] > 0) logC1 = std::max(logC1, std::log(p[k]) + f.C2 * u[k]);
  f.C1 = std::exp(logC1);
  for (size_t k = 0; k < grid.size(); ++k)
    if (u[k] > 0 && p[k] >= f.C1) f.violations.push_back(grid[k]);
  return f;
}

}  // namespace mrl

#pragma once

#include "mrl/core.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace mrl {

// Deterministic direction meshes. Quantities of the form |v.x| are even in v,
// so every mesh covers a half-sphere only.
inline std::vector<Vec> sphere_mesh(int d, int count) {
  require(d >= 1, "sphere_mesh: dimension must be positive");
  require(count >= 1, "sphere_mesh: count must be positive");
  std::vector<Vec> out;
  if (d == 1) {
    Vec v(1);
    v << 1.0;
    out.push_back(v);
    return out;
  }
  if (d == 2) {
    for (int k = 0; k < count; ++k) {
      const double phi = std::numbers::pi * k / count;
      Vec v(2);
      v << std::cos(phi), std::sin(phi);
      out.push_back(v);
    }
    return out;
  }
  if (d == 3) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < count; ++k) {
      const double z = 1.0 - (k + 0.5) / count;  // z in (0,1): upper hemisphere
      const double r = std::sqrt(1.0 - z * z);
      const double phi = golden * k;
      Vec v(3);
      v << r * std::cos(phi), r * std::sin(phi), z;
      out.push_back(v);
    }
    return out;
  }
  // Weyl sequence pushed through Box-Muller, normalized.
  std::vector<double> alpha(d + 1);
  for (int i = 0; i <= d; ++i) alpha[i] = std::fmod(std::sqrt(2.0 + 3.0 * i), 1.0);
  for (int k = 0; k < count; ++k) {
    Vec v(d);
    for (int i = 0; i < d; i += 2) {
      double u1 = std::fmod((k + 1) * alpha[i], 1.0);
      double u2 = std::fmod((k + 1) * alpha[i + 1], 1.0);
      u1 = std::max(u1, 1e-12);
      const double r = std::sqrt(-2.0 * std::log(u1));
      v(i) = r * std::cos(2 * std::numbers::pi * u2);
      if (i + 1 < d) v(i + 1) = r * std::sin(2 * std::numbers::pi * u2);
    }
    const double n = v.norm();
    if (n == 0.0) continue;
    v /= n;
    if (v(d - 1) < 0) v = -v;
    out.push_back(v);
  }
  return out;
}

// Cartesian grid of probe points on [-half_width, half_width]^d.
inline std::vector<Vec> probe_box(int d, double half_width, int per_axis) {
  require(per_axis >= 1, "probe_box: per_axis must be positive");
  std::vector<Vec> out;
  std::vector<int> idx(d, 0);
  while (true) {
    Vec x(d);
    for (int i = 0; i < d; ++i)
      x(i) = per_axis == 1 ? 0.0 : -half_width + 2.0 * half_width * idx[i] / (per_axis - 1);
    out.push_back(x);
    int p = 0;
    while (p < d && ++idx[p] == per_axis) idx[p++] = 0;
    if (p == d) break;
  }
  return out;
}

}  // namespace mrl

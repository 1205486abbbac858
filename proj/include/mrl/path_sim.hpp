#pragma once

#include "mrl/core.hpp"
#include "mrl/model.hpp"
#include "mrl/rng.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace mrl {

struct BrownianDriver {
  std::vector<double> grid;
  int N = 0;
  int d = 0;
  std::vector<double> increments;  // N x d, row-major
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;

  double dt(int k) const { return grid[k + 1] - grid[k]; }
  const double* step(int k) const { return increments.data() + static_cast<size_t>(k) * d; }
};

inline BrownianDriver make_driver(std::uint64_t seed, std::uint64_t path_index, int N, int d) {
  require(N >= 1, "make_driver: N must be at least 1");
  require(d >= 1 && d <= kMaxDim, "make_driver: dimension out of range");
  BrownianDriver b{uniform_grid(N), N, d, std::vector<double>(static_cast<size_t>(N) * d), seed, path_index};
  const CounterRng rng(seed, path_index, Stream::brownian);
  const double sd = std::sqrt(1.0 / N);
  for (int k = 0; k < N; ++k) {
    for (int i = 0; i < d; i += 2) {
      const auto z = rng.normal_pair(static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(i / 2));
      b.increments[static_cast<size_t>(k) * d + i] = sd * z[0];
      if (i + 1 < d) b.increments[static_cast<size_t>(k) * d + i + 1] = sd * z[1];
    }
  }
  return b;
}

// Same Brownian path on a grid `factor` times coarser.
inline BrownianDriver coarsen(const BrownianDriver& b, int factor) {
  require(factor >= 1 && b.N % factor == 0, "coarsen: factor must divide N");
  BrownianDriver c{uniform_grid(b.N / factor), b.N / factor, b.d, {}, b.seed, b.path_index};
  c.increments.assign(static_cast<size_t>(c.N) * c.d, 0.0);
  for (int k = 0; k < b.N; ++k)
    for (int i = 0; i < b.d; ++i) c.increments[static_cast<size_t>(k / factor) * b.d + i] += b.step(k)[i];
  return c;
}

// Cameron-Martin shift W + eps*h with h = 1_[0,u] e_j, i.e. hdot = 1 on [0,u).
inline BrownianDriver perturbed(const BrownianDriver& b, double eps, double u, int j) {
  BrownianDriver p = b;
  for (int k = 0; k < b.N; ++k) {
    const double lo = b.grid[k], hi = b.grid[k + 1];
    const double overlap = std::max(0.0, std::min(hi, u) - lo);
    p.increments[static_cast<size_t>(k) * b.d + j] += eps * overlap;
  }
  return p;
}

struct SamplePath {
  std::vector<double> grid;
  int d = 0;
  std::vector<double> values;  // (N+1) x d, row-major
  bool ellipticity_ok = true;
  double eig_min_seen = 0.0;
  double eig_max_seen = 0.0;

  int N() const { return static_cast<int>(grid.size()) - 1; }
  double operator()(int k, int i) const { return values[static_cast<size_t>(k) * d + i]; }
  Vec at(int k) const {
    Vec v(d);
    for (int i = 0; i < d; ++i) v(i) = (*this)(k, i);
    return v;
  }
};

inline SamplePath make_path(const std::vector<double>& grid, int d) {
  return SamplePath{grid, d, std::vector<double>(grid.size() * d, 0.0)};
}

enum class Scheme { euler, milstein };

inline SamplePath simulate_X(const DiffusionSpec& spec, const BrownianDriver& drv, const Vec& x0,
                             Scheme scheme = Scheme::euler) {
  require(drv.d == spec.d, "simulate_X: driver dimension differs from spec dimension");
  require(x0.size() == spec.d, "simulate_X: initial condition dimension mismatch");
  const int d = spec.d, N = drv.N;
  SamplePath X = make_path(drv.grid, d);
  X.eig_min_seen = std::numeric_limits<double>::infinity();
  X.eig_max_seen = -std::numeric_limits<double>::infinity();
  Vec x = x0;
  for (int i = 0; i < d; ++i) X.values[i] = x(i);
  const bool milstein = scheme == Scheme::milstein && !spec.is_constant();
  for (int k = 0; k < N; ++k) {
    const LocalCoefficients lc = evaluate_local(spec, x, milstein);
    X.eig_min_seen = std::min(X.eig_min_seen, lc.eig_min);
    X.eig_max_seen = std::max(X.eig_max_seen, lc.eig_max);
    const double dt = drv.dt(k);
    const Eigen::Map<const Eigen::VectorXd> dW(drv.step(k), d);
    Vec step = lc.A * dW + lc.B * dt;
    if (milstein) {
      for (int i = 0; i < d; ++i) step += 0.5 * (lc.DAcol[i] * lc.A.col(i)) * (dW(i) * dW(i) - dt);
    }
    x += step;
    if (!x.allFinite()) throw BlowUpError("simulate_X: non-finite state", k + 1);
    for (int i = 0; i < d; ++i) X.values[static_cast<size_t>(k + 1) * d + i] = x(i);
  }
  X.ellipticity_ok = X.eig_min_seen >= spec.lambda * (1 - 1e-8) && X.eig_max_seen <= spec.Lambda * (1 + 1e-8);
  return X;
}

enum class InverseScheme { propagator_inverse, ito_euler };

struct FlowBundle {
  SamplePath X;
  int d = 0;
  std::vector<double> J_fwd;  // (N+1) d x d, row-major blocks
  std::vector<double> J_inv;
  std::vector<double> increments;  // copy of the driver, so step propagators can be rebuilt
  Scheme scheme = Scheme::euler;
  InverseScheme inverse = InverseScheme::propagator_inverse;
  double phi_sup = 0.0;
  double composition_defect = 0.0;
  double composition_tolerance = 0.0;
  bool alarm = false;
  bool inverse_fallback = false;
  bool constant_flow = false;  // DA = DB = 0 everywhere

  int N() const { return X.N(); }
  Mat fwd(int k) const { return load_mat(J_fwd.data() + static_cast<size_t>(k) * d * d, d, d); }
  Mat inv(int k) const { return load_mat(J_inv.data() + static_cast<size_t>(k) * d * d, d, d); }
};

// One step of the linearized Ito equation, J_{k+1} = P_k J_k.
inline Mat flow_propagator(const LocalCoefficients& lc, const double* dW, double dt, Scheme scheme, int d) {
  Mat P = Mat::Identity(d, d) + lc.DB * dt;
  for (int i = 0; i < d; ++i) P += lc.DAcol[i] * dW[i];
  if (scheme == Scheme::milstein)
    for (int i = 0; i < d; ++i) P += 0.5 * lc.DAcol[i] * lc.DAcol[i] * (dW[i] * dW[i] - dt);
  return P;
}

inline Mat flow_propagator(const DiffusionSpec& spec, const Vec& x, const double* dW, double dt, Scheme scheme) {
  return flow_propagator(evaluate_local(spec, x, true), dW, dt, scheme, spec.d);
}

inline FlowBundle simulate_flow(const DiffusionSpec& spec, const BrownianDriver& drv, const SamplePath& X,
                                Scheme scheme = Scheme::euler,
                                InverseScheme inverse = InverseScheme::propagator_inverse) {
  require(X.N() == drv.N && X.d == drv.d, "simulate_flow: path and driver grids differ");
  const int d = spec.d, N = drv.N;
  FlowBundle F;
  F.X = X;
  F.d = d;
  F.scheme = scheme;
  F.inverse = inverse;
  F.increments = drv.increments;
  F.J_fwd.assign(static_cast<size_t>(N + 1) * d * d, 0.0);
  F.J_inv.assign(static_cast<size_t>(N + 1) * d * d, 0.0);
  Mat Jf = Mat::Identity(d, d), Ji = Mat::Identity(d, d);
  store_mat(Jf, F.J_fwd.data());
  store_mat(Ji, F.J_inv.data());
  F.constant_flow = spec.is_constant();
  double scale = 1.0;
  F.phi_sup = std::max({X.at(0).norm(), Jf.norm(), Ji.norm()});
  for (int k = 0; k < N; ++k) {
    if (!F.constant_flow) {
      const LocalCoefficients lc = evaluate_local(spec, X.at(k), true);
      const double dt = drv.dt(k);
      const double* dW = drv.step(k);
      const Mat P = flow_propagator(lc, dW, dt, scheme, d);
      Jf = P * Jf;
      if (inverse == InverseScheme::propagator_inverse) {
        Ji = Ji * P.partialPivLu().inverse();
      } else {
        Mat G = (lc.DB) * dt;
        for (int i = 0; i < d; ++i) G += lc.DAcol[i] * dW[i] - lc.DAcol[i] * lc.DAcol[i] * dt;
        Ji = Ji - Ji * G;
      }
      if (!Jf.allFinite() || !Ji.allFinite()) throw BlowUpError("simulate_flow: non-finite Jacobian", k + 1);
    }
    store_mat(Jf, F.J_fwd.data() + static_cast<size_t>(k + 1) * d * d);
    store_mat(Ji, F.J_inv.data() + static_cast<size_t>(k + 1) * d * d);
    const double nf = Jf.norm(), ni = Ji.norm();
    F.phi_sup = std::max({F.phi_sup, X.at(k + 1).norm(), nf, ni});
    scale = std::max(scale, nf * ni);
    F.composition_defect = std::max(F.composition_defect, (Jf * Ji - Mat::Identity(d, d)).norm());
  }
  F.composition_tolerance = 1e-6 * scale;
  if (F.composition_defect > F.composition_tolerance) {
    F.alarm = true;
    if (inverse == InverseScheme::ito_euler) {
      // Fall back to per-step inversion of the forward flow.
      for (int k = 0; k <= N; ++k) store_mat(Mat(F.fwd(k).partialPivLu().inverse()), F.J_inv.data() + static_cast<size_t>(k) * d * d);
      F.inverse_fallback = true;
      double defect = 0.0;
      for (int k = 0; k <= N; ++k) defect = std::max(defect, (F.fwd(k) * F.inv(k) - Mat::Identity(d, d)).norm());
      F.composition_defect = defect;
      F.alarm = defect > F.composition_tolerance;
    }
  }
  return F;
}

// Per-path binary dump: "MRLB1" + 3 pad bytes, u32 d, u32 N, u64 seed, u64 path_index,
// then (N+1) x d little-endian doubles.
namespace detail {
template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}
template <class T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw Error(ErrorKind::io, "path dump: truncated file");
  if constexpr (std::endian::native == std::endian::big)
    for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}
}  // namespace detail

inline void write_path_dump(const std::string& file, const SamplePath& X, std::uint64_t seed,
                            std::uint64_t path_index) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw Error(ErrorKind::io, "path dump: cannot open " + file);
  os.write("MRLB1\0\0\0", 8);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(X.d));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(X.N()));
  detail::put_le<std::uint64_t>(os, seed);
  detail::put_le<std::uint64_t>(os, path_index);
  for (double v : X.values) detail::put_le<double>(os, v);
}

struct PathDump {
  SamplePath X;
  std::uint64_t seed = 0;
  std::uint64_t path_index = 0;
};

inline PathDump read_path_dump(const std::string& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw Error(ErrorKind::io, "path dump: cannot open " + file);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "MRLB1", 5) != 0) throw Error(ErrorKind::io, "path dump: bad magic");
  const auto d = detail::get_le<std::uint32_t>(is);
  const auto N = detail::get_le<std::uint32_t>(is);
  PathDump p;
  p.seed = detail::get_le<std::uint64_t>(is);
  p.path_index = detail::get_le<std::uint64_t>(is);
  p.X = make_path(uniform_grid(static_cast<int>(N)), static_cast<int>(d));
  for (double& v : p.X.values) v = detail::get_le<double>(is);
  return p;
}

}  // namespace mrl

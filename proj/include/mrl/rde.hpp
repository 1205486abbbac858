#pragma once

// Second-order (Davie) solver for dY = V_0(Y) dt + V_i(Y) dX^i driven by a level-2 rough path,
// together with its forward and inverse Jacobian flows.

#include "mrl/rough_path.hpp"
#include "mrl/vector_fields.hpp"

namespace mrl {

namespace detail {
inline void check_rde_inputs(const VectorFieldSet& f, const RoughPath& rp) {
  require(f.n_drivers == rp.dim, "solve_rde: number of driving fields differs from rough path dimension");
  require(f.state_dim >= 1 && f.state_dim <= kMaxDim, "solve_rde: state dimension out of range");
}
}  // namespace detail

inline ControlledPath solve_rde(const VectorFieldSet& f, const RoughPath& rp, const Vec& y0) {
  detail::check_rde_inputs(f, rp);
  require(y0.size() == f.state_dim, "solve_rde: initial condition dimension mismatch");
  const int m = f.state_dim, d = rp.dim, M = rp.M();
  ControlledPath Y = make_controlled(rp.grid, m, d);
  Vec y = y0;
  std::vector<Vec> V(d);
  std::vector<Mat> DV(d);
  for (int k = 0;; ++k) {
    for (int i = 0; i < d; ++i) V[i] = f.driver(i).value(y);
    for (int a = 0; a < m; ++a) {
      Y.Y[static_cast<size_t>(k) * m + a] = y(a);
      for (int i = 0; i < d; ++i) Y.Yp[(static_cast<size_t>(k) * m + a) * d + i] = V[i](a);
    }
    if (k == M) break;
    for (int i = 0; i < d; ++i) DV[i] = f.driver(i).jacobian(y);
    Vec step = f.drift().value(y) * (rp.grid[k + 1] - rp.grid[k]);
    for (int i = 0; i < d; ++i) {
      step += V[i] * rp.inc(k, k + 1, i);
      for (int j = 0; j < d; ++j) step += (DV[i] * V[j]) * rp.area(k, k + 1, j, i);
    }
    y += step;
    if (!y.allFinite()) throw BlowUpError("solve_rde: non-finite state", k + 1);
  }
  Y.remainder_norm_2a = remainder_norm(Y, rp, rp.alpha);
  return Y;
}

struct JacobianPair {
  int m = 0;
  std::vector<double> J_fwd;  // (M+1) m x m, row-major blocks
  std::vector<double> J_inv;
  double composition_defect = 0.0;
  double composition_tolerance = 0.0;
  bool alarm = false;

  Mat fwd(int k) const { return load_mat(J_fwd.data() + static_cast<size_t>(k) * m * m, m, m); }
  Mat inv(int k) const { return load_mat(J_inv.data() + static_cast<size_t>(k) * m * m, m, m); }
};

// Derivative of the Davie step map y -> y + V_i X^i + DV_i V_j XX^{ji} + V_0 dt.
inline Mat davie_propagator(const VectorFieldSet& f, const RoughPath& rp, const Vec& y, int k) {
  const int m = f.state_dim, d = rp.dim;
  std::vector<Vec> V(d);
  std::vector<Mat> DV(d);
  for (int i = 0; i < d; ++i) {
    V[i] = f.driver(i).value(y);
    DV[i] = f.driver(i).jacobian(y);
  }
  Mat P = Mat::Identity(m, m) + f.drift().jacobian(y) * (rp.grid[k + 1] - rp.grid[k]);
  for (int i = 0; i < d; ++i) {
    P += DV[i] * rp.inc(k, k + 1, i);
    for (int j = 0; j < d; ++j) {
      const double a = rp.area(k, k + 1, j, i);
      if (a != 0.0) P += (f.driver(i).jacobian_derivative(y, V[j]) + DV[i] * DV[j]) * a;
    }
  }
  return P;
}

inline JacobianPair solve_jacobian_rde(const VectorFieldSet& f, const RoughPath& rp, const ControlledPath& Y) {
  detail::check_rde_inputs(f, rp);
  require_same_grid(Y.grid, rp.grid, "solve_jacobian_rde");
  require(Y.m == f.state_dim, "solve_jacobian_rde: state dimension mismatch");
  const int m = f.state_dim, M = rp.M();
  JacobianPair J;
  J.m = m;
  J.J_fwd.resize(static_cast<size_t>(M + 1) * m * m);
  J.J_inv.resize(static_cast<size_t>(M + 1) * m * m);
  Mat Jf = Mat::Identity(m, m), Ji = Mat::Identity(m, m);
  double scale = 1.0;
  for (int k = 0;; ++k) {
    store_mat(Jf, J.J_fwd.data() + static_cast<size_t>(k) * m * m);
    store_mat(Ji, J.J_inv.data() + static_cast<size_t>(k) * m * m);
    scale = std::max(scale, Jf.norm() * Ji.norm());
    J.composition_defect = std::max(J.composition_defect, (Jf * Ji - Mat::Identity(m, m)).norm());
    if (k == M) break;
    Vec y(m);
    for (int a = 0; a < m; ++a) y(a) = Y.y(k, a);
    const Mat P = davie_propagator(f, rp, y, k);
    Jf = P * Jf;
    Ji = Ji * P.partialPivLu().inverse();
    if (!Jf.allFinite() || !Ji.allFinite()) throw BlowUpError("solve_jacobian_rde: non-finite Jacobian", k + 1);
  }
  J.composition_tolerance = 1e-6 * scale;
  J.alarm = J.composition_defect > J.composition_tolerance;
  return J;
}

}  // namespace mrl

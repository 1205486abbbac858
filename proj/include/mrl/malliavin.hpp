#pragma once

// Malliavin derivatives of the diffusion X and of the RDE solution Y, and the
// (reduced) Malliavin matrices built from them by L^2 quadrature in r.

#include "mrl/model.hpp"
#include "mrl/path_sim.hpp"
#include "mrl/rde.hpp"
#include "mrl/rough_path.hpp"
#include "mrl/vector_fields.hpp"

#include <Eigen/Eigenvalues>

namespace mrl {

enum class MalliavinKind { of_X, of_Y };

// Lower triangle r <= t of rows x cols blocks, entry (i,j) = D^j_r F^i_t.
struct MalliavinField {
  MalliavinKind kind = MalliavinKind::of_X;
  std::vector<double> grid;
  int rows = 0, cols = 0;
  std::vector<double> values;

  int M() const { return static_cast<int>(grid.size()) - 1; }
  size_t offset(int r, int t) const {
    return (static_cast<size_t>(t) * (t + 1) / 2 + r) * static_cast<size_t>(rows) * cols;
  }
  Mat at(int r, int t) const {
    if (r > t) return Mat::Zero(rows, cols);
    return load_mat(values.data() + offset(r, t), rows, cols);
  }
  void set(int r, int t, const Mat& v) { store_mat(v, values.data() + offset(r, t)); }
};

inline MalliavinField make_malliavin_field(MalliavinKind kind, const std::vector<double>& grid, int rows, int cols) {
  MalliavinField f{kind, grid, rows, cols, {}};
  const size_t n = grid.size();
  f.values.assign(n * (n + 1) / 2 * rows * cols, 0.0);
  return f;
}

inline std::vector<double> subsample(const std::vector<double>& g, int stride) {
  std::vector<double> out;
  for (size_t k = 0; k < g.size(); k += stride) out.push_back(g[k]);
  return out;
}

// D_rX_t = J_{t<-0} J_{0<-r} A(X_r) on every stride-th grid point.
inline MalliavinField malliavin_X(const FlowBundle& flow, const DiffusionSpec& spec, int stride = 1) {
  require(stride >= 1 && flow.N() % stride == 0, "malliavin_X: stride must divide N");
  const int d = flow.d, M = flow.N() / stride;
  MalliavinField f = make_malliavin_field(MalliavinKind::of_X, subsample(flow.X.grid, stride), d, d);
  std::vector<Mat> right(M + 1);
  for (int r = 0; r <= M; ++r) right[r] = flow.inv(r * stride) * sqrt_at(spec, flow.X.at(r * stride));
  for (int t = 0; t <= M; ++t) {
    const Mat Jt = flow.fwd(t * stride);
    for (int r = 0; r <= t; ++r) f.set(r, t, Jt * right[r]);
  }
  return f;
}

// Path (X, J_{.<-0}) in R^{d + d^2}; the Jacobian entry (i, m) sits in column d + i*d + m.
inline SamplePath joint_path(const FlowBundle& flow) {
  const int d = flow.d, D = d + d * d, N = flow.N();
  SamplePath p = make_path(flow.X.grid, D);
  for (int k = 0; k <= N; ++k) {
    double* row = p.values.data() + static_cast<size_t>(k) * D;
    for (int i = 0; i < d; ++i) row[i] = flow.X(k, i);
    std::copy_n(flow.J_fwd.data() + static_cast<size_t>(k) * d * d, d * d, row + d);
  }
  return p;
}

// Factorized representation of D_rY_t on the coarse grid:
//   J^Y_{0<-t} D_rY_t = jump(r) + (H(t) - H(r)) c(r),
// jump(r) = G(r) A(X_r), c(r) = J^X_{0<-r} A(X_r), G(s) = [J^Y_{0<-s} V_i(Y_s)]_i and
// H(t) = int_0^t G(s) dJ^X_{s<-0} as a rough integral against the joint lift of (X, J^X).
struct MalliavinFactors {
  std::vector<double> grid;
  int m = 0, d = 0, stride = 1;
  std::vector<double> G;     // (M+1) x m x d
  std::vector<double> jump;  // (M+1) x m x d
  std::vector<double> H;     // (M+1) x m x d
  std::vector<double> c;     // (M+1) x d x d
  JacobianPair JY;

  int M() const { return static_cast<int>(grid.size()) - 1; }
  Mat block(const std::vector<double>& v, int k, int r, int cl) const {
    return load_mat(v.data() + static_cast<size_t>(k) * r * cl, r, cl);
  }
  // K_r = J^Y_{0<-t} D_rY_t.
  Mat reduced(int r, int t) const {
    if (r > t) return Mat::Zero(m, d);
    return block(jump, r, m, d) + (block(H, t, m, d) - block(H, r, m, d)) * block(c, r, d, d);
  }
  Mat at(int r, int t) const {
    if (r > t) return Mat::Zero(m, d);
    return JY.fwd(t) * reduced(r, t);
  }
};

inline MalliavinFactors malliavin_Y_factors(const VectorFieldSet& fields, const RoughPath& rp, const ControlledPath& Y,
                                            const JacobianPair& JY, const FlowBundle& flowX, const DiffusionSpec& spec) {
  require_same_grid(Y.grid, rp.grid, "malliavin_Y");
  require(rp.dim == flowX.d && fields.n_drivers == rp.dim && Y.m == fields.state_dim, "malliavin_Y: dimension mismatch");
  require(flowX.N() % rp.M() == 0, "malliavin_Y: coarse grid must subsample the diffusion grid");
  const int stride = flowX.N() / rp.M();
  require(std::abs(flowX.X.grid[stride] - rp.grid[1]) <= 1e-12, "malliavin_Y: grid mismatch");
  const int m = Y.m, d = rp.dim, M = rp.M();
  MalliavinFactors F;
  F.grid = rp.grid;
  F.m = m;
  F.d = d;
  F.stride = stride;
  F.JY = JY;
  F.G.resize(static_cast<size_t>(M + 1) * m * d);
  F.jump.resize(static_cast<size_t>(M + 1) * m * d);
  F.H.assign(static_cast<size_t>(M + 1) * m * d, 0.0);
  F.c.resize(static_cast<size_t>(M + 1) * d * d);
  const bool constant_X = flowX.constant_flow;
  RoughPath Z;
  if (!constant_X) Z = midpoint_lift(joint_path(flowX), stride, rp.alpha);
  Mat H = Mat::Zero(m, d);
  for (int k = 0; k <= M; ++k) {
    Vec y(m);
    for (int a = 0; a < m; ++a) y(a) = Y.y(k, a);
    const Mat Ji = JY.inv(k);
    Mat G(m, d);
    for (int i = 0; i < d; ++i) G.col(i) = Ji * fields.driver(i).value(y);
    const Mat A = sqrt_at(spec, flowX.X.at(k * stride));
    store_mat(G, F.G.data() + static_cast<size_t>(k) * m * d);
    store_mat(Mat(G * A), F.jump.data() + static_cast<size_t>(k) * m * d);
    store_mat(Mat(flowX.inv(k * stride) * A), F.c.data() + static_cast<size_t>(k) * d * d);
    store_mat(H, F.H.data() + static_cast<size_t>(k) * m * d);
    if (k == M || constant_X) continue;
    for (int i = 0; i < d; ++i) {
      for (int mm = 0; mm < d; ++mm) H.col(mm) += G.col(i) * Z.inc(k, k + 1, d + i * d + mm);
      for (int l = 0; l < d; ++l) {
        const Vec br = Ji * lie_bracket(fields.driver(l), fields.driver(i), y);
        for (int mm = 0; mm < d; ++mm) H.col(mm) += br * Z.area(k, k + 1, l, d + i * d + mm);
      }
    }
  }
  return F;
}

inline MalliavinField materialize(const MalliavinFactors& F) {
  MalliavinField f = make_malliavin_field(MalliavinKind::of_Y, F.grid, F.m, F.d);
  for (int t = 0; t <= F.M(); ++t) {
    const Mat Jt = F.JY.fwd(t);
    for (int r = 0; r <= t; ++r) f.set(r, t, Jt * F.reduced(r, t));
  }
  return f;
}

inline MalliavinField malliavin_Y(const VectorFieldSet& fields, const RoughPath& rp, const ControlledPath& Y,
                                  const JacobianPair& JY, const FlowBundle& flowX, const DiffusionSpec& spec) {
  return materialize(malliavin_Y_factors(fields, rp, Y, JY, flowX, spec));
}

// Recomputes D_rY_t for the sampled r by propagating D_rX_s with the fine step propagators
// (no use of J^X_{0<-r}) and integrating against the joint lift of (X, D_rX).
// Returns the largest gap relative to the largest direct value.
inline double factorized_vs_direct_check(const MalliavinFactors& F, const VectorFieldSet& fields, const RoughPath& rp,
                                         const ControlledPath& Y, const FlowBundle& flowX, const DiffusionSpec& spec,
                                         const std::vector<int>& r_samples) {
  const int m = F.m, d = F.d, M = F.M(), s = F.stride, D = d + d * d;
  double gap = 0.0, scale = 1e-300;
  for (int r : r_samples) {
    require(r >= 0 && r <= M, "factorized_vs_direct_check: r outside grid");
    const int n0 = r * s, n = flowX.N() - n0;
    SamplePath p = make_path(std::vector<double>(flowX.X.grid.begin() + n0, flowX.X.grid.end()), D);
    Mat DX = sqrt_at(spec, flowX.X.at(n0));
    for (int k = 0; k <= n; ++k) {
      double* row = p.values.data() + static_cast<size_t>(k) * D;
      for (int i = 0; i < d; ++i) row[i] = flowX.X(n0 + k, i);
      store_mat(DX, row + d);
      if (k == n) break;
      const int g = n0 + k;
      DX = flow_propagator(spec, flowX.X.at(g), flowX.increments.data() + static_cast<size_t>(g) * d,
                           flowX.X.grid[g + 1] - flowX.X.grid[g], flowX.scheme) *
           DX;
    }
    const RoughPath Z = n > 0 ? midpoint_lift(p, s, rp.alpha) : RoughPath{};
    Vec y(m);
    for (int a = 0; a < m; ++a) y(a) = Y.y(r, a);
    Mat K(m, d);
    for (int i = 0; i < d; ++i) K.col(i) = F.JY.inv(r) * fields.driver(i).value(y);
    K = K * sqrt_at(spec, flowX.X.at(n0));
    for (int t = r;; ++t) {
      const Mat direct = F.JY.fwd(t) * K;
      scale = std::max(scale, direct.norm());
      gap = std::max(gap, (direct - F.at(r, t)).norm());
      if (t == M) break;
      const int k = t - r;
      for (int a = 0; a < m; ++a) y(a) = Y.y(t, a);
      const Mat Ji = F.JY.inv(t);
      for (int i = 0; i < d; ++i) {
        const Vec g = Ji * fields.driver(i).value(y);
        for (int j = 0; j < d; ++j) K.col(j) += g * Z.inc(k, k + 1, d + i * d + j);
        for (int l = 0; l < d; ++l) {
          const Vec br = Ji * lie_bracket(fields.driver(l), fields.driver(i), y);
          for (int j = 0; j < d; ++j) K.col(j) += br * Z.area(k, k + 1, l, d + i * d + j);
        }
      }
    }
  }
  return gap / scale;
}

struct MalliavinMatrixPair {
  Mat C, Gamma;
  double lambda_min_C = 0.0, lambda_min_Gamma = 0.0;
  double trace_C = 0.0;
  double t = 0.0;
};

inline double checked_lambda_min(const Mat& S, const char* what) {
  Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues()(0), tr = S.trace();
  if (lmin < -1e-10 * std::max(tr, 1e-300))
    throw NumericalDegradation(std::string(what) + ": matrix is not positive semidefinite", lmin);
  return lmin;
}

namespace detail {
inline MalliavinMatrixPair finish_pair(Mat C, const Mat& Jt, double t) {
  MalliavinMatrixPair p;
  p.C = 0.5 * (C + C.transpose());
  p.Gamma = Jt * p.C * Jt.transpose();
  p.Gamma = 0.5 * (p.Gamma + p.Gamma.transpose());
  p.trace_C = p.C.trace();
  p.lambda_min_C = checked_lambda_min(p.C, "reduced_matrix");
  p.lambda_min_Gamma = checked_lambda_min(p.Gamma, "malliavin matrix");
  p.t = t;
  return p;
}
}  // namespace detail

// C = sum_{r < t} K_r K_r^T dr with K_r = J^Y_{0<-t} D_rY_t, Gamma = J^Y_{t<-0} C J^Y_{t<-0}^T.
inline MalliavinMatrixPair reduced_matrix(const MalliavinField& DY, const JacobianPair& JY, int t) {
  require(DY.kind == MalliavinKind::of_Y, "reduced_matrix: expects a derivative of Y");
  require(t >= 0 && t <= DY.M(), "reduced_matrix: t outside grid");
  const Mat Jinv = JY.inv(t);
  Mat C = Mat::Zero(DY.rows, DY.rows);
  for (int r = 0; r < t; ++r) {
    const Mat K = Jinv * DY.at(r, t);
    C += K * K.transpose() * (DY.grid[r + 1] - DY.grid[r]);
  }
  return detail::finish_pair(C, JY.fwd(t), DY.grid[t]);
}

inline MalliavinMatrixPair reduced_matrix(const MalliavinFactors& F, int t) {
  require(t >= 0 && t <= F.M(), "reduced_matrix: t outside grid");
  Mat C = Mat::Zero(F.m, F.m);
  for (int r = 0; r < t; ++r) {
    const Mat K = F.reduced(r, t);
    C += K * K.transpose() * (F.grid[r + 1] - F.grid[r]);
  }
  return detail::finish_pair(C, F.JY.fwd(t), F.grid[t]);
}

// Gamma by direct quadrature of <D Y^i_t, D Y^j_t>.
inline Mat malliavin_matrix_direct(const MalliavinField& DY, int t) {
  Mat G = Mat::Zero(DY.rows, DY.rows);
  for (int r = 0; r < t; ++r) {
    const Mat D = DY.at(r, t);
    G += D * D.transpose() * (DY.grid[r + 1] - DY.grid[r]);
  }
  return G;
}

// f_v^i(t) = v^T J^Y_{0<-t} V_i(Y_t) against its expansion
//   v^T V_i(y0) + int v^T J^Y_{0<-s}[V_0,V_i](Y_s) ds + sum_j int v^T J^Y_{0<-s}[V_j,V_i](Y_s) dX^j_s,
// with Gubinelli derivative v^T J^Y_{0<-s}[V_l,[V_j,V_i]](Y_s) in direction l.
struct FvCheck {
  double max_defect = 0.0;
  std::vector<double> lhs, rhs;  // (M+1) x d
};

inline FvCheck fv_decomposition_check(const VectorFieldSet& fields, const RoughPath& rp, const ControlledPath& Y,
                                      const JacobianPair& JY, const Vec& v) {
  require(std::abs(v.norm() - 1.0) <= 1e-12, "fv_decomposition_check: v must be a unit vector");
  require(v.size() == Y.m, "fv_decomposition_check: v has wrong dimension");
  const int m = Y.m, d = rp.dim, M = rp.M();
  FvCheck out;
  out.lhs.resize(static_cast<size_t>(M + 1) * d);
  out.rhs.resize(static_cast<size_t>(M + 1) * d);
  std::vector<double> acc(d);
  for (int k = 0; k <= M; ++k) {
    Vec y(m);
    for (int a = 0; a < m; ++a) y(a) = Y.y(k, a);
    const Vec w = JY.inv(k).transpose() * v;
    for (int i = 0; i < d; ++i) {
      const double lhs = w.dot(fields.driver(i).value(y));
      if (k == 0) acc[i] = lhs;
      out.lhs[static_cast<size_t>(k) * d + i] = lhs;
      out.rhs[static_cast<size_t>(k) * d + i] = acc[i];
      out.max_defect = std::max(out.max_defect, std::abs(lhs - acc[i]));
    }
    if (k == M) break;
    const double dt = rp.grid[k + 1] - rp.grid[k];
    for (int i = 0; i < d; ++i) {
      acc[i] += w.dot(lie_bracket(fields.drift(), fields.driver(i), y)) * dt;
      for (int j = 0; j < d; ++j) {
        const BracketLocal b = bracket_local(fields.driver(j), fields.driver(i), y);
        acc[i] += w.dot(b.value) * rp.inc(k, k + 1, j);
        for (int l = 0; l < d; ++l) {
          // [V_l, W] = DW V_l - DV_l W for W = [V_j, V_i].
          const Vec outer = b.jacobian * fields.driver(l).value(y) - fields.driver(l).jacobian(y) * b.value;
          acc[i] += w.dot(outer) * rp.area(k, k + 1, l, j);
        }
      }
    }
  }
  return out;
}

}  // namespace mrl

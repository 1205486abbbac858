#pragma once

#include "mrl/core.hpp"
#include "mrl/taylor.hpp"

#include <Eigen/SVD>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace mrl {

struct VectorField {
  std::string name;
  int dim = 0;
  std::function<Vec(const Vec&)> value;
  std::function<Mat(const Vec&)> jacobian;
  // jacobian_derivative(y, u) = sum_k u_k d/dy_k DV(y), i.e. the matrix of w -> D^2V(y)[u, w].
  std::function<Mat(const Vec&, const Vec&)> jacobian_derivative;
  // Exact jets for catalog fields; empty for user fields.
  std::function<void(std::span<const Taylor>, std::span<Taylor>)> taylor;
  bool closed_form = true;
};

// V_0 (drift) followed by V_1 ... V_d.
struct VectorFieldSet {
  int state_dim = 0;
  int n_drivers = 0;
  std::string catalog_id;
  std::vector<double> params;
  std::vector<VectorField> fields;

  const VectorField& drift() const { return fields[0]; }
  const VectorField& driver(int i) const { return fields[i + 1]; }  // 0-based driver index
};

namespace detail {

// Wraps a generic evaluator f(y, out) usable with both double and Taylor entries.
template <class F, class J, class H>
VectorField make_field(std::string name, int dim, F f, J jac, H jd) {
  VectorField v;
  v.name = std::move(name);
  v.dim = dim;
  v.value = [f, dim](const Vec& y) {
    Vec out(dim);
    f(y, out);
    return out;
  };
  v.jacobian = std::move(jac);
  v.jacobian_derivative = std::move(jd);
  v.taylor = [f](std::span<const Taylor> y, std::span<Taylor> out) { f(y, out); };
  return v;
}

inline VectorField constant_field(std::string name, const Vec& c) {
  const int m = static_cast<int>(c.size());
  return make_field(
      std::move(name), m,
      [c](const auto& y, auto& out) {
        for (int k = 0; k < c.size(); ++k) out[k] = constant_like(y[0], c(k));
      },
      [m](const Vec&) { return Mat(Mat::Zero(m, m)); }, [m](const Vec&, const Vec&) { return Mat(Mat::Zero(m, m)); });
}

inline VectorField linear_field(std::string name, const Mat& M) {
  const int m = static_cast<int>(M.rows());
  return make_field(
      std::move(name), m,
      [M](const auto& y, auto& out) {
        for (int k = 0; k < M.rows(); ++k) {
          auto acc = constant_like(y[0], 0.0);
          for (int l = 0; l < M.cols(); ++l)
            if (M(k, l) != 0.0) acc = acc + M(k, l) * y[l];
          out[k] = acc;
        }
      },
      [M](const Vec&) { return M; }, [m](const Vec&, const Vec&) { return Mat(Mat::Zero(m, m)); });
}

}  // namespace detail

inline VectorFieldSet coordinate_fields(int d, const std::vector<double>& drift = {}) {
  require(d >= 1 && d <= kMaxDim, "coordinate: dimension out of range");
  require(drift.empty() || static_cast<int>(drift.size()) == d, "coordinate: drift must have d entries");
  VectorFieldSet s{d, d, "coordinate", drift, {}};
  s.fields.push_back(detail::constant_field("V0", drift.empty() ? Vec(Vec::Zero(d)) : to_vec(drift)));
  for (int i = 0; i < d; ++i) s.fields.push_back(detail::constant_field("V" + std::to_string(i + 1), Vec::Unit(d, i)));
  return s;
}

// V1 = (1, 0), V2 = (0, y1), V0 = 0.
inline VectorFieldSet hormander_pair() {
  VectorFieldSet s{2, 2, "hormander_pair", {}, {}};
  s.fields.push_back(detail::constant_field("V0", Vec::Zero(2)));
  s.fields.push_back(detail::constant_field("V1", Vec::Unit(2, 0)));
  Mat M = Mat::Zero(2, 2);
  M(1, 0) = 1.0;
  s.fields.push_back(detail::linear_field("V2", M));
  return s;
}

// V1 = (1, 0), V2 = 0, V0 = 0: brackets never leave the first axis.
inline VectorFieldSet degenerate_pair() {
  VectorFieldSet s{2, 2, "degenerate_pair", {}, {}};
  s.fields.push_back(detail::constant_field("V0", Vec::Zero(2)));
  s.fields.push_back(detail::constant_field("V1", Vec::Unit(2, 0)));
  s.fields.push_back(detail::constant_field("V2", Vec::Zero(2)));
  return s;
}

// V_i(y) = M_i y; params hold M_0, ..., M_d row-major.
inline VectorFieldSet linear_fields(int m, int d, const std::vector<double>& params) {
  require(static_cast<int>(params.size()) == (d + 1) * m * m, "linear: expected (d+1)*m*m parameters");
  VectorFieldSet s{m, d, "linear", params, {}};
  for (int i = 0; i <= d; ++i) {
    Mat M(m, m);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) M(r, c) = params[i * m * m + r * m + c];
    s.fields.push_back(detail::linear_field("V" + std::to_string(i), M));
  }
  return s;
}

// V_i(y) = c_i constant; params hold c_0, ..., c_d.
inline VectorFieldSet constant_fields(int m, int d, const std::vector<double>& params) {
  require(static_cast<int>(params.size()) == (d + 1) * m, "constant fields: expected (d+1)*m parameters");
  VectorFieldSet s{m, d, "constant", params, {}};
  for (int i = 0; i <= d; ++i) {
    Vec c(m);
    for (int r = 0; r < m; ++r) c(r) = params[i * m + r];
    s.fields.push_back(detail::constant_field("V" + std::to_string(i), c));
  }
  return s;
}

// Smooth bounded nonlinear family on R^d with d drivers:
//   V_i(y)_k = delta_ik + c sin(y_q + i), q = (k + i) mod d   (i = 1..d)
//   V_0(y)_k = c0 cos(y_k)
inline VectorFieldSet trig_fields(int d, const std::vector<double>& params) {
  require(d >= 1 && d <= kMaxDim, "trig: dimension out of range");
  require(params.size() == 2, "trig: expected parameters [c, c0]");
  const double c = params[0], c0 = params[1];
  VectorFieldSet s{d, d, "trig", params, {}};
  s.fields.push_back(detail::make_field(
      "V0", d,
      [d, c0](const auto& y, auto& out) {
        using std::cos;
        for (int k = 0; k < d; ++k) out[k] = c0 * cos(y[k]);
      },
      [d, c0](const Vec& y) {
        Mat J = Mat::Zero(d, d);
        for (int k = 0; k < d; ++k) J(k, k) = -c0 * std::sin(y(k));
        return J;
      },
      [d, c0](const Vec& y, const Vec& u) {
        Mat H = Mat::Zero(d, d);
        for (int k = 0; k < d; ++k) H(k, k) = -c0 * std::cos(y(k)) * u(k);
        return H;
      }));
  for (int i = 1; i <= d; ++i) {
    s.fields.push_back(detail::make_field(
        "V" + std::to_string(i), d,
        [d, c, i](const auto& y, auto& out) {
          using std::sin;
          for (int k = 0; k < d; ++k) {
            const int q = (k + i) % d;
            out[k] = c * sin(y[q] + static_cast<double>(i)) + (k == i - 1 ? 1.0 : 0.0);
          }
        },
        [d, c, i](const Vec& y) {
          Mat J = Mat::Zero(d, d);
          for (int k = 0; k < d; ++k) {
            const int q = (k + i) % d;
            J(k, q) += c * std::cos(y(q) + i);
          }
          return J;
        },
        [d, c, i](const Vec& y, const Vec& u) {
          Mat H = Mat::Zero(d, d);
          for (int k = 0; k < d; ++k) {
            const int q = (k + i) % d;
            H(k, q) += -c * std::sin(y(q) + i) * u(q);
          }
          return H;
        }));
  }
  return s;
}

// Black-box field: Jacobians by central differences with h = 1e-5 (1 + |y|_inf).
inline VectorField make_user_field(std::string name, int dim, std::function<Vec(const Vec&)> f) {
  VectorField v;
  v.name = std::move(name);
  v.dim = dim;
  v.closed_form = false;
  v.value = f;
  v.jacobian = [f, dim](const Vec& y) {
    const double h = 1e-5 * (1.0 + y.cwiseAbs().maxCoeff());
    Mat J(dim, dim);
    for (int k = 0; k < dim; ++k) {
      Vec yp = y, ym = y;
      yp(k) += h;
      ym(k) -= h;
      J.col(k) = (f(yp) - f(ym)) / (2 * h);
    }
    return J;
  };
  auto jac = v.jacobian;
  v.jacobian_derivative = [jac](const Vec& y, const Vec& u) {
    const double h = 1e-4 * (1.0 + y.cwiseAbs().maxCoeff());
    return Mat((jac(y + h * u) - jac(y - h * u)) / (2 * h));
  };
  return v;
}

inline VectorFieldSet make_fields(const std::string& id, int d, const std::vector<double>& params) {
  if (id == "coordinate") return coordinate_fields(d, params);
  if (id == "hormander_pair") {
    require(d == 2, "hormander_pair: dimension must be 2");
    return hormander_pair();
  }
  if (id == "degenerate_pair") {
    require(d == 2, "degenerate_pair: dimension must be 2");
    return degenerate_pair();
  }
  if (id == "linear") return linear_fields(d, d, params);
  if (id == "constant") return constant_fields(d, d, params);
  if (id == "trig") return trig_fields(d, params);
  throw ValidationError("fields: unknown catalog id '" + id + "'");
}

inline Vec lie_bracket(const VectorField& V, const VectorField& W, const Vec& x) {
  return W.jacobian(x) * V.value(x) - V.jacobian(x) * W.value(x);
}

// Value and Jacobian of [V, W] at y from first and second derivatives of V, W.
struct BracketLocal {
  Vec value;
  Mat jacobian;
};

inline BracketLocal bracket_local(const VectorField& V, const VectorField& W, const Vec& y) {
  const Vec v = V.value(y), w = W.value(y);
  const Mat DV = V.jacobian(y), DW = W.jacobian(y);
  BracketLocal b;
  b.value = DW * v - DV * w;
  b.jacobian = W.jacobian_derivative(y, v) + DW * DV - V.jacobian_derivative(y, w) - DV * DW;
  return b;
}

// Maximum deviation of supplied Jacobians from central differences.
struct JacobianCheck {
  double max_error = 0.0;
  double max_second_error = 0.0;
};

inline JacobianCheck check_field_jacobians(const VectorFieldSet& s, const std::vector<Vec>& probes, double h = 0.0) {
  JacobianCheck r;
  const int m = s.state_dim;
  for (const auto& V : s.fields) {
    for (const Vec& y : probes) {
      const double hh = h > 0 ? h : 1e-5 * (1.0 + y.cwiseAbs().maxCoeff());
      const Mat J = V.jacobian(y);
      for (int k = 0; k < m; ++k) {
        Vec yp = y, ym = y;
        yp(k) += hh;
        ym(k) -= hh;
        const Vec col = (V.value(yp) - V.value(ym)) / (2 * hh);
        r.max_error = std::max(r.max_error, (col - J.col(k)).cwiseAbs().maxCoeff());
        const Mat Hk = (V.jacobian(yp) - V.jacobian(ym)) / (2 * hh);
        r.max_second_error =
            std::max(r.max_second_error, (Hk - V.jacobian_derivative(y, Vec::Unit(m, k))).cwiseAbs().maxCoeff());
      }
    }
  }
  return r;
}

inline std::vector<double> field_sup_norms(const VectorFieldSet& s, const std::vector<Vec>& probes) {
  std::vector<double> out(s.fields.size(), 0.0);
  for (size_t i = 0; i < s.fields.size(); ++i)
    for (const Vec& y : probes) out[i] = std::max(out[i], s.fields[i].value(y).norm());
  return out;
}

// Bracket expression tree: a leaf V_i, or [left, V_right].
struct BracketExpr {
  int leaf = -1;
  std::shared_ptr<const BracketExpr> left;
  int right = -1;

  std::string str() const {
    if (leaf >= 0) return "V" + std::to_string(leaf);
    return "[" + left->str() + ",V" + std::to_string(right) + "]";
  }
};

using BracketPtr = std::shared_ptr<const BracketExpr>;

struct BracketTable {
  int k0 = 0;
  std::vector<std::vector<BracketPtr>> levels;
  // Jets of level members at the last evaluation point; the value is the constant coefficient.
  std::vector<std::vector<std::vector<Taylor>>> cache;
  std::optional<Vec> cached_at;
};

inline long bracket_count(int d, int k0) {
  long n = d;
  for (int k = 0; k < k0; ++k) n *= (d + 1);
  return n;
}

inline BracketTable build_bracket_table(int d, int k0, long budget = 100000) {
  require(k0 >= 0, "hormander_rank: k0 must be nonnegative");
  long total = 0;
  for (int k = 0; k <= k0; ++k) total += bracket_count(d, k);
  if (bracket_count(d, k0) > budget || total > 2 * budget)
    throw ResourceError("hormander_rank: bracket count " + std::to_string(bracket_count(d, k0)) + " at level " +
                        std::to_string(k0) + " exceeds budget " + std::to_string(budget));
  BracketTable t;
  t.k0 = k0;
  t.levels.resize(k0 + 1);
  for (int i = 1; i <= d; ++i) t.levels[0].push_back(std::make_shared<BracketExpr>(BracketExpr{i, nullptr, -1}));
  std::set<std::string> seen;
  for (const auto& e : t.levels[0]) seen.insert(e->str());
  for (int k = 0; k < k0; ++k) {
    for (const auto& e : t.levels[k]) {
      for (int i = 0; i <= d; ++i) {
        auto b = std::make_shared<BracketExpr>(BracketExpr{-1, e, i});
        if (seen.insert(b->str()).second) t.levels[k + 1].push_back(b);
      }
    }
  }
  return t;
}

namespace detail {

// Jet of every base field at x to the given order.
inline std::vector<std::vector<Taylor>> base_jets(const VectorFieldSet& s, const Vec& x, int order) {
  const int m = s.state_dim;
  auto L = TaylorLayout::get(m, order);
  std::vector<Taylor> y;
  for (int k = 0; k < m; ++k) y.push_back(Taylor::variable(L, k, x(k)));
  std::vector<std::vector<Taylor>> out;
  for (const auto& V : s.fields) {
    std::vector<Taylor> v(m, Taylor(L));
    if (V.taylor) {
      V.taylor(y, v);
    } else {
      if (order > 2)
        throw ValidationError("hormander_rank: field " + V.name + " has no exact jets; levels above 2 unavailable");
      const Vec val = V.value(x);
      const Mat J = V.jacobian(x);
      for (int c = 0; c < m; ++c) {
        v[c] = Taylor(L, val(c));
        if (order >= 1) {
          for (int k = 0; k < m; ++k) {
            std::vector<int> e(m, 0);
            e[k] = 1;
            v[c].c[L->index.at(e)] = J(c, k);
          }
        }
      }
      if (order >= 2) {
        for (int k = 0; k < m; ++k) {
          const Mat H = V.jacobian_derivative(x, Vec::Unit(m, k));  // H(c, l) = d_k d_l V_c
          for (int l = k; l < m; ++l) {
            std::vector<int> e(m, 0);
            e[k] += 1;
            e[l] += 1;
            for (int c = 0; c < m; ++c) v[c].c[L->index.at(e)] = (k == l ? 0.5 : 1.0) * H(c, l);
          }
        }
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

inline std::vector<Taylor> jet_bracket(const std::vector<Taylor>& V, const std::vector<Taylor>& W) {
  const int m = static_cast<int>(V.size());
  std::vector<Taylor> out(m, Taylor(V[0].L));
  for (int c = 0; c < m; ++c) {
    Taylor acc(V[0].L);
    acc.valid = std::min(V[0].valid, W[0].valid) - 1;
    for (int k = 0; k < m; ++k) {
      acc += V[k] * W[c].derivative(k);
      acc -= W[k] * V[c].derivative(k);
    }
    out[c] = acc;
  }
  return out;
}

}  // namespace detail

inline void evaluate_bracket_table(BracketTable& t, const VectorFieldSet& s, const Vec& x) {
  if (t.cached_at && (*t.cached_at - x).norm() == 0.0) return;
  const auto base = detail::base_jets(s, x, t.k0);
  t.cache.assign(t.k0 + 1, {});
  for (int i = 1; i <= s.n_drivers; ++i) t.cache[0].push_back(base[i]);
  for (int k = 0; k < t.k0; ++k) {
    std::map<const BracketExpr*, size_t> parent;
    for (size_t p = 0; p < t.levels[k].size(); ++p) parent[t.levels[k][p].get()] = p;
    for (const auto& e : t.levels[k + 1])
      t.cache[k + 1].push_back(detail::jet_bracket(t.cache[k][parent.at(e->left.get())], base[e->right]));
  }
  t.cached_at = x;
}

inline Vec bracket_value(const BracketTable& t, int level, size_t index) {
  const auto& jet = t.cache[level][index];
  Vec v(static_cast<int>(jet.size()));
  for (int c = 0; c < v.size(); ++c) v(c) = jet[c].value();
  return v;
}

struct HormanderReport {
  std::vector<int> rank_by_level;
  std::optional<int> satisfied_at;
};

inline HormanderReport hormander_rank(const VectorFieldSet& s, const Vec& x, int k0, double svd_tol = 1e-8,
                                      long budget = 100000) {
  require(x.size() == s.state_dim, "hormander_rank: point dimension mismatch");
  BracketTable t = build_bracket_table(s.n_drivers, k0, budget);
  evaluate_bracket_table(t, s, x);
  HormanderReport r;
  std::vector<Vec> cols;
  for (int k = 0; k <= k0; ++k) {
    for (size_t i = 0; i < t.levels[k].size(); ++i) cols.push_back(bracket_value(t, k, i));
    Eigen::MatrixXd M(s.state_dim, static_cast<Eigen::Index>(cols.size()));
    for (size_t c = 0; c < cols.size(); ++c) M.col(static_cast<Eigen::Index>(c)) = cols[c];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const auto& sv = svd.singularValues();
    int rank = 0;
    if (sv.size() > 0 && sv(0) > 0)
      for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > svd_tol * sv(0)) ++rank;
    r.rank_by_level.push_back(rank);
    if (!r.satisfied_at && rank == s.state_dim) r.satisfied_at = k;
  }
  return r;
}

}  // namespace mrl

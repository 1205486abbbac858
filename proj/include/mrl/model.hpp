#pragma once

#include "mrl/core.hpp"
#include "mrl/sphere.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mrl {

class CoefficientFamily {
 public:
  virtual ~CoefficientFamily() = default;
  virtual int dimension() const = 0;
  virtual Mat a(const Vec& x) const = 0;
  // out[k] = d/dx_k a(x)
  virtual void gradient(const Vec& x, std::span<Mat> out) const = 0;
  // out[k*d + l] = d^2/dx_k dx_l a(x)
  virtual void hessian(const Vec& x, std::span<Mat> out) const = 0;
  virtual bool is_constant() const { return false; }
  virtual bool closed_form() const { return true; }
  // Ellipticity bounds implied by the parameters (lambda, Lambda).
  virtual std::pair<double, double> bounds() const = 0;
};

inline double fd_step(const Vec& x) { return 1e-5 * (1.0 + x.cwiseAbs().maxCoeff()); }

namespace families {

class Constant final : public CoefficientFamily {
 public:
  Constant(int d, const std::vector<double>& p) : d_(d), m_(d, d) {
    m_.setZero();
    if (p.size() == 1) {
      m_ = p[0] * Mat::Identity(d, d);
    } else if (static_cast<int>(p.size()) == d) {
      for (int i = 0; i < d; ++i) m_(i, i) = p[i];
    } else if (static_cast<int>(p.size()) == d * d) {
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m_(i, j) = p[i * d + j];
    } else {
      throw ValidationError("constant: expected 1, d or d*d parameters");
    }
  }
  int dimension() const override { return d_; }
  Mat a(const Vec&) const override { return m_; }
  void gradient(const Vec&, std::span<Mat> out) const override {
    for (auto& m : out) m = Mat::Zero(d_, d_);
  }
  void hessian(const Vec&, std::span<Mat> out) const override {
    for (auto& m : out) m = Mat::Zero(d_, d_);
  }
  bool is_constant() const override { return true; }
  std::pair<double, double> bounds() const override {
    Eigen::SelfAdjointEigenSolver<Mat> es(m_);
    return {es.eigenvalues()(0), es.eigenvalues()(d_ - 1)};
  }

 private:
  int d_;
  Mat m_;
};

// a(x) = c0*I + c1*S(x), S_ij = (sin x_i + sin x_j)/2.
class PerturbedIdentity final : public CoefficientFamily {
 public:
  PerturbedIdentity(int d, const std::vector<double>& p) : d_(d) {
    require(p.size() == 2, "perturbed_identity: expected parameters [c0, c1]");
    c0_ = p[0];
    c1_ = p[1];
  }
  int dimension() const override { return d_; }
  Mat a(const Vec& x) const override {
    Mat m(d_, d_);
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j) m(i, j) = c1_ * 0.5 * (std::sin(x(i)) + std::sin(x(j)));
    m.diagonal().array() += c0_;
    return m;
  }
  void gradient(const Vec& x, std::span<Mat> out) const override {
    for (int k = 0; k < d_; ++k) {
      Mat& g = out[k];
      g = Mat::Zero(d_, d_);
      const double c = 0.5 * c1_ * std::cos(x(k));
      for (int j = 0; j < d_; ++j) {
        g(k, j) += c;
        g(j, k) += c;
      }
    }
  }
  void hessian(const Vec& x, std::span<Mat> out) const override {
    for (int k = 0; k < d_; ++k) {
      for (int l = 0; l < d_; ++l) {
        Mat& h = out[k * d_ + l];
        h = Mat::Zero(d_, d_);
        if (k != l) continue;
        const double c = -0.5 * c1_ * std::sin(x(k));
        for (int j = 0; j < d_; ++j) {
          h(k, j) += c;
          h(j, k) += c;
        }
      }
    }
  }
  std::pair<double, double> bounds() const override {
    return {c0_ - d_ * std::abs(c1_), c0_ + d_ * std::abs(c1_)};
  }

 private:
  int d_;
  double c0_, c1_;
};

// d = 1: a(x) = c0 + c1*tanh(x/w), monotone in x.
class Tanh1d final : public CoefficientFamily {
 public:
  explicit Tanh1d(const std::vector<double>& p) {
    require(p.size() == 3, "tanh_1d: expected parameters [c0, c1, w]");
    c0_ = p[0];
    c1_ = p[1];
    w_ = p[2];
    require(w_ > 0, "tanh_1d: width must be positive");
  }
  int dimension() const override { return 1; }
  Mat a(const Vec& x) const override { return Mat::Constant(1, 1, c0_ + c1_ * std::tanh(x(0) / w_)); }
  void gradient(const Vec& x, std::span<Mat> out) const override {
    const double th = std::tanh(x(0) / w_);
    out[0] = Mat::Constant(1, 1, c1_ / w_ * (1 - th * th));
  }
  void hessian(const Vec& x, std::span<Mat> out) const override {
    const double th = std::tanh(x(0) / w_);
    out[0] = Mat::Constant(1, 1, -2.0 * c1_ / (w_ * w_) * th * (1 - th * th));
  }
  std::pair<double, double> bounds() const override { return {c0_ - std::abs(c1_), c0_ + std::abs(c1_)}; }

 private:
  double c0_, c1_, w_;
};

// Black-box coefficient; derivatives by central differences.
class User final : public CoefficientFamily {
 public:
  User(int d, std::function<Mat(const Vec&)> f, double lambda, double Lambda)
      : d_(d), f_(std::move(f)), lambda_(lambda), Lambda_(Lambda) {}
  int dimension() const override { return d_; }
  Mat a(const Vec& x) const override { return f_(x); }
  void gradient(const Vec& x, std::span<Mat> out) const override {
    const double h = fd_step(x);
    for (int k = 0; k < d_; ++k) {
      Vec xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      out[k] = (f_(xp) - f_(xm)) / (2 * h);
    }
  }
  void hessian(const Vec& x, std::span<Mat> out) const override {
    const double h = 1e-4 * (1.0 + x.cwiseAbs().maxCoeff());
    for (int k = 0; k < d_; ++k) {
      for (int l = 0; l < d_; ++l) {
        auto at = [&](double sk, double sl) {
          Vec y = x;
          y(k) += sk * h;
          y(l) += sl * h;
          return f_(y);
        };
        out[k * d_ + l] = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h * h);
      }
    }
  }
  bool closed_form() const override { return false; }
  std::pair<double, double> bounds() const override { return {lambda_, Lambda_}; }

 private:
  int d_;
  std::function<Mat(const Vec&)> f_;
  double lambda_, Lambda_;
};

}  // namespace families

enum class DriftConvention { half_divergence, full_divergence };

inline const char* to_string(DriftConvention c) {
  return c == DriftConvention::half_divergence ? "half_divergence" : "full_divergence";
}

struct DiffusionSpec {
  int d = 0;
  double lambda = 0.0;
  double Lambda = 0.0;
  std::string catalog_id;
  std::vector<double> params;
  std::shared_ptr<const CoefficientFamily> family;
  DriftConvention drift = DriftConvention::half_divergence;
  // Square root of a constant coefficient, computed once.
  std::optional<Mat> constant_sqrt;

  Mat a(const Vec& x) const { return family->a(x); }
  bool is_constant() const { return family->is_constant(); }
};

struct SqrtEigen {
  Mat Q;
  Vec mu;   // square roots of the eigenvalues
  Vec eig;  // eigenvalues of the input
};

inline double asymmetry(const Mat& m) {
  const double scale = std::max(m.norm(), 1e-300);
  return (m - m.transpose()).norm() / scale;
}

inline SqrtEigen sqrt_decompose(const Mat& m, double lambda = 0.0) {
  require(m.rows() == m.cols(), "matrix_sqrt: matrix must be square");
  if (asymmetry(m) > 1e-12) throw ValidationError("matrix_sqrt: input is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  SqrtEigen out{es.eigenvectors(), Vec(m.rows()), es.eigenvalues()};
  const double floor = lambda > 0 ? lambda * (1 - 1e-8) : 0.0;
  if (!(out.eig(0) >= floor) || out.eig(0) <= 0.0)
    throw EllipticityError("matrix_sqrt: eigenvalue " + std::to_string(out.eig(0)) + " below ellipticity floor " +
                           std::to_string(floor));
  out.mu = out.eig.cwiseSqrt();
  return out;
}

inline Mat matrix_sqrt(const Mat& m, double lambda = 0.0) {
  const SqrtEigen s = sqrt_decompose(m, lambda);
  return s.Q * s.mu.asDiagonal() * s.Q.transpose();
}

// Solves A X + X A = C for symmetric A given through its eigen-decomposition.
inline Mat sylvester_sqrt(const SqrtEigen& s, const Mat& C) {
  Mat T = s.Q.transpose() * C * s.Q;
  for (int i = 0; i < T.rows(); ++i)
    for (int j = 0; j < T.cols(); ++j) T(i, j) /= (s.mu(i) + s.mu(j));
  return s.Q * T * s.Q.transpose();
}

inline DiffusionSpec make_diffusion(const std::string& id, int d, const std::vector<double>& params,
                                    std::optional<double> lambda = std::nullopt,
                                    std::optional<double> Lambda = std::nullopt) {
  require(d >= 1 && d <= kMaxDim, "diffusion: dimension out of range [1, " + std::to_string(kMaxDim) + "]");
  DiffusionSpec s;
  s.d = d;
  s.catalog_id = id;
  s.params = params;
  if (id == "constant") {
    s.family = std::make_shared<families::Constant>(d, params);
  } else if (id == "perturbed_identity") {
    s.family = std::make_shared<families::PerturbedIdentity>(d, params);
  } else if (id == "tanh_1d") {
    require(d == 1, "tanh_1d: dimension must be 1");
    s.family = std::make_shared<families::Tanh1d>(params);
  } else {
    throw ValidationError("diffusion: unknown catalog id '" + id + "'");
  }
  auto [lo, hi] = s.family->bounds();
  s.lambda = lambda.value_or(lo);
  s.Lambda = Lambda.value_or(hi);
  require(s.lambda > 0, "diffusion: lambda must be positive (family bound is " + std::to_string(lo) + ")");
  require(s.lambda <= s.Lambda, "diffusion: lambda must not exceed Lambda");
  if (s.family->is_constant()) {
    const Mat m = s.family->a(Vec::Zero(d));
    require(asymmetry(m) <= 1e-12, "constant: coefficient matrix must be symmetric");
    s.constant_sqrt = matrix_sqrt(m, s.lambda);
  }
  return s;
}

inline DiffusionSpec make_user_diffusion(int d, std::function<Mat(const Vec&)> a, double lambda, double Lambda) {
  require(lambda > 0 && lambda <= Lambda, "user diffusion: need 0 < lambda <= Lambda");
  DiffusionSpec s;
  s.d = d;
  s.catalog_id = "user";
  s.lambda = lambda;
  s.Lambda = Lambda;
  s.family = std::make_shared<families::User>(d, std::move(a), lambda, Lambda);
  return s;
}

enum class SqrtMethod { sylvester, finite_diff };

// dA[k] = d/dx_k A(x), A = sqrt(a).
inline std::vector<Mat> sqrt_differential(const DiffusionSpec& spec, const Vec& x,
                                          SqrtMethod method = SqrtMethod::sylvester, double h = 0.0) {
  const int d = spec.d;
  std::vector<Mat> dA(d, Mat::Zero(d, d));
  if (spec.is_constant()) return dA;
  if (method == SqrtMethod::finite_diff) {
    if (h <= 0) h = fd_step(x);
    for (int k = 0; k < d; ++k) {
      Vec xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      dA[k] = (matrix_sqrt(spec.a(xp)) - matrix_sqrt(spec.a(xm))) / (2 * h);
    }
    return dA;
  }
  const SqrtEigen s = sqrt_decompose(spec.a(x), spec.lambda);
  const Mat A = s.Q * s.mu.asDiagonal() * s.Q.transpose();
  std::array<Mat, kMaxDim> grad;
  spec.family->gradient(x, std::span<Mat>(grad.data(), d));
  for (int k = 0; k < d; ++k) {
    dA[k] = sylvester_sqrt(s, grad[k]);
    const double resid = (A * dA[k] + dA[k] * A - grad[k]).norm();
    if (resid > 1e-9 * std::max(1.0, grad[k].norm()))
      throw NumericalDegradation("sqrt_differential: Sylvester residual too large", resid);
  }
  return dA;
}

inline double drift_factor(DriftConvention c) { return c == DriftConvention::half_divergence ? 0.5 : 1.0; }

inline Vec drift_from_a(const DiffusionSpec& spec, const Vec& x, DriftConvention c) {
  const int d = spec.d;
  Vec B = Vec::Zero(d);
  if (spec.is_constant()) return B;
  std::array<Mat, kMaxDim> grad;
  spec.family->gradient(x, std::span<Mat>(grad.data(), d));
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) B(j) += grad[i](i, j);
  return drift_factor(c) * B;
}

inline Vec drift_from_a(const DiffusionSpec& spec, const Vec& x) { return drift_from_a(spec, x, spec.drift); }

// Everything the Ito step and the Jacobian step need at one point.
struct LocalCoefficients {
  Mat A;
  Vec B;
  std::array<Mat, kMaxDim> dA;     // dA[k] = d/dx_k A
  std::array<Mat, kMaxDim> DAcol;  // DAcol[i](j,k) = d/dx_k A_ji, Jacobian of column field A_i
  Mat DB;
  double eig_min = 0.0, eig_max = 0.0;
};

inline LocalCoefficients evaluate_local(const DiffusionSpec& spec, const Vec& x, bool with_flow) {
  const int d = spec.d;
  LocalCoefficients lc;
  if (spec.constant_sqrt) {
    lc.A = *spec.constant_sqrt;
    lc.B = Vec::Zero(d);
    lc.DB = Mat::Zero(d, d);
    for (int k = 0; k < d; ++k) {
      lc.dA[k] = Mat::Zero(d, d);
      lc.DAcol[k] = Mat::Zero(d, d);
    }
    lc.eig_min = spec.lambda;
    lc.eig_max = spec.Lambda;
    return lc;
  }
  const SqrtEigen s = sqrt_decompose(spec.a(x), spec.lambda);
  lc.A = s.Q * s.mu.asDiagonal() * s.Q.transpose();
  lc.eig_min = s.eig(0);
  lc.eig_max = s.eig(d - 1);
  std::array<Mat, kMaxDim> grad;
  spec.family->gradient(x, std::span<Mat>(grad.data(), d));
  lc.B = Vec::Zero(d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) lc.B(j) += grad[i](i, j);
  lc.B *= drift_factor(spec.drift);
  if (!with_flow) return lc;
  for (int k = 0; k < d; ++k) lc.dA[k] = sylvester_sqrt(s, grad[k]);
  for (int i = 0; i < d; ++i) {
    lc.DAcol[i] = Mat(d, d);
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k) lc.DAcol[i](j, k) = lc.dA[k](j, i);
  }
  std::vector<Mat> hess(d * d);
  spec.family->hessian(x, hess);
  lc.DB = Mat::Zero(d, d);
  for (int j = 0; j < d; ++j)
    for (int l = 0; l < d; ++l)
      for (int i = 0; i < d; ++i) lc.DB(j, l) += hess[i * d + l](i, j);
  lc.DB *= drift_factor(spec.drift);
  return lc;
}

inline Mat sqrt_at(const DiffusionSpec& spec, const Vec& x) {
  if (spec.constant_sqrt) return *spec.constant_sqrt;
  return matrix_sqrt(spec.a(x), spec.lambda);
}

struct EllipticityReport {
  double min_rayleigh = 0.0;
  double max_rayleigh = 0.0;
  bool pass = false;
};

inline EllipticityReport check_ellipticity(const DiffusionSpec& spec, const std::vector<Vec>& probes,
                                           const std::vector<Vec>& directions) {
  require(!probes.empty(), "check_ellipticity: empty probe set");
  require(!directions.empty(), "check_ellipticity: empty direction set");
  EllipticityReport r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), false};
  for (const Vec& x : probes) {
    const Mat a = spec.a(x);
    for (const Vec& v : directions) {
      const double q = v.dot(a * v) / v.squaredNorm();
      r.min_rayleigh = std::min(r.min_rayleigh, q);
      r.max_rayleigh = std::max(r.max_rayleigh, q);
    }
  }
  r.pass = r.min_rayleigh >= spec.lambda * (1 - 1e-8) && r.max_rayleigh <= spec.Lambda * (1 + 1e-8);
  return r;
}

enum class Contraction { left_contract, right_contract };

struct Assumption3Report {
  double estimated_CJ = 0.0;
  Vec argmin_point;
  Vec argmin_direction;
  double scan_CJ = 0.0;  // minimum over the supplied directions only
  bool a_constant = false;
};

// |v . dA(x)|^2 for one direction and contraction convention.
inline double contracted_norm2(const std::vector<Mat>& dA, const Vec& v, Contraction c) {
  double s = 0.0;
  for (const Mat& g : dA) s += (c == Contraction::left_contract ? Vec(g.transpose() * v) : Vec(g * v)).squaredNorm();
  return s;
}

inline Assumption3Report check_assumption3(const DiffusionSpec& spec, const std::vector<Vec>& probes,
                                           const std::vector<Vec>& directions,
                                           Contraction c = Contraction::left_contract) {
  require(!probes.empty(), "check_assumption3: empty probe set");
  const int d = spec.d;
  Assumption3Report r;
  r.estimated_CJ = std::numeric_limits<double>::infinity();
  r.scan_CJ = std::numeric_limits<double>::infinity();
  double max_grad = 0.0;
  for (const Vec& x : probes) {
    const std::vector<Mat> dA = sqrt_differential(spec, x);
    // The quadratic form v -> |v . dA|^2 is v^T Q v with Q below; its minimum
    // over unit v is the smallest eigenvalue.
    Mat Q = Mat::Zero(d, d);
    for (const Mat& g : dA) {
      Q += (c == Contraction::left_contract) ? Mat(g * g.transpose()) : Mat(g.transpose() * g);
      max_grad = std::max(max_grad, g.cwiseAbs().maxCoeff());
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(Q);
    const double lo = std::max(0.0, es.eigenvalues()(0));
    if (lo < r.estimated_CJ) {
      r.estimated_CJ = lo;
      r.argmin_point = x;
      r.argmin_direction = es.eigenvectors().col(0);
    }
    for (const Vec& v : directions) r.scan_CJ = std::min(r.scan_CJ, contracted_norm2(dA, v.normalized(), c));
  }
  r.a_constant = spec.is_constant() || max_grad == 0.0;
  if (directions.empty()) r.scan_CJ = r.estimated_CJ;
  return r;
}

}  // namespace mrl

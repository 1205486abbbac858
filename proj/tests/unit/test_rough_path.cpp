#include "mrl/rough_path.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace mrl;

namespace {
SamplePath sampled(int N, int d, const std::function<Eigen::VectorXd(double)>& f) {
  SamplePath p = make_path(uniform_grid(N), d);
  for (int k = 0; k <= N; ++k) {
    const auto v = f(p.grid[k]);
    for (int i = 0; i < d; ++i) p.values[static_cast<size_t>(k) * d + i] = v(i);
  }
  return p;
}

SamplePath brownian(int N, int d, std::uint64_t path) {
  return simulate_X(make_diffusion("constant", d, {1.0}), make_driver(4, path, N, d), Vec::Zero(d));
}

std::vector<std::array<int, 2>> all_pairs(int M) { return holder_pairs(M, true); }
}  // namespace

TEST(MidpointLift, LinePathHasQuadraticSecondLevel) {
  Eigen::Vector3d v(1.0, -2.0, 0.5);
  const auto rp = midpoint_lift(sampled(256, 3, [&](double t) { return Eigen::VectorXd(t * v); }), 4);
  EXPECT_EQ(rp.M(), 64);
  for (const auto& [s, t] : std::vector<std::array<int, 2>>{{0, 64}, {3, 17}, {10, 11}}) {
    const double h = rp.grid[t] - rp.grid[s];
    const Eigen::MatrixXd expect = 0.5 * h * h * v * v.transpose();
    EXPECT_LE((rp.second(s, t) - expect).norm(), 1e-14);
  }
}

TEST(MidpointLift, SymmetricPartIsHalfTensorSquare) {
  for (std::uint64_t p = 0; p < 5; ++p) {
    const auto rp = midpoint_lift(brownian(1024, 3, p), 8);
    EXPECT_LE(symmetry_defect(rp, all_pairs(rp.M())), 1e-10 * lift_scale(rp));
  }
}

TEST(MidpointLift, CircleAreaMatchesPolygonArea) {
  const int N = 1 << 14;
  const auto path = sampled(N, 2, [](double t) {
    return Eigen::Vector2d(std::cos(2 * std::numbers::pi * t), std::sin(2 * std::numbers::pi * t)).eval();
  });
  const auto rp = midpoint_lift(path, 16);
  const auto XX = rp.second(0, rp.M());
  const double levy = 0.5 * (XX(0, 1) - XX(1, 0));
  std::vector<double> x(N + 1), y(N + 1);
  for (int k = 0; k <= N; ++k) {
    x[k] = path(k, 0);
    y[k] = path(k, 1);
  }
  EXPECT_NEAR(levy, oracle::polygon_area(x, y), 1e-12);
  EXPECT_NEAR(levy, std::numbers::pi, 1e-3);
}

TEST(MidpointLift, RejectsNonUniformGridAndBadStride) {
  auto p = brownian(64, 2, 0);
  EXPECT_THROW(midpoint_lift(p, 3), ValidationError);
  p.grid[5] += 1e-3;
  EXPECT_THROW(midpoint_lift(p, 4), ValidationError);
}

TEST(ChenDefect, VanishesOnRandomTriples) {
  for (std::uint64_t p = 0; p < 3; ++p) {
    const auto rp = midpoint_lift(brownian(1 << 12, 2, p), 4);
    EXPECT_LE(chen_defect(rp, random_triples(rp.M(), 1000, p)), 1e-12 * lift_scale(rp));
  }
}

// The storage scheme makes Chen's relation an algebraic identity, so a corrupted entry is
// invisible to it; the geometric identity is what detects such a corruption.
TEST(ChenDefect, CorruptionShowsInSymmetryNotChen) {
  auto rp = midpoint_lift(brownian(1024, 2, 7), 8);
  const double delta = 1e-3;
  rp.XX0[(50 * 2 + 0) * 2 + 0] += delta;
  EXPECT_LE(chen_defect(rp, {{10, 50, 90}, {0, 50, 128}}), 1e-12 * lift_scale(rp));
  EXPECT_NEAR(symmetry_defect(rp, {{10, 50}}), delta, 1e-9);
}

TEST(ChenDefect, PolygonExactLiftAgrees) {
  // Exact iterated integrals of a piecewise-linear path: sum_{k<l} dX_k (x) dX_l + 1/2 sum_k dX_k (x) dX_k.
  const int N = 200;
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n(0, 1);
  SamplePath p = make_path(uniform_grid(N), 2);
  for (size_t i = 2; i < p.values.size(); ++i) p.values[i] = p.values[i - 2] + n(gen) * 0.1;
  const auto rp = midpoint_lift(p, 1);
  Eigen::Matrix2d exact = Eigen::Matrix2d::Zero();
  Eigen::Vector2d before = Eigen::Vector2d::Zero();
  for (int k = 0; k < N; ++k) {
    Eigen::Vector2d dx(p(k + 1, 0) - p(k, 0), p(k + 1, 1) - p(k, 1));
    exact += before * dx.transpose() + 0.5 * dx * dx.transpose();
    before += dx;
  }
  EXPECT_LE((rp.second(0, N) - exact).norm(), 1e-12 * lift_scale(rp));
  EXPECT_LE(chen_defect(rp, random_triples(N, 1000, 1)), 1e-12 * lift_scale(rp));
}

TEST(HolderNorms, LinePathAttainsNormOfDirection) {
  Eigen::Vector2d v(3.0, 4.0);
  const auto rp = midpoint_lift(sampled(64, 2, [&](double t) { return Eigen::VectorXd(t * v); }), 1);
  const auto h = holder_norms(rp, 0.5, true);
  EXPECT_NEAR(h.norm_X_alpha, 5.0, 1e-12);
  EXPECT_NEAR(h.norm_XX_2alpha, 12.5, 1e-12);  // |v|^2/2 at |t-s| = 1
  EXPECT_DOUBLE_EQ(h.rho_alpha, h.norm_X_alpha + h.norm_XX_2alpha);
}

TEST(HolderNorms, ConstantPathIsZero) {
  const auto rp = midpoint_lift(sampled(32, 2, [](double) { return Eigen::Vector2d(1, 2).eval(); }), 1);
  const auto h = holder_norms(rp, 0.4, true);
  EXPECT_EQ(h.norm_X_alpha, 0.0);
  EXPECT_EQ(h.norm_XX_2alpha, 0.0);
}

TEST(HolderNorms, Homogeneity) {
  auto p = brownian(512, 2, 3);
  const auto h1 = holder_norms(midpoint_lift(p, 2), 0.4, true);
  for (auto& v : p.values) v *= -2.5;
  const auto h2 = holder_norms(midpoint_lift(p, 2), 0.4, true);
  EXPECT_NEAR(h2.norm_X_alpha, 2.5 * h1.norm_X_alpha, 1e-12 * h2.norm_X_alpha);
  EXPECT_NEAR(h2.norm_XX_2alpha, 6.25 * h1.norm_XX_2alpha, 1e-12 * h2.norm_XX_2alpha);
}

TEST(HolderNorms, DyadicIsBoundedByExact) {
  const auto rp = midpoint_lift(brownian(1024, 2, 3), 4);
  const auto fast = holder_norms(rp, 0.4), full = holder_norms(rp, 0.4, true);
  EXPECT_LE(fast.norm_X_alpha, full.norm_X_alpha);
  EXPECT_GT(fast.norm_X_alpha, 0.0);
  EXPECT_THROW(holder_norms(rp, 0.7), ValidationError);
}

namespace {
// Integrand with values in L(R^d, R^m) given by g(x_k) and its derivative tensor.
ControlledPath integrand(const RoughPath& rp, int m,
                         const std::function<void(const Eigen::VectorXd&, double*, double*)>& g) {
  ControlledPath Y = make_controlled(rp.grid, m * rp.dim, rp.dim);
  for (int k = 0; k <= rp.M(); ++k) {
    Eigen::VectorXd x(rp.dim);
    for (int i = 0; i < rp.dim; ++i) x(i) = rp.x(k, i);
    g(x, Y.Y.data() + static_cast<size_t>(k) * m * rp.dim, Y.Yp.data() + static_cast<size_t>(k) * m * rp.dim * rp.dim);
  }
  return Y;
}
}  // namespace

TEST(RoughIntegral, ConstantIntegrand) {
  const auto rp = midpoint_lift(brownian(512, 2, 1), 4);
  const double L[4] = {1.0, -2.0, 0.5, 3.0};
  const auto Y = integrand(rp, 2, [&](const Eigen::VectorXd&, double* y, double*) { std::copy(L, L + 4, y); });
  const auto Z = rough_integral(Y, rp, 2);
  for (int k = 0; k <= rp.M(); k += 7) {
    EXPECT_NEAR(Z.y(k, 0), L[0] * rp.inc(0, k, 0) + L[1] * rp.inc(0, k, 1), 1e-12);
    EXPECT_NEAR(Z.y(k, 1), L[2] * rp.inc(0, k, 0) + L[3] * rp.inc(0, k, 1), 1e-12);
    EXPECT_EQ(Z.yp(k, 1, 0), L[2]);
  }
}

TEST(RoughIntegral, PathAgainstItselfGivesSecondLevel) {
  const int d = 2;
  const auto rp = midpoint_lift(brownian(1024, d, 2), 8);
  // Y_t : v -> X_t (x) v, i.e. component (a,b),i equals X^a delta_{bi}; Y' has entry ((a,b),i),j = delta_{aj} delta_{bi}.
  const auto Y = integrand(rp, d * d, [&](const Eigen::VectorXd& x, double* y, double* yp) {
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        for (int i = 0; i < d; ++i) {
          y[(a * d + b) * d + i] = b == i ? x(a) : 0.0;
          for (int j = 0; j < d; ++j) yp[((a * d + b) * d + i) * d + j] = (b == i && a == j) ? 1.0 : 0.0;
        }
  });
  const auto Z = rough_integral(Y, rp, d * d);
  for (int k = 0; k <= rp.M(); k += 5)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        EXPECT_NEAR(Z.y(k, a * d + b), rp.area(0, k, a, b) + rp.x(0, a) * rp.inc(0, k, b), 1e-12);
}

TEST(RoughIntegral, LinearInIntegrand) {
  const auto rp = midpoint_lift(brownian(512, 2, 5), 4);
  auto g1 = integrand(rp, 1, [](const Eigen::VectorXd& x, double* y, double* yp) {
    y[0] = std::sin(x(0));
    y[1] = x(1) * x(1);
    yp[0] = std::cos(x(0));
    yp[1] = 0;
    yp[2] = 0;
    yp[3] = 2 * x(1);
  });
  auto g2 = integrand(rp, 1, [](const Eigen::VectorXd& x, double* y, double* yp) {
    y[0] = x(0) * x(1);
    y[1] = 1.0;
    yp[0] = x(1);
    yp[1] = x(0);
    yp[2] = 0;
    yp[3] = 0;
  });
  auto sum = g1;
  for (size_t i = 0; i < sum.Y.size(); ++i) sum.Y[i] = 2 * g1.Y[i] - 3 * g2.Y[i];
  for (size_t i = 0; i < sum.Yp.size(); ++i) sum.Yp[i] = 2 * g1.Yp[i] - 3 * g2.Yp[i];
  const auto z1 = rough_integral(g1, rp, 1), z2 = rough_integral(g2, rp, 1), zs = rough_integral(sum, rp, 1);
  for (int k = 0; k <= rp.M(); ++k) EXPECT_NEAR(zs.y(k, 0), 2 * z1.y(k, 0) - 3 * z2.y(k, 0), 1e-12);
  EXPECT_TRUE(std::isfinite(z1.integral_remainder_3a));
}

TEST(RoughIntegral, SmoothPathMatchesFineStieltjesSum) {
  const int N = 1 << 14;
  const auto path = sampled(N, 2, [](double t) { return Eigen::Vector2d(std::sin(3 * t), t * t).eval(); });
  // Integrand f(x) = (x1^2, x0 x1) as a 1 x 2 map; int f(X) dX by a fine midpoint Stieltjes sum.
  double fine = 0.0;
  for (int k = 0; k < N; ++k) {
    const double x0 = 0.5 * (path(k, 0) + path(k + 1, 0)), x1 = 0.5 * (path(k, 1) + path(k + 1, 1));
    fine += x1 * x1 * (path(k + 1, 0) - path(k, 0)) + x0 * x1 * (path(k + 1, 1) - path(k, 1));
  }
  std::vector<double> err;
  for (int stride : {512, 256, 128, 64}) {
    const auto rp = midpoint_lift(path, stride);
    const auto Y = integrand(rp, 1, [](const Eigen::VectorXd& x, double* y, double* yp) {
      y[0] = x(1) * x(1);
      y[1] = x(0) * x(1);
      yp[0] = 0;
      yp[1] = 2 * x(1);
      yp[2] = x(1);
      yp[3] = x(0);
    });
    err.push_back(std::abs(rough_integral(Y, rp, 1).y(rp.M(), 0) - fine));
  }
  for (size_t i = 0; i + 1 < err.size(); ++i) EXPECT_GT(err[i] / err[i + 1], 2.0) << i;
}

TEST(RoughIntegral, GridMismatchRejected) {
  const auto rp = midpoint_lift(brownian(512, 2, 5), 4);
  const auto other = midpoint_lift(brownian(512, 2, 5), 8);
  const auto Y = make_controlled(other.grid, 2, 2);
  EXPECT_THROW(rough_integral(Y, rp, 1), ValidationError);
}

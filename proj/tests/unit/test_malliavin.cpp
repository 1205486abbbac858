#include "mrl/malliavin.hpp"

#include <gtest/gtest.h>

using namespace mrl;

namespace {
struct Run {
  DiffusionSpec spec;
  VectorFieldSet fields;
  BrownianDriver drv;
  FlowBundle flow;
  RoughPath rp;
  ControlledPath Y;
  JacobianPair JY;
};

Run pipeline(const DiffusionSpec& spec, const VectorFieldSet& f, const BrownianDriver& drv, int stride, const Vec& x0,
             const Vec& y0) {
  Run r{spec, f, drv, {}, {}, {}, {}};
  r.flow = simulate_flow(spec, drv, simulate_X(spec, drv, x0));
  r.rp = midpoint_lift(r.flow.X, stride);
  r.Y = solve_rde(f, r.rp, y0);
  r.JY = solve_jacobian_rde(f, r.rp, r.Y);
  return r;
}

Vec v1(double a) {
  Vec v(1);
  v << a;
  return v;
}
}  // namespace

TEST(MalliavinX, IdentityCoefficientGivesIndicator) {
  const auto spec = make_diffusion("constant", 2, {1.0});
  const auto drv = make_driver(1, 0, 64, 2);
  const auto F = simulate_flow(spec, drv, simulate_X(spec, drv, Vec::Zero(2)));
  const auto D = malliavin_X(F, spec);
  for (int t = 0; t <= 64; t += 3)
    for (int r = 0; r <= 64; r += 5)
      EXPECT_EQ((D.at(r, t) - (r <= t ? Mat(Mat::Identity(2, 2)) : Mat(Mat::Zero(2, 2)))).norm(), 0.0) << r << " " << t;
}

TEST(MalliavinX, DiagonalEqualsSquareRoot) {
  const auto spec = make_diffusion("perturbed_identity", 2, {2.0, 0.5});
  const auto drv = make_driver(2, 0, 256, 2);
  const auto F = simulate_flow(spec, drv, simulate_X(spec, drv, Vec::Zero(2)));
  const auto D = malliavin_X(F, spec, 2);
  for (int r = 0; r <= D.M(); ++r) EXPECT_LE((D.at(r, r) - sqrt_at(spec, F.X.at(2 * r))).norm(), 1e-10);
  EXPECT_EQ(D.at(10, 9).norm(), 0.0);
}

TEST(MalliavinX, DirectionalDerivativeOracle) {
  const auto spec = make_diffusion("perturbed_identity", 2, {2.0, 0.5});
  const int N = 1 << 10;
  const double u = 0.5;
  for (int j = 0; j < 2; ++j) {
    const auto drv = make_driver(6, 3, N, 2);
    const auto X = simulate_X(spec, drv, Vec::Zero(2));
    const auto D = malliavin_X(simulate_flow(spec, drv, X), spec);
    Vec pred = Vec::Zero(2);
    for (int r = 0; r < N && D.grid[r] < u; ++r) pred += D.at(r, N).col(j) * (D.grid[r + 1] - D.grid[r]);
    auto quotient = [&](double eps) {
      return Vec((simulate_X(spec, perturbed(drv, eps, u, j), Vec::Zero(2)).at(N) - X.at(N)) / eps);
    };
    const Vec rich = 2 * quotient(5e-4) - quotient(1e-3);
    EXPECT_LE((rich - pred).norm(), 0.01 * pred.norm()) << "direction " << j;
  }
}

TEST(MalliavinY, GaussianCaseReducesToFlowOfFields) {
  const auto r = pipeline(make_diffusion("constant", 2, {1.0}), trig_fields(2, {0.5, 0.3}), make_driver(3, 1, 1 << 10, 2), 4,
                          Vec::Zero(2), Vec::Zero(2));
  const auto D = malliavin_Y(r.fields, r.rp, r.Y, r.JY, r.flow, r.spec);
  double worst = 0;
  for (int t = 0; t <= D.M(); t += 17)
    for (int rr = 0; rr <= t; rr += 3) {
      Mat V(2, 2);
      for (int i = 0; i < 2; ++i) V.col(i) = r.fields.driver(i).value(r.Y.value(rr));
      worst = std::max(worst, (D.at(rr, t) - r.JY.fwd(t) * r.JY.inv(rr) * V).norm());
    }
  EXPECT_LE(worst, 1e-12);
  EXPECT_EQ(D.at(5, 4).norm(), 0.0);
}

TEST(MalliavinY, DirectionalDerivativeOracle) {
  const auto spec = make_diffusion("perturbed_identity", 2, {2.0, 0.5});
  const auto f = trig_fields(2, {0.5, 0.3});
  const int N = 1 << 12, stride = 4;
  const double u = 0.5;
  const auto drv = make_driver(9, 2, N, 2);
  const auto r = pipeline(spec, f, drv, stride, Vec::Zero(2), Vec::Zero(2));
  const auto F = malliavin_Y_factors(f, r.rp, r.Y, r.JY, r.flow, spec);
  const int M = r.rp.M();
  for (int j = 0; j < 2; ++j) {
    Vec pred = Vec::Zero(2);
    for (int k = 0; k < M && F.grid[k] < u; ++k) pred += F.at(k, M).col(j) * (F.grid[k + 1] - F.grid[k]);
    auto quotient = [&](double eps) {
      const auto X = simulate_X(spec, perturbed(drv, eps, u, j), Vec::Zero(2));
      return Vec((solve_rde(f, midpoint_lift(X, stride), Vec::Zero(2)).value(M) - r.Y.value(M)) / eps);
    };
    const Vec rich = 2 * quotient(5e-4) - quotient(1e-3);
    EXPECT_LE((rich - pred).norm(), 0.02 * pred.norm()) << "direction " << j;
  }
}

TEST(FactorizedVsDirect, ConstantCoefficient) {
  const auto r = pipeline(make_diffusion("constant", 2, {1.5, 0.7}), trig_fields(2, {0.5, 0.3}), make_driver(3, 2, 256, 2), 4,
                          Vec::Zero(2), Vec::Zero(2));
  const auto F = malliavin_Y_factors(r.fields, r.rp, r.Y, r.JY, r.flow, r.spec);
  EXPECT_LE(factorized_vs_direct_check(F, r.fields, r.rp, r.Y, r.flow, r.spec, {0, 7, 30, 64}), 1e-10);
}

TEST(FactorizedVsDirect, CatalogDiffusion) {
  const auto r = pipeline(make_diffusion("perturbed_identity", 2, {2.0, 0.5}), trig_fields(2, {0.5, 0.3}),
                          make_driver(3, 3, 1 << 10, 2), 4, Vec::Zero(2), Vec::Zero(2));
  const auto F = malliavin_Y_factors(r.fields, r.rp, r.Y, r.JY, r.flow, r.spec);
  EXPECT_LE(factorized_vs_direct_check(F, r.fields, r.rp, r.Y, r.flow, r.spec, {0, 1, 50, 128, 255, 256}), 1e-8);
}

TEST(FactorizedVsDirect, DetectsCorruptedInverseFlow) {
  auto r = pipeline(make_diffusion("perturbed_identity", 2, {2.0, 0.5}), trig_fields(2, {0.5, 0.3}),
                    make_driver(3, 3, 1 << 10, 2), 4, Vec::Zero(2), Vec::Zero(2));
  const double delta = 1e-3;
  const size_t at = static_cast<size_t>(50 * 4) * 4;
  r.flow.J_inv[at] += delta;
  const auto F = malliavin_Y_factors(r.fields, r.rp, r.Y, r.JY, r.flow, r.spec);
  const double gap = factorized_vs_direct_check(F, r.fields, r.rp, r.Y, r.flow, r.spec, {50});
  EXPECT_GT(gap, delta / 10);
  EXPECT_LT(gap, delta * 10);
}

TEST(ReducedMatrix, AdditiveIdentityCaseIsTimesIdentity) {
  const auto r = pipeline(make_diffusion("constant", 2, {1.0}), coordinate_fields(2), make_driver(3, 4, 256, 2), 4,
                          Vec::Zero(2), Vec::Zero(2));
  const auto D = malliavin_Y(r.fields, r.rp, r.Y, r.JY, r.flow, r.spec);
  for (int t : {16, 40, 64}) {
    const auto P = reduced_matrix(D, r.JY, t);
    EXPECT_LE((P.Gamma - r.rp.grid[t] * Mat::Identity(2, 2)).norm(), 1e-13);
    EXPECT_NEAR(P.lambda_min_C, r.rp.grid[t], 1e-13);
  }
}

TEST(ReducedMatrix, ScalarLinearClosedForm) {
  const auto r = pipeline(make_diffusion("constant", 1, {1.0}), linear_fields(1, 1, {0.0, 1.0}), make_driver(3, 5, 1024, 1),
                          4, v1(0.0), v1(1.5));
  const auto D = malliavin_Y(r.fields, r.rp, r.Y, r.JY, r.flow, r.spec);
  for (int t : {32, 128, 256}) {
    const double expect = r.Y.y(t, 0) * r.Y.y(t, 0) * r.rp.grid[t];
    EXPECT_NEAR(reduced_matrix(D, r.JY, t).Gamma(0, 0), expect, 1e-10 * expect);
  }
}

TEST(ReducedMatrix, TwoRoutesAgreeAndArePsd) {
  const auto r = pipeline(make_diffusion("perturbed_identity", 2, {2.0, 0.5}), trig_fields(2, {0.5, 0.3}),
                          make_driver(3, 6, 1 << 10, 2), 4, Vec::Zero(2), Vec::Zero(2));
  const auto F = malliavin_Y_factors(r.fields, r.rp, r.Y, r.JY, r.flow, r.spec);
  const auto D = materialize(F);
  for (int t : {64, 200, 256}) {
    const auto P = reduced_matrix(D, r.JY, t);
    const auto Q = reduced_matrix(F, t);
    const Mat G = malliavin_matrix_direct(D, t);
    EXPECT_LE((P.Gamma - G).norm(), 1e-8 * G.norm());
    EXPECT_LE((Q.C - P.C).norm(), 1e-10 * P.C.norm());
    EXPECT_GE(P.lambda_min_C, -1e-10 * P.trace_C);
    EXPECT_GE(P.lambda_min_Gamma, -1e-10 * P.Gamma.trace());
    EXPECT_LE((P.C - P.C.transpose()).norm(), 0.0);
  }
}

TEST(ReducedMatrix, QuadratureRefinementBand) {
  const auto spec = make_diffusion("perturbed_identity", 2, {2.0, 0.5});
  const auto f = trig_fields(2, {0.5, 0.3});
  Vec v(2);
  v << 0.6, 0.8;
  double worst = 0;
  for (std::uint64_t p = 0; p < 5; ++p) {
    const auto drv = make_driver(12, p, 1 << 14, 2);
    double q[2];
    for (int s = 0; s < 2; ++s) {
      const auto r = pipeline(spec, f, drv, s == 0 ? 32 : 16, Vec::Zero(2), Vec::Zero(2));
      const auto F = malliavin_Y_factors(f, r.rp, r.Y, r.JY, r.flow, spec);
      q[s] = v.dot(reduced_matrix(F, r.rp.M()).C * v);
    }
    worst = std::max(worst, std::abs(q[1] / q[0] - 1));
  }
  EXPECT_LE(worst, 0.02);
}

TEST(FvDecomposition, ConstantFields) {
  const auto r = pipeline(make_diffusion("perturbed_identity", 2, {2.0, 0.5}), constant_fields(2, 2, {0.1, 0.2, 1, 0, 0.5, 1}),
                          make_driver(3, 7, 512, 2), 4, Vec::Zero(2), Vec::Zero(2));
  Vec v(2);
  v << 0.6, -0.8;
  EXPECT_LE(fv_decomposition_check(r.fields, r.rp, r.Y, r.JY, v).max_defect, 1e-12);
}

TEST(FvDecomposition, CommutingLinearFields) {
  // Diagonal M_1, M_2 commute; J^Y = exp(M_1 X^1 + M_2 X^2).
  const auto f = linear_fields(2, 2, {0, 0, 0, 0, 0.5, 0, 0, -0.3, 0.2, 0, 0, 0.4});
  const auto r = pipeline(make_diffusion("perturbed_identity", 2, {2.0, 0.5}), f, make_driver(3, 8, 1 << 14, 2), 16,
                          Vec::Zero(2), Vec::Constant(2, 1.0));
  const int M = r.rp.M();
  const double e0 = std::exp(0.5 * r.rp.inc(0, M, 0) + 0.2 * r.rp.inc(0, M, 1));
  const double e1 = std::exp(-0.3 * r.rp.inc(0, M, 0) + 0.4 * r.rp.inc(0, M, 1));
  EXPECT_NEAR(r.JY.fwd(M)(0, 0), e0, 2e-3 * e0);
  EXPECT_NEAR(r.JY.fwd(M)(1, 1), e1, 2e-3 * e1);
  Vec v(2);
  v << 0.6, 0.8;
  EXPECT_LE(fv_decomposition_check(r.fields, r.rp, r.Y, r.JY, v).max_defect, 2e-3);
}

TEST(FvDecomposition, HormanderPair) {
  const auto r = pipeline(make_diffusion("constant", 2, {1.0}), hormander_pair(), make_driver(3, 9, 1 << 14, 2), 1,
                          Vec::Zero(2), Vec::Zero(2));
  Vec v(2);
  v << 0.6, 0.8;
  const auto c = fv_decomposition_check(r.fields, r.rp, r.Y, r.JY, v);
  EXPECT_LE(c.max_defect, 5e-3);
  EXPECT_THROW(fv_decomposition_check(r.fields, r.rp, r.Y, r.JY, Vec::Constant(2, 1.0)), ValidationError);
}

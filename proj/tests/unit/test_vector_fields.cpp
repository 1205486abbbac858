#include "mrl/sphere.hpp"
#include "mrl/vector_fields.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mrl;

namespace {
Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}
}  // namespace

TEST(LieBracket, SelfBracketVanishes) {
  const auto s = trig_fields(2, {0.4, 0.3});
  for (const Vec& x : probe_box(2, 1.0, 4)) EXPECT_LT(lie_bracket(s.driver(0), s.driver(0), x).norm(), 1e-15);
}

TEST(LieBracket, HandComputedPair) {
  const auto s = hormander_pair();
  const Vec b = lie_bracket(s.driver(0), s.driver(1), v2(0.7, -0.2));
  EXPECT_DOUBLE_EQ(b(0), 0.0);
  EXPECT_DOUBLE_EQ(b(1), 1.0);
}

TEST(LieBracket, ConstantFieldsCommute) {
  const auto s = constant_fields(2, 2, {0.1, 0.2, 1.0, -1.0, 3.0, 0.5});
  EXPECT_EQ(lie_bracket(s.driver(0), s.driver(1), v2(1, 1)).norm(), 0.0);
}

TEST(LieBracket, BilinearAndAntisymmetric) {
  const auto s = trig_fields(2, {0.4, 0.3});
  const auto& V = s.driver(0);
  const auto& W = s.driver(1);
  const auto& U = s.drift();
  // a V + b U as a field
  const double a = 0.7, b = -1.3;
  VectorField S = V;
  S.value = [&](const Vec& y) { return Vec(a * V.value(y) + b * U.value(y)); };
  S.jacobian = [&](const Vec& y) { return Mat(a * V.jacobian(y) + b * U.jacobian(y)); };
  for (const Vec& x : probe_box(2, 1.5, 4)) {
    EXPECT_LT((lie_bracket(V, W, x) + lie_bracket(W, V, x)).norm(), 1e-15);
    const Vec lhs = lie_bracket(S, W, x);
    const Vec rhs = a * lie_bracket(V, W, x) + b * lie_bracket(U, W, x);
    EXPECT_LT((lhs - rhs).norm(), 1e-14);
  }
}

TEST(VectorFieldSet, CatalogJacobiansMatchFiniteDifferences) {
  for (const auto& s : {trig_fields(3, {0.5, 0.2}), hormander_pair(), coordinate_fields(2, {0.3, -0.1}),
                        linear_fields(2, 1, {0, 1, -1, 0, 0.5, 0.2, 0.1, 0.3})}) {
    const auto r = check_field_jacobians(s, probe_box(s.state_dim, 1.0, 3));
    EXPECT_LT(r.max_error, 1e-6) << s.catalog_id;
    EXPECT_LT(r.max_second_error, 1e-6) << s.catalog_id;
  }
}

TEST(VectorFieldSet, TaylorJetsAgreeWithClosedForms) {
  const auto s = trig_fields(2, {0.5, 0.2});
  auto L = TaylorLayout::get(2, 2);
  const Vec x = v2(0.3, -1.1);
  std::vector<Taylor> y{Taylor::variable(L, 0, x(0)), Taylor::variable(L, 1, x(1))};
  for (const auto& V : s.fields) {
    std::vector<Taylor> out(2, Taylor(L));
    V.taylor(y, out);
    const Mat J = V.jacobian(x);
    for (int c = 0; c < 2; ++c) {
      EXPECT_NEAR(out[c].value(), V.value(x)(c), 1e-15);
      EXPECT_NEAR(out[c].coeff({1, 0}), J(c, 0), 1e-15);
      EXPECT_NEAR(out[c].coeff({0, 1}), J(c, 1), 1e-15);
      EXPECT_NEAR(2 * out[c].coeff({2, 0}), V.jacobian_derivative(x, Vec::Unit(2, 0))(c, 0), 1e-15);
      EXPECT_NEAR(out[c].coeff({1, 1}), V.jacobian_derivative(x, Vec::Unit(2, 0))(c, 1), 1e-15);
    }
  }
}

TEST(BracketTable, LevelSizesGrowByDPlusOne) {
  const auto t = build_bracket_table(3, 3);
  ASSERT_EQ(t.levels.size(), 4u);
  EXPECT_EQ(t.levels[0].size(), 3u);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(t.levels[k + 1].size(), 4 * t.levels[k].size());
  EXPECT_EQ(t.levels[1][1]->str(), "[V1,V1]");
  EXPECT_EQ(t.levels[1][0]->str(), "[V1,V0]");
}

TEST(BracketTable, BudgetExceededIsResourceError) {
  EXPECT_THROW(build_bracket_table(4, 8, 1000), ResourceError);
}

TEST(BracketTable, SecondLevelMatchesDirectFormula) {
  // [[V1,V2],V1] at x via bracket_local on the inner bracket.
  const auto s = trig_fields(2, {0.5, 0.2});
  const Vec x = v2(0.4, 0.9);
  BracketTable t = build_bracket_table(2, 2);
  evaluate_bracket_table(t, s, x);
  const BracketLocal inner = bracket_local(s.driver(0), s.driver(1), x);
  const auto& V1 = s.driver(0);
  const Vec expected = V1.jacobian(x) * inner.value - inner.jacobian * V1.value(x);
  // level 2 index of [[V1,V2],V1]: parent [V1,V2] is level-1 index 2, child slot 1
  size_t idx = 0;
  for (; idx < t.levels[2].size(); ++idx)
    if (t.levels[2][idx]->str() == "[[V1,V2],V1]") break;
  ASSERT_LT(idx, t.levels[2].size());
  EXPECT_LT((bracket_value(t, 2, idx) - expected).norm(), 1e-13);
}

TEST(HormanderRank, SpanningFields) {
  const auto r = hormander_rank(coordinate_fields(2), v2(0, 0), 2);
  EXPECT_EQ(r.rank_by_level, (std::vector<int>{2, 2, 2}));
  EXPECT_EQ(r.satisfied_at, 0);
}

TEST(HormanderRank, PairNeedsOneBracket) {
  const auto r = hormander_rank(hormander_pair(), v2(0, 0), 2);
  EXPECT_EQ(r.rank_by_level, (std::vector<int>{1, 2, 2}));
  EXPECT_EQ(r.satisfied_at, 1);
}

TEST(HormanderRank, ZeroFieldsHaveRankZero) {
  const auto r = hormander_rank(constant_fields(2, 2, std::vector<double>(6, 0.0)), v2(1, 1), 3);
  EXPECT_EQ(r.rank_by_level, (std::vector<int>{0, 0, 0, 0}));
  EXPECT_FALSE(r.satisfied_at.has_value());
}

TEST(HormanderRank, DegeneratePairNeverSpans) {
  const auto r = hormander_rank(degenerate_pair(), v2(0.3, 0.2), 4);
  for (int k : r.rank_by_level) EXPECT_EQ(k, 1);
}

TEST(HormanderRank, MonotoneInLevel) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = trig_fields(3, {u(gen), u(gen)});
    Vec x(3);
    x << u(gen), u(gen), u(gen);
    const auto r = hormander_rank(s, x, 3);
    for (size_t k = 1; k < r.rank_by_level.size(); ++k) EXPECT_GE(r.rank_by_level[k], r.rank_by_level[k - 1]);
  }
}

TEST(HormanderRank, UserFieldsUpToSecondLevel) {
  VectorFieldSet s{2, 2, "user", {}, {}};
  s.fields.push_back(make_user_field("V0", 2, [](const Vec&) { return Vec(Vec::Zero(2)); }));
  s.fields.push_back(make_user_field("V1", 2, [](const Vec&) { return Vec(Vec::Unit(2, 0)); }));
  // V2 = (0, y1^2 / 2): first bracket vanishes at the origin, the second does not.
  s.fields.push_back(make_user_field("V2", 2, [](const Vec& y) { return v2(0.0, 0.5 * y(0) * y(0)); }));
  const auto r = hormander_rank(s, v2(0, 0), 2);
  EXPECT_EQ(r.rank_by_level, (std::vector<int>{1, 1, 2}));
  EXPECT_THROW(hormander_rank(s, v2(0, 0), 3), ValidationError);
}

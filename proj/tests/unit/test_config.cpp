#include "mrl/config.hpp"

#include <gtest/gtest.h>

using namespace mrl;

namespace {
json minimal() {
  return json::parse(R"({
    "version": 1,
    "grid": {"N": 256, "N_coarse": 64},
    "diffusion": {"catalog": "constant", "d": 2, "params": [1.0]},
    "fields": {"catalog": "hormander_pair"},
    "run": {"n_paths": 10, "seed": 3}
  })");
}

std::string error_of(const json& j) {
  try {
    config_from_json(j);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}
}  // namespace

TEST(Config, MinimalDocumentGetsDefaults) {
  const auto c = config_from_json(minimal());
  EXPECT_EQ(c.plan.N, 256);
  EXPECT_EQ(c.plan.stride(), 4);
  EXPECT_EQ(c.plan.y0, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(c.plan.probe_v, (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(c.plan.x0.size(), 2u);
  EXPECT_EQ(c.out_dir, "out");
}

TEST(Config, MissingRequiredFieldIsNamed) {
  auto j = minimal();
  j["run"].erase("n_paths");
  EXPECT_NE(error_of(j).find("run.n_paths"), std::string::npos);
  j = minimal();
  j.erase("version");
  EXPECT_NE(error_of(j).find("version"), std::string::npos);
  j = minimal();
  j["version"] = 2;
  EXPECT_NE(error_of(j).find("version"), std::string::npos);
}

TEST(Config, UnknownKeysAreRejected) {
  auto j = minimal();
  j["grid"]["Nfine"] = 3;
  EXPECT_NE(error_of(j).find("grid.Nfine"), std::string::npos);
  j = minimal();
  j["extra"] = 1;
  EXPECT_NE(error_of(j).find("extra"), std::string::npos);
  j = minimal();
  j["estimators"]["smallball"]["window"] = 1;
  EXPECT_NE(error_of(j).find("estimators.smallball.window"), std::string::npos);
}

TEST(Config, RangesAreEnforced) {
  for (const char* o : {"estimators.theta=0.5", "estimators.theta=1", "estimators.k=0", "estimators.k=1",
                        "grid.N=300", "grid.N_coarse=3", "run.n_paths=0", "diffusion.lambda=2",
                        "grid.t=0.3", "estimators.alpha=0.3", "diffusion.scheme=\"rk4\"", "grid.N=\"big\""}) {
    auto j = minimal();
    apply_override(j, o);
    EXPECT_THROW(config_from_json(j), ValidationError) << o;
  }
}

TEST(Config, OverridesUseDotPaths) {
  auto j = minimal();
  apply_override(j, "run.seed=99");
  apply_override(j, "estimators.eps_grid=[0.5,0.1]");
  apply_override(j, "estimators.smallball.bridge=false");
  apply_override(j, "fields.catalog=degenerate_pair");
  const auto c = config_from_json(j);
  EXPECT_EQ(c.plan.seed, 99u);
  EXPECT_EQ(c.plan.eps_grid, (std::vector<double>{0.5, 0.1}));
  EXPECT_FALSE(c.plan.bridge);
  EXPECT_EQ(c.plan.fields_id, "degenerate_pair");
  EXPECT_THROW(apply_override(j, "novalue"), ValidationError);
  EXPECT_THROW(apply_override(j, "run.seed.x=1"), ValidationError);
}

TEST(Config, HashIgnoresOutputAndTracksPlan) {
  auto a = minimal(), b = minimal();
  b["output"] = {{"dir", "elsewhere"}};
  EXPECT_EQ(config_hash(config_from_json(a).plan), config_hash(config_from_json(b).plan));
  apply_override(b, "run.seed=4");
  EXPECT_NE(config_hash(config_from_json(a).plan), config_hash(config_from_json(b).plan));
  // Spelling out a default does not change the plan.
  apply_override(a, "estimators.theta=0.7");
  EXPECT_EQ(config_hash(config_from_json(a).plan), config_hash(config_from_json(minimal()).plan));
}

TEST(Config, CanonicalFormRoundTrips) {
  const auto p = config_from_json(minimal()).plan;
  const auto again = config_from_json(plan_to_json(p)).plan;
  EXPECT_EQ(plan_to_json(p).dump(), plan_to_json(again).dump());
}

TEST(Config, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

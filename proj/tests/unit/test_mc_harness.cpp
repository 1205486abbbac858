#include "mrl/mc_harness.hpp"
#include "mrl/pipeline.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace mrl;
namespace fs = std::filesystem;

namespace {

HarnessOptions options(std::vector<std::string> cols, int workers = 1) {
  HarnessOptions o;
  o.workers = workers;
  o.batch = 16;
  o.plan_id = "test-plan";
  o.columns = std::move(cols);
  return o;
}

// Cheap deterministic path function: values depend on the index only.
PathSummary toy(long i) {
  std::mt19937_64 g(static_cast<std::uint64_t>(i) * 7919 + 1);
  std::normal_distribution<double> n(0, 1);
  return PathSummary{0, PathStatus::ok, {n(g), std::exp(n(g))}, ""};
}

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mrl_harness_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const auto f = dir / name;
  fs::remove(f);
  return f;
}

void expect_same(const RunResult& a, const RunResult& b) {
  ASSERT_EQ(a.summaries.size(), b.summaries.size());
  for (size_t k = 0; k < a.summaries.size(); ++k) {
    EXPECT_EQ(a.summaries[k].index, b.summaries[k].index);
    EXPECT_EQ(a.summaries[k].status, b.summaries[k].status);
    ASSERT_EQ(a.summaries[k].values.size(), b.summaries[k].values.size());
    for (size_t c = 0; c < a.summaries[k].values.size(); ++c) {
      const double x = a.summaries[k].values[c], y = b.summaries[k].values[c];
      if (std::isnan(x)) {
        EXPECT_TRUE(std::isnan(y));
      } else {
        EXPECT_EQ(x, y);
      }
    }
  }
  EXPECT_EQ(a.aggregate.n_ok, b.aggregate.n_ok);
  for (size_t c = 0; c < a.aggregate.stats.size(); ++c) {
    EXPECT_EQ(a.aggregate.stats[c].sum.value(), b.aggregate.stats[c].sum.value());
    EXPECT_EQ(a.aggregate.stats[c].sorted, b.aggregate.stats[c].sorted);
  }
}

}  // namespace

TEST(NeumaierSum, RecoversCancelledTerms) {
  NeumaierSum s;
  for (double v : {1e16, 1.0, -1e16}) s.add(v);
  EXPECT_EQ(s.value(), 1.0);
}

TEST(RunPlan, SinglePath) {
  const auto r = run_plan(1, toy, options({"a", "b"}));
  ASSERT_EQ(r.summaries.size(), 1u);
  const auto ref = toy(0);
  EXPECT_EQ(r.aggregate.n_ok, 1);
  EXPECT_EQ(r.aggregate["a"].mean(), ref.values[0]);
  EXPECT_EQ(r.aggregate["b"].min, ref.values[1]);
  EXPECT_EQ(r.aggregate["b"].max, ref.values[1]);
  EXPECT_TRUE(r.complete);
}

TEST(RunPlan, WorkerCountDoesNotChangeResults) {
  const auto a = run_plan(200, toy, options({"a", "b"}, 1));
  const auto b = run_plan(200, toy, options({"a", "b"}, 8));
  expect_same(a, b);
}

TEST(RunPlan, PipelineStageIsReproducibleAcrossWorkers) {
  Plan p;
  p.N = 256;
  p.N_coarse = 64;
  p.diffusion_id = "perturbed_identity";
  p.diffusion_params = {2.0, 0.5};
  const Model m = build_model(p);
  const Stage st = malliavin_stage(p, m);
  auto o1 = options(st.columns, 1), o8 = options(st.columns, 8);
  expect_same(run_plan(40, st.fn, o1), run_plan(40, st.fn, o8));
}

TEST(RunPlan, FailuresBecomeAlarmsAndNonFiniteBecomesExcluded) {
  auto fn = [](long i) {
    if (i == 3) throw BlowUpError("diverged, badly", 10);
    PathSummary s = toy(i);
    if (i == 5) s.values[0] = std::numeric_limits<double>::infinity();
    return s;
  };
  const auto r = run_plan(50, fn, options({"a", "b"}, 4));
  EXPECT_EQ(r.aggregate.n_alarm, 1);
  EXPECT_EQ(r.aggregate.n_excluded, 1);
  EXPECT_EQ(r.aggregate.n_ok, 48);
  EXPECT_EQ(r.summaries[3].status, PathStatus::alarm);
  EXPECT_EQ(r.summaries[3].codes.find(','), std::string::npos);
  EXPECT_EQ(r.summaries[5].codes, "nonfinite");
  EXPECT_TRUE(r.degraded());
  const auto clean = run_plan(200, [&](long i) { return i == 7 ? fn(3) : toy(i); }, options({"a", "b"}));
  EXPECT_EQ(clean.aggregate.n_alarm, 1);
  EXPECT_FALSE(clean.degraded());  // 0.5% <= 1%
}

TEST(RunPlan, ResumeEqualsUninterruptedRun) {
  const auto reference = run_plan(100, toy, options({"a", "b"}));
  auto o = options({"a", "b"}, 3);
  o.log_path = temp_file("resume.csv").string();
  o.max_batches = 2;
  const auto partial = run_plan(100, toy, o);
  EXPECT_FALSE(partial.complete);
  EXPECT_EQ(partial.summaries.size(), 32u);
  // Simulate a crash in the middle of writing a row.
  {
    std::ofstream os(o.log_path, std::ios::app);
    os << "32,ok,,0.12";
  }
  o.max_batches = -1;
  long calls = 0;
  const auto resumed = run_plan(100, [&](long i) { ++calls; return toy(i); }, o);
  EXPECT_EQ(resumed.resumed, 32);
  EXPECT_EQ(calls, 68);
  EXPECT_TRUE(resumed.complete);
  expect_same(reference, resumed);
  // A finished log replays without recomputation.
  calls = 0;
  expect_same(reference, run_plan(100, [&](long i) { ++calls; return toy(i); }, o));
  EXPECT_EQ(calls, 0);
}

TEST(RunPlan, LogFromAnotherPlanIsRejected) {
  auto o = options({"a", "b"});
  o.log_path = temp_file("mismatch.csv").string();
  run_plan(5, toy, o);
  o.plan_id = "other-plan";
  EXPECT_THROW(run_plan(5, toy, o), ValidationError);
}

TEST(RunPlan, Validation) {
  EXPECT_THROW(run_plan(0, toy, options({"a", "b"})), ValidationError);
  auto o = options({"a", "b"});
  o.workers = 0;
  EXPECT_THROW(run_plan(3, toy, o), ValidationError);
}

namespace {
Aggregate shard(long from, long to) {
  Aggregate a = make_aggregate("test-plan", {"a", "b"});
  for (long i = from; i < to; ++i) a.add(toy(i));
  a.finalize();
  return a;
}
}  // namespace

TEST(MergeReports, IdentityAndCommutativity) {
  const Aggregate x = shard(0, 40), y = shard(40, 90);
  const Aggregate e = make_aggregate("test-plan", {"a", "b"});
  const Aggregate xe = merge_reports(x, e);
  EXPECT_EQ(xe.n_ok, x.n_ok);
  EXPECT_EQ(xe.stats[0].sum.value(), x.stats[0].sum.value());
  EXPECT_EQ(xe.stats[1].sorted, x.stats[1].sorted);
  const Aggregate xy = merge_reports(x, y), yx = merge_reports(y, x);
  EXPECT_EQ(xy.n_ok, yx.n_ok);
  EXPECT_EQ(xy.stats[0].n, yx.stats[0].n);
  EXPECT_EQ(xy.stats[0].sorted, yx.stats[0].sorted);
  EXPECT_NEAR(xy.stats[0].sum.value(), yx.stats[0].sum.value(), 1e-12);
  EXPECT_THROW(merge_reports(x, make_aggregate("other", {"a", "b"})), ValidationError);
}

TEST(MergeReports, TreeMergeMatchesSequentialFold) {
  const Aggregate seq = shard(0, 1600);
  std::vector<Aggregate> level;
  for (int s = 0; s < 16; ++s) level.push_back(shard(100L * s, 100L * (s + 1)));
  while (level.size() > 1) {
    std::vector<Aggregate> next;
    for (size_t k = 0; k < level.size(); k += 2) next.push_back(merge_reports(level[k], level[k + 1]));
    level = next;
  }
  const Aggregate& tree = level.front();
  EXPECT_EQ(tree.n_ok, seq.n_ok);
  for (int c = 0; c < 2; ++c) {
    EXPECT_NEAR(tree.stats[c].sum.value(), seq.stats[c].sum.value(), 1e-12 * std::abs(seq.stats[c].sum.value()) + 1e-12);
    EXPECT_NEAR(tree.stats[c].sum2.value(), seq.stats[c].sum2.value(), 1e-12 * seq.stats[c].sum2.value());
    EXPECT_EQ(tree.stats[c].sorted, seq.stats[c].sorted);
    EXPECT_EQ(tree.stats[c].min, seq.stats[c].min);
    EXPECT_EQ(tree.stats[c].max, seq.stats[c].max);
  }
}

#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "eval_fixture.hpp"
#include "rqumf/eval.hpp"

using namespace rqumf;

namespace {

/// Best agreement over every injective map from estimated nonzero labels to
/// ground-truth nonzero labels, by recursion; 0 stays 0.
double brute_force_emis(const std::vector<int>& gt, const std::vector<int>& est) {
  const int ke = *std::max_element(est.begin(), est.end());
  const int kg = *std::max_element(gt.begin(), gt.end());
  std::vector<int> map(static_cast<std::size_t>(ke) + 1, -1);
  map[0] = 0;
  std::vector<char> used(static_cast<std::size_t>(kg) + 1, 0);
  std::size_t best = 0;
  const auto score = [&] {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) ok += map[static_cast<std::size_t>(est[i])] == gt[i];
    return ok;
  };
  std::function<void(int)> rec = [&](int e) {
    if (e > ke) {
      best = std::max(best, score());
      return;
    }
    map[static_cast<std::size_t>(e)] = -1;
    rec(e + 1);
    for (int g = 1; g <= kg; ++g) {
      if (used[static_cast<std::size_t>(g)]) continue;
      used[static_cast<std::size_t>(g)] = 1;
      map[static_cast<std::size_t>(e)] = g;
      rec(e + 1);
      used[static_cast<std::size_t>(g)] = 0;
    }
    map[static_cast<std::size_t>(e)] = -1;
  };
  rec(1);
  return 100.0 * static_cast<double>(gt.size() - best) / static_cast<double>(gt.size());
}

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int k) {
  std::uniform_int_distribution<int> d(0, k);
  std::vector<int> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<int> relabel(const std::vector<int>& v, std::mt19937_64& rng) {
  const int k = *std::max_element(v.begin(), v.end());
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 1);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> out;
  for (int x : v) out.push_back(x == 0 ? 0 : perm[static_cast<std::size_t>(x - 1)]);
  return out;
}

}  // namespace

TEST(Misclassification, IdenticalIsZero) {
  const std::vector<int> gt{1, 1, 2, 2, 0, 3};
  EXPECT_EQ(misclassification(gt, gt).e_mis, 0.0);
}

TEST(Misclassification, PermutedIsZero) {
  const std::vector<int> gt{1, 1, 2, 2, 0, 3};
  const std::vector<int> est{3, 3, 1, 1, 0, 2};
  const auto r = misclassification(gt, est);
  EXPECT_EQ(r.e_mis, 0.0);
  EXPECT_EQ(r.mapping.at(3), 1);
  EXPECT_EQ(r.mapping.at(0), 0);
}

TEST(Misclassification, HandWorkedCase) {
  const std::vector<int> gt{1, 1, 2, 2, 0};
  const std::vector<int> est{1, 1, 1, 2, 0};
  const auto r = misclassification(gt, est);
  EXPECT_DOUBLE_EQ(r.e_mis, 20.0);
  EXPECT_DOUBLE_EQ(r.e_mis, brute_force_emis(gt, est));
  EXPECT_EQ(r.misclassified, 1u);
}

TEST(Misclassification, OutlierLabelIsPinned) {
  // Estimated 0 cannot absorb a structure in pinned mode, but can in free mode.
  const std::vector<int> gt{1, 1, 1, 0};
  const std::vector<int> est{0, 0, 0, 1};
  EXPECT_DOUBLE_EQ(misclassification(gt, est).e_mis, 100.0);
  EXPECT_DOUBLE_EQ(misclassification(gt, est, OutlierMode::Free).e_mis, 0.0);
}

TEST(Misclassification, ExtraEstimatedLabelsCountAsErrors) {
  const std::vector<int> gt{1, 1, 1, 1};
  const std::vector<int> est{1, 1, 2, 3};
  EXPECT_DOUBLE_EQ(misclassification(gt, est).e_mis, 50.0);
}

TEST(Misclassification, LengthMismatch) {
  EXPECT_THROW(misclassification(std::vector<int>{1, 2}, std::vector<int>{1}), InvalidArgument);
  EXPECT_THROW(misclassification(std::vector<int>{-1}, std::vector<int>{1}), InvalidArgument);
}

TEST(Misclassification, MatchesBruteForceOnRandomCases) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 300; ++t) {
    const auto gt = random_labels(rng, 12, 3);
    const auto est = random_labels(rng, 12, 3);
    EXPECT_NEAR(misclassification(gt, est).e_mis, brute_force_emis(gt, est), 1e-9);
  }
}

TEST(Misclassification, InvariantUnderRelabelling) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 1000; ++t) {
    const auto gt = random_labels(rng, 30, 5);
    const auto est = random_labels(rng, 30, 6);
    const double base = misclassification(gt, est).e_mis;
    EXPECT_NEAR(misclassification(relabel(gt, rng), est).e_mis, base, 1e-9);
    EXPECT_NEAR(misclassification(gt, relabel(est, rng)).e_mis, base, 1e-9);
  }
}

TEST(Misclassification, ZeroIffEqualUpToBijection) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const auto gt = random_labels(rng, 15, 4);
    EXPECT_EQ(misclassification(gt, relabel(gt, rng)).e_mis, 0.0);
    auto est = gt;
    const auto hit = std::find_if(est.begin(), est.end(), [](int v) { return v != 0; });
    if (hit == est.end()) continue;
    *hit = 0;  // a structure point declared an outlier: 0 only maps to 0
    EXPECT_GT(misclassification(gt, est).e_mis, 0.0);
  }
}

TEST(Misclassification, OneFlipCostsOneOverNPlusOne) {
  for (std::size_t n : {5u, 10u, 29u, 99u}) {
    std::vector<int> gt, est;
    for (std::size_t i = 0; i < n; ++i) {
      gt.push_back(1 + static_cast<int>(i % 3));
      est.push_back(1 + static_cast<int>(i % 3));
    }
    const double before = misclassification(gt, est).e_mis;
    gt.push_back(1);
    est.push_back(2);
    EXPECT_NEAR(misclassification(gt, est).e_mis - before, 100.0 / static_cast<double>(n + 1), 1e-9);
  }
}

TEST(Misclassification, OptimalNoWorseThanIdentityMap) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 500; ++t) {
    const auto gt = random_labels(rng, 25, 4);
    const auto est = random_labels(rng, 25, 4);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) wrong += gt[i] != est[i];
    EXPECT_LE(misclassification(gt, est).e_mis, 100.0 * static_cast<double>(wrong) / 25.0 + 1e-9);
  }
}

TEST(Misclassification, ConfusionCountsEveryPoint) {
  const std::vector<int> gt{1, 2, 2, 0, 3};
  const std::vector<int> est{2, 2, 1, 0, 0};
  const auto r = misclassification(gt, est);
  std::size_t total = 0;
  for (const auto& row : r.confusion) total = std::accumulate(row.begin(), row.end(), total);
  EXPECT_EQ(total, gt.size());
  EXPECT_EQ(r.n_points, gt.size());
}

TEST(MisclassificationMulti, AnyListedLabelCounts) {
  const std::vector<std::vector<int>> gt{{1}, {1, 2}, {2}, {0, 1}};
  const std::vector<int> est{1, 2, 2, 1};
  EXPECT_EQ(misclassification_multi(gt, est).e_mis, 0.0);
  const std::vector<int> est2{1, 1, 2, 0};
  EXPECT_EQ(misclassification_multi(gt, est2).e_mis, 0.0);
  // One estimated structure maps to gt 1, which covers all but the third point.
  const std::vector<int> est3{2, 2, 2, 2};
  EXPECT_DOUBLE_EQ(misclassification_multi(gt, est3).e_mis, 25.0);
}

TEST(MisclassificationMulti, SingletonSetsMatchSingleLabel) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto gt = random_labels(rng, 20, 4);
    const auto est = random_labels(rng, 20, 4);
    std::vector<std::vector<int>> sets;
    for (int g : gt) sets.push_back({g});
    EXPECT_EQ(misclassification_multi(sets, est).e_mis, misclassification(gt, est).e_mis);
  }
}

TEST(Hungarian, SolvesSmallAssignment) {
  const std::vector<std::vector<double>> cost{{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
  const auto a = hungarian_min(cost);
  double total = 0;
  for (std::size_t r = 0; r < 3; ++r) total += cost[r][a[r]];
  EXPECT_EQ(total, 5.0);
}

TEST(Aggregate, SingleRun) {
  const std::vector<RunRecord> runs{{7.5, 5, 1}};
  const auto s = aggregate(runs);
  EXPECT_EQ(s.mean, 7.5);
  EXPECT_EQ(s.median, 7.5);
  EXPECT_TRUE(std::isnan(s.std));
}

TEST(Aggregate, TwoRuns) {
  const std::vector<RunRecord> runs{{0.0, 4, 1}, {10.0, 6, 2}};
  const auto s = aggregate(runs);
  EXPECT_EQ(s.mean, 5.0);
  EXPECT_EQ(s.median, 5.0);
  EXPECT_NEAR(s.std, std::sqrt(50.0), 1e-12);
  EXPECT_EQ(s.mean_selected, 5.0);
}

TEST(Aggregate, EmptyThrows) { EXPECT_THROW(aggregate(std::vector<RunRecord>{}), InvalidArgument); }

TEST(Aggregate, CsvHasOneRowPerRun) {
  const std::vector<RunRecord> runs{{1.0, 5, 10}, {2.0, 6, 11}, {3.0, 5, 12}};
  std::ostringstream os;
  write_run_stats_csv(os, aggregate(runs));
  EXPECT_EQ(os.str(), "run,seed,e_mis,n_selected\n0,10,1,5\n1,11,2,6\n2,12,3,5\n");
}

TEST(FrozenSuite, TwentyPentagonRunsMatchFixture) {
  std::ifstream is(std::string(RQUMF_FIXTURE_DIR) + "/pentagon_20runs.json");
  ASSERT_TRUE(is) << "missing fixture";
  const auto fixture = nlohmann::json::parse(is);
  const auto result = run_bench(rqumf::test_support::frozen_suite_config());
  ASSERT_EQ(result.runs.size(), 20u);
  const auto expected = fixture.at("e_mis").get<std::vector<double>>();
  ASSERT_EQ(expected.size(), 20u);
  for (std::size_t r = 0; r < 20; ++r) EXPECT_NEAR(result.runs[r].e_mis, expected[r], 1e-9) << "run " << r;
  EXPECT_NEAR(result.summary.front().stats.mean, fixture.at("mean").get<double>(), 1e-9);
  EXPECT_EQ(result.summary.front().stats.selected_counts, fixture.at("n_selected").get<std::vector<std::size_t>>());
}

#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "rqumf/experiment.hpp"

using namespace rqumf;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.scenario = Scenario::PentagonSweepOutliers;
  cfg.grid = {0.0, 1.0 / 3.0};
  cfg.methods = {Method::RQuMF, Method::QuMF};
  cfg.n_models = 30;
  cfg.repeats = 3;
  cfg.seed = 5;
  cfg.solver.sa.num_samples = 20;
  cfg.solver.sa.sweeps_per_sample = 200;
  cfg.solver.sa.threads = 1;
  return cfg;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Experiment, DeterministicGivenSeed) {
  const auto a = run_bench(small_config());
  const auto b = run_bench(small_config());
  ASSERT_EQ(a.runs.size(), 12u);
  for (std::size_t k = 0; k < a.runs.size(); ++k) {
    EXPECT_EQ(a.runs[k].e_mis, b.runs[k].e_mis);
    EXPECT_EQ(a.runs[k].n_selected, b.runs[k].n_selected);
    EXPECT_EQ(a.runs[k].energy, b.runs[k].energy);
  }
}

TEST(Experiment, SummaryEqualsAggregateOfRuns) {
  const auto r = run_bench(small_config());
  ASSERT_EQ(r.summary.size(), 4u);
  for (const auto& row : r.summary) {
    std::vector<RunRecord> rec;
    for (const auto& run : r.runs)
      if (run.setting_index == row.setting_index && run.method == row.method)
        rec.push_back({run.e_mis, run.n_selected, run.seed});
    ASSERT_EQ(rec.size(), 3u);
    const auto s = aggregate(rec);
    EXPECT_EQ(s.mean, row.stats.mean);
    EXPECT_EQ(s.median, row.stats.median);
    EXPECT_EQ(s.mean_selected, row.stats.mean_selected);
  }
}

TEST(Experiment, ThreadCountDoesNotChangeResults) {
  const auto a = run_bench(small_config());
  setenv("RQUMF_THREADS", "3", 1);
  const auto b = run_bench(small_config());
  unsetenv("RQUMF_THREADS");
  ASSERT_EQ(a.runs.size(), b.runs.size());
  for (std::size_t k = 0; k < a.runs.size(); ++k) EXPECT_EQ(a.runs[k].e_mis, b.runs[k].e_mis);
}

TEST(Experiment, InstancesHaveExpectedShape) {
  const auto cfg = small_config();
  const auto inst = make_instance(cfg, 1, 0);
  EXPECT_EQ(inst.points.size(), 30u);
  EXPECT_EQ(inst.preference.rows(), 30u);
  EXPECT_EQ(inst.preference.cols(), 30u);
  EXPECT_EQ(inst.models.size(), 30u);
  EXPECT_EQ(inst.gt_sets.size(), 30u);
  EXPECT_EQ(std::count(inst.gt_labels.begin(), inst.gt_labels.end(), 0), 10);
}

TEST(Experiment, GroundTruthSetsAddOnlyNearbyStructures) {
  SyntheticConfig syn;
  syn.noise_sigma = 0.0;
  const auto scene = generate_pentagon(syn);
  const auto sets = ground_truth_label_sets(scene.points, scene.models, 0.03);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    EXPECT_EQ(sets[i].front(), (*scene.points.labels())[i]);
    for (std::size_t k = 1; k < sets[i].size(); ++k)
      EXPECT_LT(residual(scene.models[static_cast<std::size_t>(sets[i][k] - 1)], scene.points[i]), 0.03);
  }
}

TEST(Experiment, GroundTruthSelectionScoresZero) {
  // Selecting exactly the injected ground-truth columns is a perfect answer.
  for (std::size_t r = 0; r < 5; ++r) {
    auto cfg = small_config();
    const auto inst = make_instance(cfg, 1, r);
    const std::vector<std::size_t> gt{0, 1, 2, 3, 4};
    const auto labels = assign_labels(inst.preference, gt, inst.label_context());
    EXPECT_EQ(inst.e_mis(labels), 0.0) << "repeat " << r;
  }
}

TEST(Experiment, ValidationRejectsBadGrids) {
  auto cfg = small_config();
  cfg.grid = {0.7};
  EXPECT_THROW(run_bench(cfg), InvalidArgument);
  cfg.scenario = Scenario::PentagonSweepModels;
  cfg.grid = {2.5};
  EXPECT_THROW(run_bench(cfg), InvalidArgument);
  cfg.grid.clear();
  cfg.repeats = 0;
  EXPECT_THROW(run_bench(cfg), InvalidArgument);
}

TEST(Experiment, ModelSweepDefaultGrid) {
  ExperimentConfig cfg;
  EXPECT_EQ(cfg.effective_grid(), (std::vector<double>{20, 50, 100, 500, 1000}));
  EXPECT_DOUBLE_EQ(cfg.effective_epsilon(), 0.03);
}

TEST(Experiment, BenchOutputsWritten) {
  auto cfg = small_config();
  cfg.repeats = 1;
  const auto r = run_bench(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "rqumf_bench_outputs";
  std::filesystem::remove_all(dir);
  write_bench_outputs(dir.string(), cfg, r);
  const auto summary = read_file(dir / "summary.csv");
  std::istringstream lines(summary);
  std::string header, row;
  std::getline(lines, header);
  EXPECT_NE(header.find("std"), std::string::npos);
  std::getline(lines, row);
  EXPECT_NE(row.find(",,"), std::string::npos);  // empty std with one repeat
  EXPECT_FALSE(read_file(dir / "runs.csv").empty());
  EXPECT_FALSE(read_file(dir / "summary.md").empty());
  std::filesystem::remove_all(dir);
}

TEST(Experiment, BatteryObjectiveIsMeanOfRuns) {
  auto cfg = small_config();
  cfg.methods = {Method::RQuMF};
  const QuboParams params{1.2, 0.5};
  const double battery = battery_mean_emis(cfg, Method::RQuMF, params);
  cfg.params = params;
  const auto r = run_bench(cfg);
  double mean = 0.0;
  for (const auto& run : r.runs) mean += run.e_mis;
  EXPECT_NEAR(battery, mean / static_cast<double>(r.runs.size()), 1e-9);
}

// Configuration of the frozen 20-run regression suite shared by the eval test
// and the fixture generator.
#pragma once

#include "rqumf/experiment.hpp"

namespace rqumf::test_support {

inline ExperimentConfig frozen_suite_config() {
  ExperimentConfig cfg;
  cfg.scenario = Scenario::PentagonSweepOutliers;
  cfg.grid = {1.0 / 6.0};
  cfg.methods = {Method::RQuMF};
  cfg.params = QuboParams{2.5, 1.0};
  cfg.n_models = 40;
  cfg.repeats = 20;
  cfg.seed = 2024;
  cfg.solver.sa.num_samples = 50;
  cfg.solver.sa.sweeps_per_sample = 500;
  cfg.solver.sa.threads = 1;
  return cfg;
}

}  // namespace rqumf::test_support

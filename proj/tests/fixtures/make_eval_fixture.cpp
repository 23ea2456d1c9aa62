// Regenerates pentagon_20runs.json. Only needed when the frozen suite changes on purpose.
#include <iostream>

#include "../eval_fixture.hpp"

int main() {
  const auto result = rqumf::run_bench(rqumf::test_support::frozen_suite_config());
  nlohmann::json j;
  std::vector<double> e;
  std::vector<std::size_t> sel;
  for (const auto& r : result.runs) {
    e.push_back(r.e_mis);
    sel.push_back(r.n_selected);
  }
  j["e_mis"] = e;
  j["n_selected"] = sel;
  j["mean"] = result.summary.front().stats.mean;
  std::cout << j.dump(2) << '\n';
}

#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "rqumf/solvers.hpp"
#include "support.hpp"

using namespace rqumf;
using rqumf::test_support::bits_of;
using rqumf::test_support::brute_force_minimum;
using rqumf::test_support::random_preference;

namespace {

QuboProblem plain(Eigen::MatrixXd q, Eigen::VectorXd s) { return QuboProblem{std::move(q), std::move(s), 0.0, std::nullopt}; }

QuboProblem random_dense(std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd q(d, d);
  Eigen::VectorXd s(d);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(d); ++i) {
    s(i) = u(rng);
    for (Eigen::Index j = i; j < static_cast<Eigen::Index>(d); ++j) q(i, j) = q(j, i) = u(rng);
  }
  return plain(q, s);
}

SaConfig quick_sa(std::uint64_t seed, std::size_t samples = 100) {
  SaConfig c;
  c.num_samples = samples;
  c.sweeps_per_sample = 200;
  c.seed = seed;
  c.threads = 1;
  return c;
}

}  // namespace

TEST(SolveSa, SingleVariable) {
  const auto prob = plain(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Constant(1, -1.0));
  const auto set = solve_sa(prob, quick_sa(0));
  ASSERT_EQ(set.samples.size(), 1u);
  EXPECT_EQ(best(set).w, Bits{1});
  EXPECT_EQ(best(set).energy, -1.0);
  EXPECT_EQ(best(set).multiplicity, 100u);
}

TEST(SolveSa, TwoPointOneModelToy) {
  const auto prob = build_rqumf_qubo(PreferenceMatrix::from_rows({{1}, {1}}), QuboParams{0.5, 1.0});
  const auto set = solve_sa(prob, quick_sa(1));
  EXPECT_EQ(best(set).w, (Bits{1, 1, 1}));
  EXPECT_DOUBLE_EQ(best(set).energy, -1.5);
}

TEST(SolveSa, EnergiesConsistentAndSorted) {
  const auto prob = build_rqumf_qubo(random_preference(8, 8, 3), QuboParams{0.8, 0.3});
  const auto set = solve_sa(prob, quick_sa(2));
  std::size_t total = 0;
  for (std::size_t k = 0; k < set.samples.size(); ++k) {
    EXPECT_NEAR(set.samples[k].energy, energy(prob, set.samples[k].w), 1e-9);
    total += set.samples[k].multiplicity;
    if (k > 0) {
      const auto& a = set.samples[k - 1];
      const auto& b = set.samples[k];
      EXPECT_TRUE(a.energy < b.energy || (a.energy == b.energy && a.w < b.w));
    }
  }
  EXPECT_EQ(total, 100u);
}

TEST(SolveSa, NeverBelowExhaustiveMinimum) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto prob = build_rqumf_qubo(random_preference(7, 8, seed), QuboParams{0.6, 0.25});
    const double floor = best(solve_exhaustive(prob)).energy;
    const auto set = solve_sa(prob, quick_sa(seed, 20));
    for (const auto& s : set.samples) EXPECT_GE(s.energy, floor - 1e-9);
  }
}

TEST(SolveSa, Deterministic) {
  const auto prob = build_rqumf_qubo(random_preference(10, 10, 4), QuboParams{0.9, 0.2});
  const auto a = solve_sa(prob, quick_sa(77));
  const auto b = solve_sa(prob, quick_sa(77));
  EXPECT_EQ(sample_set_to_json(a, false), sample_set_to_json(b, false));
}

TEST(SolveSa, ThreadCountDoesNotChangeResult) {
  const auto prob = build_rqumf_qubo(random_preference(10, 12, 5), QuboParams{0.9, 0.2});
  auto cfg = quick_sa(13, 37);
  const auto one = solve_sa(prob, cfg);
  cfg.threads = 4;
  const auto four = solve_sa(prob, cfg);
  EXPECT_EQ(sample_set_to_json(one, false), sample_set_to_json(four, false));
}

TEST(SolveSa, GreedyLimitNeverIncreasesEnergy) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto prob = random_dense(12, seed);
    const SparseQubo sq(prob);
    const std::vector<double> betas(3, 1e6);
    // Reproduce the chain's random start to compare against its final state.
    Rng rng(seed);
    Bits start(12);
    for (auto& b : start) b = static_cast<std::uint8_t>(rng() >> 63);
    const auto end = detail::anneal_chain(sq, betas, seed);
    EXPECT_LE(energy(prob, end), energy(prob, start) + 1e-12);
  }
}

TEST(SolveSa, EqualBetaBoundsAreAccepted) {
  auto cfg = quick_sa(0, 5);
  cfg.beta_range = std::pair{1e6, 1e6};
  EXPECT_NO_THROW(cfg.validate());
  cfg.beta_range = std::pair{2.0, 1.0};
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.beta_range.reset();
  cfg.num_samples = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(SolveSa, LinearScheduleAlsoSolvesToy) {
  auto cfg = quick_sa(3);
  cfg.schedule_kind = ScheduleKind::Linear;
  const auto prob = build_rqumf_qubo(PreferenceMatrix::from_rows({{1}, {1}}), QuboParams{0.5, 1.0});
  EXPECT_DOUBLE_EQ(best(solve_sa(prob, cfg)).energy, -1.5);
}

TEST(BetaSchedule, EndpointsAndMonotone) {
  const auto g = beta_schedule({0.1, 10.0}, 5, ScheduleKind::Geometric);
  EXPECT_DOUBLE_EQ(g.front(), 0.1);
  EXPECT_NEAR(g.back(), 10.0, 1e-12);
  EXPECT_NEAR(g[2], 1.0, 1e-12);
  EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
  const auto l = beta_schedule({1.0, 3.0}, 3, ScheduleKind::Linear);
  EXPECT_EQ(l, (std::vector<double>{1.0, 2.0, 3.0}));
}

TEST(SolveExhaustive, PositiveBiasPrefersZero) {
  const auto set = solve_exhaustive(plain(Eigen::MatrixXd::Zero(2, 2), Eigen::Vector2d(1, 1)));
  ASSERT_EQ(set.samples.size(), 1u);
  EXPECT_EQ(best(set).w, (Bits{0, 0}));
  EXPECT_EQ(best(set).energy, 0.0);
}

TEST(SolveExhaustive, StrongCouplingPrefersBoth) {
  Eigen::MatrixXd q(2, 2);
  q << 0, -3, -3, 0;
  const auto set = solve_exhaustive(plain(q, Eigen::Vector2d(1, 1)));
  EXPECT_EQ(best(set).w, (Bits{1, 1}));
  EXPECT_EQ(best(set).energy, -4.0);
}

TEST(SolveExhaustive, AgreesWithBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto prob = random_dense(10, seed);
    const auto set = solve_exhaustive(prob);
    const double expect = brute_force_minimum(prob);
    EXPECT_NEAR(best(set).energy, expect, 1e-12);
    for (const auto& s : set.samples) EXPECT_NEAR(energy(prob, s.w), expect, 1e-9);
  }
}

TEST(SolveExhaustive, ReturnsAllTiedMinimisers) {
  // Two identical columns: selecting either one covers both points.
  const auto prob = build_rqumf_qubo(PreferenceMatrix::from_rows({{1, 1}, {1, 1}}), QuboParams{0.5, 1.0});
  const auto set = solve_exhaustive(prob);
  ASSERT_EQ(set.samples.size(), 2u);
  EXPECT_EQ(set.samples[0].w, (Bits{1, 1, 0, 1}));
  EXPECT_EQ(set.samples[1].w, (Bits{1, 1, 1, 0}));
}

TEST(SolveExhaustive, VisitsEveryStateOnce) {
  for (std::size_t d : {1u, 5u, 12u, 16u}) {
    const auto set = solve_exhaustive(plain(Eigen::MatrixXd::Zero(d, d), Eigen::VectorXd::Zero(d)));
    ASSERT_EQ(set.samples.size(), std::size_t{1} << d);
    std::set<Bits> seen;
    for (const auto& s : set.samples) {
      EXPECT_EQ(s.multiplicity, 1u);
      seen.insert(s.w);
    }
    EXPECT_EQ(seen.size(), std::size_t{1} << d);
  }
}

TEST(SolveExhaustive, TooLarge) {
  EXPECT_THROW(solve_exhaustive(plain(Eigen::MatrixXd::Zero(26, 26), Eigen::VectorXd::Zero(26))), TooLarge);
}

TEST(Best, EmptySetThrows) { EXPECT_THROW(best(SampleSet{}), InvalidArgument); }

TEST(Best, TieBreakIsLexicographic) {
  const auto set = make_sample_set({{Bits{1, 0}, -1.0, 1}, {Bits{0, 1}, -1.0, 1}, {Bits{1, 1}, -2.0, 1}, {Bits{0, 1}, -1.0, 2}},
                                   "manual", 0.0);
  ASSERT_EQ(set.samples.size(), 3u);
  EXPECT_EQ(best(set).w, (Bits{1, 1}));
  EXPECT_EQ(set.samples[1].w, (Bits{0, 1}));
  EXPECT_EQ(set.samples[1].multiplicity, 3u);
}

TEST(SampleSetJson, RoundTripReevaluatesEnergy) {
  const auto prob = build_rqumf_qubo(random_preference(4, 4, 8), QuboParams{0.5, 0.5});
  const auto set = solve_sa(prob, quick_sa(4, 10));
  auto j = sample_set_to_json(set);
  j["samples"][0]["energy"] = 12345.0;  // ignored on read
  const auto back = sample_set_from_json(j, prob);
  EXPECT_EQ(sample_set_to_json(back, false), sample_set_to_json(set, false));
  EXPECT_THROW(sample_set_from_json(nlohmann::json{{"samples", {{{"w", "012"}}}}}, prob), ParseError);
}

TEST(SolveExternal, ShellBackendRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "rqumf_external_test";
  std::filesystem::create_directories(dir);
  const auto canned = (dir / "canned.json").string();
  {
    std::ofstream os(canned);
    os << R"({"samples":[{"w":"111","multiplicity":3},{"w":"000"}],"solver_name":"canned"})";
  }
  SolverConfig cfg;
  cfg.kind = SolverKind::ExternalAdapter;
  cfg.external.command = "test -s {qubo} && cp " + canned + " {out}";
  cfg.external.work_dir = dir.string();
  const auto prob = build_rqumf_qubo(PreferenceMatrix::from_rows({{1}, {1}}), QuboParams{0.5, 1.0});
  const auto set = solve(prob, cfg);
  EXPECT_EQ(set.solver_name, "canned");
  EXPECT_EQ(best(set).w, (Bits{1, 1, 1}));
  EXPECT_DOUBLE_EQ(best(set).energy, -1.5);
  EXPECT_EQ(best(set).multiplicity, 3u);
  std::ifstream qubo_file(dir / "qubo.json");
  const auto written = qubo_from_json(nlohmann::json::parse(qubo_file));
  EXPECT_EQ(written.q, prob.q);

  cfg.external.command = "false";
  EXPECT_THROW(solve(prob, cfg), Error);
  cfg.external.command.clear();
  EXPECT_THROW(solve(prob, cfg), InvalidArgument);
  std::filesystem::remove_all(dir);
}

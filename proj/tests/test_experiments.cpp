#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "catcoup/experiments.hpp"
#include "catcoup/numeric.hpp"
#include "support/stats.hpp"

using namespace catcoup;

namespace {

std::filesystem::path temp_dir(const char* leaf) {
  const auto dir = std::filesystem::temp_directory_path() / "catcoup_exp_tests" / leaf;
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("theory checks pass on a reduced configuration") {
  TheoryChecksConfig config;
  config.n_pairs = 300;
  config.mc_pairs = 8;
  config.mc_draws = 30000;
  const TheoryChecksResult result = run_theory_checks(config, temp_dir("theory"));
  CHECK(result.summary.ok);
  CHECK(result.checks.size() == 6);
  CHECK(std::filesystem::exists(temp_dir("theory") / "theory_checks.json"));
}

TEST_CASE("analytic gadget-2 mismatch matches Monte Carlo sampling") {
  Rng rng(81);
  const Gadget2Parameters params = make_gadget2(6, 3, {8, 8}, rng);
  const Vec l1 = testsupport::random_logits(6, rng);
  const Vec l2 = testsupport::random_logits(6, rng);
  const double analytic = gadget2_mismatch_probability(params, l1, l2);
  CHECK(analytic >= 0.0);
  CHECK(analytic <= 1.0);

  const Gadget2Tables tables = gadget2_tables(params, l1, l2);
  const std::size_t n = 200000;
  double mismatches = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const auto [x, y] =
        gadget2_sample_pair_from(tables, rng.gumbel_vector(3), rng.gumbel_vector(6));
    if (x != y) mismatches += 1.0;
  }
  const double tol = 4.0 * std::sqrt(analytic * (1.0 - analytic) / static_cast<double>(n));
  CHECK(std::abs(mismatches / static_cast<double>(n) - analytic) <= tol);
}

TEST_CASE("variance suite: analytic rows at a small configuration") {
  VarianceSuiteConfig config;
  config.outcome_count = 6;
  config.seeds = {1, 2};
  config.cells = {VarianceCell::FixedMonotone};
  config.mechanisms = {Mechanism::Independent, Mechanism::InverseCdf, Mechanism::OptimalLP,
                       Mechanism::GumbelMax};
  config.eval_pairs = 10;
  config.eval_samples = 2000;
  const VarianceSuiteResult result = run_variance_suite(config, temp_dir("variance"));
  REQUIRE(result.summary.ok);
  REQUIRE(result.table.size() == 4);

  double independent = -1.0, inverse = -1.0, optimal = -1.0, gumbel = -1.0;
  for (const VarianceCellResult& row : result.table) {
    if (row.mechanism == Mechanism::Independent) independent = row.mean_variance;
    if (row.mechanism == Mechanism::InverseCdf) inverse = row.mean_variance;
    if (row.mechanism == Mechanism::OptimalLP) optimal = row.mean_variance;
    if (row.mechanism == Mechanism::GumbelMax) gumbel = row.mean_variance;
  }
  // monotone rewards: the shared-uniform coupling attains the optimum
  CHECK(std::abs(inverse - optimal) <= 1e-9);
  CHECK(optimal <= independent + 1e-9);
  CHECK(optimal <= gumbel + 0.05 * gumbel);  // gumbel row is Monte Carlo
  CHECK(std::filesystem::exists(temp_dir("variance") / "variance_table.csv"));
}

TEST_CASE("maximality runner: references are analytic and rows are emitted") {
  MaximalityConfig config;
  config.outcome_count = 5;
  config.rho_grid = {0.0};
  config.model.cluster_count = 4;
  config.model.hidden = {16, 16};
  config.train.iterations = 150;
  config.train.batch_pairs = 16;
  config.train.noise_draws_per_pair = 8;
  const MaximalityResult result = run_maximality(config, temp_dir("maximality"));
  REQUIRE(result.rows.size() == 1);
  const MaximalityRow& row = result.rows[0];
  CHECK(row.trained);
  CHECK(row.maximal_mismatch > 0.0);
  CHECK(row.maximal_mismatch <= row.gumbel_max_mismatch);
  CHECK(row.learned_mismatch >= row.maximal_mismatch - 1e-9);
  CHECK(row.learned_mismatch <= 1.0);
  CHECK(std::filesystem::exists(temp_dir("maximality") / "maximality.csv"));
}

TEST_CASE("mdp runner: tiny environment end to end") {
  MdpExperimentConfig config;
  config.env.category_counts = {3, 2, 2};
  config.env.normal_category = {1, 0, 0};
  config.env.n_treatments = 3;
  config.env.abnormal_death_threshold = 2;
  config.n_trajectories = 3000;
  config.max_t = 10;
  config.min_support = 3;
  config.n_pairs = 2;
  config.n_reward_draws = 1;
  config.n_samples = 400;
  config.n_eval_seeds = 2;
  config.include_generalized = false;
  config.mechanisms = {Mechanism::GumbelMax, Mechanism::Gadget2};
  config.gadget2_model.cluster_count = 3;
  config.gadget2_model.hidden = {16, 16};
  config.train.iterations = 120;
  config.train.batch_pairs = 8;
  config.train.noise_draws_per_pair = 8;

  const MdpExperimentResult result = run_mdp_experiment(config, temp_dir("mdp"));
  REQUIRE(result.summary.ok);
  CHECK(result.n_query_pairs >= 1);
  CHECK(!result.rows_fixed.empty());
  CHECK(std::filesystem::exists(temp_dir("mdp") / "effects_fixed.csv"));
  CHECK(std::filesystem::exists(temp_dir("mdp") / "estimated_mdp.json"));
  CHECK(std::filesystem::exists(temp_dir("mdp") / "trajectories.csv"));

  // the mean treatment effect agrees across mechanisms per pair
  for (std::size_t pair = 0; pair < result.n_query_pairs; ++pair) {
    for (const SamplingSetting setting :
         {SamplingSetting::Joint, SamplingSetting::Counterfactual}) {
      Vec means;
      Vec ses;
      for (const EffectRow& row : result.rows_fixed)
        if (row.pair_index == pair && row.setting == setting) {
          means.push_back(row.mean_diff);
          ses.push_back(std::sqrt(row.variance / static_cast<double>(config.n_samples)));
        }
      REQUIRE(!means.empty());
      for (std::size_t i = 1; i < means.size(); ++i)
        CHECK(std::abs(means[i] - means[0]) <= 4.0 * (ses[i] + ses[0]) + 1e-9);
    }
  }
}

}  // TEST_SUITE

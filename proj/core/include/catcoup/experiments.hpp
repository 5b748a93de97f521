#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "catcoup/mdp.hpp"
#include "catcoup/mechanisms.hpp"
#include "catcoup/train.hpp"

namespace catcoup {

struct RunSummary {
  bool ok = true;
  std::vector<std::string> failures;
  std::string config_hash;

  void fail(std::string message) {
    ok = false;
    failures.push_back(std::move(message));
  }
};

void write_summary_json(const RunSummary& summary, const std::filesystem::path& path);

/// Exact P(x != y) for a gadget-2 coupling: within each cluster the pair is a
/// shared-Gumbel coupling of the cluster conditionals, whose diagonal has a
/// closed form.
double gadget2_mismatch_probability(const Gadget2Parameters& params, const Vec& l1,
                                    const Vec& l2);

// Trains the second gadget against the mismatch loss on pairs perturbed at
// each noise scale and compares the coupling it learns on the base pair with
// the analytic maximal and shared-Gumbel references.
struct MaximalityConfig {
  std::size_t outcome_count = 10;
  Vec base_l1, base_l2;  // empty: increasing/decreasing pair drawn from seed
  std::vector<double> rho_grid{0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0, 1000.0};
  ModelConfig model;
  TrainConfig train;
  // Per-noise-scale learning-rate selection: short pilot runs over the grid,
  // smallest rate within tolerance of the best final loss wins. Empty grid
  // disables tuning and uses train.learning_rate directly.
  std::vector<double> learning_rate_grid{1e-2, 3e-3, 1e-3, 3e-4, 1e-4};
  std::size_t pilot_iterations = 1000;
  std::uint64_t seed = 1;

  MaximalityConfig() {
    model.kind = GadgetKind::Gadget2;
    model.output_scale = 0.0;  // start exactly at the shared-Gumbel coupling
    train.iterations = 4000;
  }
};

struct MaximalityRow {
  double rho = 0.0;
  double learned_mismatch = 0.0;
  double maximal_mismatch = 0.0;     // 1 - sum_i min(p_i, q_i)
  double gumbel_max_mismatch = 0.0;  // 1 - sum of the closed-form diagonal
  bool trained = false;
};

struct MaximalityResult {
  std::vector<MaximalityRow> rows;
  RunSummary summary;
};

MaximalityResult run_maximality(const MaximalityConfig& config,
                                const std::filesystem::path& out_dir);

enum class VarianceCell { IndependentLinear, MirroredLinear, FixedMonotone, FixedNonmonotone };

std::string to_string(VarianceCell cell);

// Mechanism x cell variance table. Rows with explicit couplings are computed
// analytically from the coupling table; shared-noise mechanisms are estimated
// by Monte Carlo; gadget rows are trained from scratch per seed.
struct VarianceSuiteConfig {
  std::size_t outcome_count = 10;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<VarianceCell> cells{VarianceCell::IndependentLinear, VarianceCell::MirroredLinear,
                                  VarianceCell::FixedMonotone, VarianceCell::FixedNonmonotone};
  std::vector<Mechanism> mechanisms{Mechanism::Independent, Mechanism::GumbelMax,
                                    Mechanism::InverseCdf,  Mechanism::OptimalLP,
                                    Mechanism::Gadget1,     Mechanism::Gadget2};
  ModelConfig gadget1_model;
  ModelConfig gadget2_model;
  TrainConfig train;
  std::size_t eval_pairs = 100;
  std::size_t eval_samples = 1000;
  NonmonotoneForm nonmonotone_form = NonmonotoneForm::SineOfGaussian;

  VarianceSuiteConfig() {
    gadget1_model.kind = GadgetKind::Gadget1;
    gadget1_model.output_scale = 0.0;
    gadget2_model.kind = GadgetKind::Gadget2;
    gadget2_model.output_scale = 0.0;
  }
};

struct VarianceCellResult {
  VarianceCell cell;
  Mechanism mechanism;
  double mean_variance = 0.0;
  double std_error = 0.0;
  std::size_t n_seeds = 0;
};

struct VarianceSuiteResult {
  std::vector<VarianceCellResult> table;
  RunSummary summary;
};

VarianceSuiteResult run_variance_suite(const VarianceSuiteConfig& config,
                                       const std::filesystem::path& out_dir);

// Full pipeline: synthetic environment, behavior rollouts, MLE model, target
// policy, query-pair extraction, per-trial gadget training, treatment-effect
// evaluation in joint and counterfactual settings (fixed and generalized).
struct MdpExperimentConfig {
  SepsisLikeConfig env;
  std::uint64_t env_seed = 7;
  std::size_t n_trajectories = 20000;
  std::size_t max_t = 20;
  std::size_t min_support = 4;
  std::size_t n_pairs = 6;
  std::size_t n_reward_draws = 5;
  std::size_t n_samples = 2000;
  std::size_t n_eval_seeds = 10;
  double behavior_epsilon = 0.05;
  double generalized_rho = 0.25;
  bool include_generalized = true;
  std::vector<Mechanism> mechanisms{Mechanism::Independent, Mechanism::InverseCdf,
                                    Mechanism::GumbelMax,   Mechanism::Gadget1,
                                    Mechanism::Gadget2,     Mechanism::OptimalLP};
  ModelConfig gadget1_model;
  ModelConfig gadget2_model;
  TrainConfig train;
  std::uint64_t seed = 1;

  MdpExperimentConfig() {
    gadget1_model.kind = GadgetKind::Gadget1;
    gadget1_model.diagonal_bias = 3.0;
    gadget1_model.output_scale = 0.0;
    gadget2_model.kind = GadgetKind::Gadget2;
    gadget2_model.output_scale = 0.0;
    train.iterations = 1200;
    train.batch_pairs = 16;
    train.learning_rate = 1e-2;
  }
};

struct MdpAggregate {
  Mechanism mechanism;
  SamplingSetting setting;
  bool generalized = false;
  double mean_diff = 0.0;
  double mean_variance = 0.0;
  double std_error = 0.0;  // of the variance across (pair, reward, seed) rows
};

struct MdpExperimentResult {
  std::vector<EffectRow> rows_fixed;
  std::vector<EffectRow> rows_generalized;
  std::vector<MdpAggregate> aggregates;
  std::size_t n_query_pairs = 0;
  RunSummary summary;
};

MdpExperimentResult run_mdp_experiment(const MdpExperimentConfig& config,
                                       const std::filesystem::path& out_dir);

// Randomized verification of the closed-form coupling results.
struct TheoryChecksConfig {
  std::size_t n_pairs = 1000;
  std::size_t mc_pairs = 50;
  std::size_t mc_draws = 100000;
  std::size_t k_min = 3;
  std::size_t k_max = 10;
  std::uint64_t seed = 1;
};

struct TheoryCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct TheoryChecksResult {
  std::vector<TheoryCheck> checks;
  RunSummary summary;
};

TheoryChecksResult run_theory_checks(const TheoryChecksConfig& config,
                                     const std::filesystem::path& out_dir);

}  // namespace catcoup

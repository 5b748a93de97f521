// Experiment CLI: trains and evaluates coupling mechanisms, reproduces the
// maximality / variance / MDP experiment suites at desk scale, and runs the
// randomized theory checks. All subcommands are deterministic given their
// configuration; outputs carry the config hash in a header comment.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "catcoup/experiments.hpp"
#include "catcoup/io.hpp"
#include "catcoup/mechanisms.hpp"
#include "catcoup/numeric.hpp"

namespace {

using catcoup::Vec;
using nlohmann::json;

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  in >> j;
  return j;
}

struct CommonFlags {
  std::string config_path;
  std::string out_dir = "out";
  std::string profile = "desk";
  std::vector<std::uint64_t> seeds;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON configuration file");
  cmd->add_option("--out", flags.out_dir, "output directory");
  cmd->add_option("--profile", flags.profile, "defaults profile")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", flags.seeds, "seed list")->delimiter(',');
}

void apply_profile(catcoup::ModelConfig& model, catcoup::TrainConfig& train,
                   const std::string& profile) {
  if (profile == "paper") {
    model.hidden = {1024, 1024};
    model.cluster_count = 20;
    train.iterations = 50000;
    train.learning_rate = 1e-3;
  }
}

void read_model_json(catcoup::ModelConfig& model, const json& j) {
  if (j.contains("gadget"))
    model.kind = j.at("gadget").get<std::string>() == "gadget1" ? catcoup::GadgetKind::Gadget1
                                                                : catcoup::GadgetKind::Gadget2;
  model.outcome_count = j.value("outcome_count", model.outcome_count);
  model.cluster_count = j.value("cluster_count", model.cluster_count);
  model.hidden = j.value("hidden", model.hidden);
  model.sinkhorn_steps = j.value("sinkhorn_steps", model.sinkhorn_steps);
  model.tied = j.value("tied", model.tied);
  model.diagonal_bias = j.value("diagonal_bias", model.diagonal_bias);
  model.output_scale = j.value("output_scale", model.output_scale);
}

void read_train_json(catcoup::TrainConfig& train, const json& j) {
  train.learning_rate = j.value("learning_rate", train.learning_rate);
  train.batch_pairs = j.value("batch_pairs", train.batch_pairs);
  train.noise_draws_per_pair = j.value("noise_draws_per_pair", train.noise_draws_per_pair);
  train.iterations = j.value("iterations", train.iterations);
  train.temperature = j.value("temperature", train.temperature);
  train.seed = j.value("seed", train.seed);
}

int run_train(const CommonFlags& flags) {
  if (flags.config_path.empty()) {
    std::cerr << "train: --config is required\n";
    return 2;
  }
  // the run description is authoritative for `train`; --profile only affects
  // the experiment subcommands
  catcoup::TrainRunDescription run = catcoup::load_train_run(flags.config_path);
  if (!flags.seeds.empty()) run.train.seed = flags.seeds.front();

  const std::string hash = catcoup::config_hash_hex(catcoup::train_run_to_json(run));
  const catcoup::TrainResult result = catcoup::train(run.model, run.query, run.train);

  const std::filesystem::path out(flags.out_dir);
  std::filesystem::create_directories(out);
  catcoup::save_gadget_checkpoint(result.params, out / "checkpoint.json");
  catcoup::save_loss_history_csv(result.loss_history, out / "loss_history.csv", hash);
  std::cout << "trained " << run.train.iterations << " iterations; final loss "
            << (result.loss_history.empty() ? 0.0 : result.loss_history.back()) << "\n"
            << "checkpoint: " << (out / "checkpoint.json").string() << "\n";
  return 0;
}

int run_eval(const CommonFlags& flags, const std::string& checkpoint_path,
             const std::string& coupling_path, const std::string& scores_path,
             const std::string& emit_coupling_path) {
  const std::filesystem::path out(flags.out_dir);
  std::filesystem::create_directories(out);

  if (!coupling_path.empty()) {
    // metrics of a serialized coupling table
    const catcoup::CouplingMatrix coupling = catcoup::load_coupling_csv(coupling_path);
    coupling.validate();
    catcoup::ScoreFunction h;
    if (!scores_path.empty()) {
      h.table = load_json(scores_path).get<Vec>();
    } else {
      h.table.resize(coupling.outcome_count());
      for (std::size_t i = 0; i < h.table.size(); ++i) h.table[i] = static_cast<double>(i);
    }
    const catcoup::CouplingMetrics metrics = catcoup::coupling_metrics(coupling, h, h);
    const json j = {{"mean_diff", metrics.mean_diff},
                    {"var_diff", metrics.var_diff},
                    {"p_mismatch", metrics.p_mismatch}};
    std::cout << j.dump(2) << "\n";
    std::ofstream(out / "coupling_metrics.json") << j.dump(2) << "\n";
    return 0;
  }

  if (checkpoint_path.empty() || flags.config_path.empty()) {
    std::cerr << "eval: need either --coupling or (--checkpoint and --config)\n";
    return 2;
  }
  const catcoup::GadgetParams params = catcoup::load_gadget_checkpoint(checkpoint_path);
  const json config = load_json(flags.config_path);

  catcoup::QuerySpec query;
  {
    // reuse the train-run parser for the query block
    json wrapper = {{"model",
                     {{"gadget", catcoup::kind_of(params) == catcoup::GadgetKind::Gadget1
                                     ? "gadget1"
                                     : "gadget2"},
                      {"outcome_count", catcoup::outcome_count_of(params)}}},
                    {"query", config.at("query")},
                    {"train", json::object()}};
    query = catcoup::parse_train_run(wrapper.dump()).query;
  }
  catcoup::ScoreFunction h;
  if (config.contains("scores")) {
    h.table = config.at("scores").get<Vec>();
  } else {
    h.table.resize(query.outcome_count);
    for (std::size_t i = 0; i < h.table.size(); ++i) h.table[i] = static_cast<double>(i);
  }
  const std::size_t n_pairs = config.value("n_pairs", std::size_t{100});
  const std::size_t n_samples = config.value("n_samples", std::size_t{1000});
  const catcoup::SamplingSetting setting =
      config.value("setting", std::string("joint")) == "counterfactual"
          ? catcoup::SamplingSetting::Counterfactual
          : catcoup::SamplingSetting::Joint;
  std::vector<std::uint64_t> seeds = flags.seeds;
  if (seeds.empty() && config.contains("seeds"))
    seeds = config.at("seeds").get<std::vector<std::uint64_t>>();
  if (seeds.empty()) seeds = {1};

  const catcoup::Mechanism mechanism = catcoup::kind_of(params) == catcoup::GadgetKind::Gadget1
                                           ? catcoup::Mechanism::Gadget1
                                           : catcoup::Mechanism::Gadget2;

  if (!emit_coupling_path.empty()) {
    // empirical coupling of the checkpoint mechanism on one pair from the query
    catcoup::Rng pair_rng(catcoup::Rng::derive(seeds.front(), 3));
    const auto [l1, l2] = query.sample_pair(pair_rng);
    catcoup::PairSampler sampler =
        catcoup::make_mechanism_sampler(mechanism, setting, h, params);
    catcoup::Rng draw_rng(catcoup::Rng::derive(seeds.front(), 5));
    const std::size_t k = query.outcome_count;
    catcoup::Mat counts(k, k, 0.0);
    for (std::size_t s = 0; s < n_samples; ++s) {
      const auto [x, y] = sampler(l1, l2, draw_rng);
      counts(x, y) += 1.0;
    }
    for (double& c : counts.data) c /= static_cast<double>(n_samples);
    catcoup::save_coupling_csv(catcoup::CouplingMatrix::from_joint(std::move(counts)),
                               emit_coupling_path, catcoup::config_hash_hex(config.dump()));
  }

  std::ostringstream csv;
  csv.precision(17);
  csv << "# config " << catcoup::config_hash_hex(config.dump()) << "\n";
  csv << "seed,mean_diff,variance,std_error\n";
  for (const std::uint64_t seed : seeds) {
    catcoup::Rng pair_rng(catcoup::Rng::derive(seed, 3));
    std::vector<std::pair<Vec, Vec>> pairs;
    for (std::size_t i = 0; i < n_pairs; ++i) pairs.push_back(query.sample_pair(pair_rng));
    catcoup::PairSampler sampler = catcoup::make_mechanism_sampler(mechanism, setting, h, params);
    catcoup::Rng eval_rng(catcoup::Rng::derive(seed, 4));
    const catcoup::VarianceReport report =
        catcoup::evaluate_variance(sampler, pairs, h, n_samples, eval_rng);
    csv << seed << "," << report.mean_diff << "," << report.variance << ","
        << report.std_error << "\n";
  }
  std::ofstream(out / "eval_report.csv") << csv.str();
  std::cout << csv.str();
  return 0;
}

int run_maximality_cmd(const CommonFlags& flags) {
  catcoup::MaximalityConfig config;
  apply_profile(config.model, config.train, flags.profile);
  if (!flags.config_path.empty()) {
    const json j = load_json(flags.config_path);
    config.outcome_count = j.value("outcome_count", config.outcome_count);
    config.seed = j.value("seed", config.seed);
    if (j.contains("rho_grid")) config.rho_grid = j.at("rho_grid").get<std::vector<double>>();
    if (j.contains("base_l1")) config.base_l1 = j.at("base_l1").get<Vec>();
    if (j.contains("base_l2")) config.base_l2 = j.at("base_l2").get<Vec>();
    if (j.contains("model")) read_model_json(config.model, j.at("model"));
    if (j.contains("train")) read_train_json(config.train, j.at("train"));
  }
  if (!flags.seeds.empty()) config.seed = flags.seeds.front();
  const catcoup::MaximalityResult result = catcoup::run_maximality(config, flags.out_dir);
  for (const catcoup::MaximalityRow& row : result.rows)
    std::cout << "rho " << row.rho << ": learned " << row.learned_mismatch << " (maximal "
              << row.maximal_mismatch << ", gumbel-max " << row.gumbel_max_mismatch << ")\n";
  return result.summary.ok ? 0 : 1;
}

int run_variance_cmd(const CommonFlags& flags) {
  catcoup::VarianceSuiteConfig config;
  apply_profile(config.gadget1_model, config.train, flags.profile);
  apply_profile(config.gadget2_model, config.train, flags.profile);
  config.gadget1_model.kind = catcoup::GadgetKind::Gadget1;
  if (!flags.config_path.empty()) {
    const json j = load_json(flags.config_path);
    config.outcome_count = j.value("outcome_count", config.outcome_count);
    config.eval_pairs = j.value("eval_pairs", config.eval_pairs);
    config.eval_samples = j.value("eval_samples", config.eval_samples);
    if (j.contains("seeds")) config.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("mechanisms")) {
      config.mechanisms.clear();
      for (const json& m : j.at("mechanisms"))
        config.mechanisms.push_back(catcoup::parse_mechanism(m.get<std::string>()));
    }
    if (j.contains("gadget1_model")) read_model_json(config.gadget1_model, j.at("gadget1_model"));
    if (j.contains("gadget2_model")) read_model_json(config.gadget2_model, j.at("gadget2_model"));
    if (j.contains("train")) read_train_json(config.train, j.at("train"));
    if (j.value("nonmonotone_form", std::string("sine_of_gaussian")) == "sine_plus_gaussian")
      config.nonmonotone_form = catcoup::NonmonotoneForm::SinePlusGaussian;
  }
  if (!flags.seeds.empty()) config.seeds = flags.seeds;
  const catcoup::VarianceSuiteResult result = catcoup::run_variance_suite(config, flags.out_dir);
  for (const catcoup::VarianceCellResult& row : result.table)
    std::cout << to_string(row.cell) << " / " << to_string(row.mechanism) << ": "
              << row.mean_variance << " +- " << row.std_error << "\n";
  if (!result.summary.ok)
    for (const std::string& failure : result.summary.failures)
      std::cerr << "failure: " << failure << "\n";
  return result.summary.ok ? 0 : 1;
}

int run_mdp_cmd(const CommonFlags& flags) {
  catcoup::MdpExperimentConfig config;
  apply_profile(config.gadget1_model, config.train, flags.profile);
  apply_profile(config.gadget2_model, config.train, flags.profile);
  config.gadget1_model.kind = catcoup::GadgetKind::Gadget1;
  if (flags.profile == "paper") config.train.iterations = 5000;
  if (!flags.config_path.empty()) {
    const json j = load_json(flags.config_path);
    config.env_seed = j.value("env_seed", config.env_seed);
    config.seed = j.value("seed", config.seed);
    config.n_trajectories = j.value("n_trajectories", config.n_trajectories);
    config.max_t = j.value("max_t", config.max_t);
    config.min_support = j.value("min_support", config.min_support);
    config.n_pairs = j.value("n_pairs", config.n_pairs);
    config.n_reward_draws = j.value("n_reward_draws", config.n_reward_draws);
    config.n_samples = j.value("n_samples", config.n_samples);
    config.n_eval_seeds = j.value("n_eval_seeds", config.n_eval_seeds);
    config.behavior_epsilon = j.value("behavior_epsilon", config.behavior_epsilon);
    config.generalized_rho = j.value("generalized_rho", config.generalized_rho);
    config.include_generalized = j.value("include_generalized", config.include_generalized);
    if (j.contains("env")) {
      const json& e = j.at("env");
      config.env.category_counts =
          e.value("category_counts", config.env.category_counts);
      config.env.normal_category = e.value("normal_category", config.env.normal_category);
      config.env.n_treatments = e.value("n_treatments", config.env.n_treatments);
      config.env.discount = e.value("discount", config.env.discount);
    }
    if (j.contains("mechanisms")) {
      config.mechanisms.clear();
      for (const json& m : j.at("mechanisms"))
        config.mechanisms.push_back(catcoup::parse_mechanism(m.get<std::string>()));
    }
    if (j.contains("gadget1_model")) read_model_json(config.gadget1_model, j.at("gadget1_model"));
    if (j.contains("gadget2_model")) read_model_json(config.gadget2_model, j.at("gadget2_model"));
    if (j.contains("train")) read_train_json(config.train, j.at("train"));
  }
  if (!flags.seeds.empty()) config.seed = flags.seeds.front();
  const catcoup::MdpExperimentResult result = catcoup::run_mdp_experiment(config, flags.out_dir);
  std::cout << "query pairs: " << result.n_query_pairs << "\n";
  for (const catcoup::MdpAggregate& agg : result.aggregates)
    std::cout << (agg.generalized ? "generalized " : "fixed ") << to_string(agg.setting) << " "
              << to_string(agg.mechanism) << ": variance " << agg.mean_variance << " +- "
              << agg.std_error << " (mean diff " << agg.mean_diff << ")\n";
  if (!result.summary.ok)
    for (const std::string& failure : result.summary.failures)
      std::cerr << "failure: " << failure << "\n";
  return result.summary.ok ? 0 : 1;
}

int run_theory_cmd(const CommonFlags& flags) {
  catcoup::TheoryChecksConfig config;
  if (!flags.config_path.empty()) {
    const json j = load_json(flags.config_path);
    config.n_pairs = j.value("n_pairs", config.n_pairs);
    config.mc_pairs = j.value("mc_pairs", config.mc_pairs);
    config.mc_draws = j.value("mc_draws", config.mc_draws);
    config.k_min = j.value("k_min", config.k_min);
    config.k_max = j.value("k_max", config.k_max);
    config.seed = j.value("seed", config.seed);
  }
  if (!flags.seeds.empty()) config.seed = flags.seeds.front();
  const catcoup::TheoryChecksResult result = catcoup::run_theory_checks(config, flags.out_dir);
  for (const catcoup::TheoryCheck& check : result.checks)
    std::cout << (check.passed ? "[pass] " : "[FAIL] ") << check.name
              << (check.detail.empty() ? "" : " (" + check.detail + ")") << "\n";
  return result.summary.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"couplings between categorical distributions: training and experiments"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string checkpoint_path, coupling_path, scores_path, emit_coupling_path;

  CLI::App* maximality = app.add_subcommand("maximality", "coupling quality vs training noise");
  add_common(maximality, flags);
  CLI::App* variance = app.add_subcommand("variance", "mechanism x query-distribution table");
  add_common(variance, flags);
  CLI::App* mdp = app.add_subcommand("mdp", "treatment-effect variance on the synthetic MDP");
  add_common(mdp, flags);
  CLI::App* theory = app.add_subcommand("theory", "randomized closed-form checks");
  add_common(theory, flags);
  CLI::App* train_cmd = app.add_subcommand("train", "train a gadget from a run description");
  add_common(train_cmd, flags);
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or a coupling table");
  add_common(eval_cmd, flags);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "gadget checkpoint JSON");
  eval_cmd->add_option("--coupling", coupling_path, "coupling CSV (with marginals sidecar)");
  eval_cmd->add_option("--scores", scores_path, "score table JSON array");
  eval_cmd->add_option("--emit-coupling", emit_coupling_path,
                       "write the empirical coupling of the checkpoint to this CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (maximality->parsed()) return run_maximality_cmd(flags);
    if (variance->parsed()) return run_variance_cmd(flags);
    if (mdp->parsed()) return run_mdp_cmd(flags);
    if (theory->parsed()) return run_theory_cmd(flags);
    if (train_cmd->parsed()) return run_train(flags);
    if (eval_cmd->parsed())
      return run_eval(flags, checkpoint_path, coupling_path, scores_path, emit_coupling_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

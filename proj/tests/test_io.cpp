#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "catcoup/io.hpp"
#include "support/stats.hpp"

using namespace catcoup;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "catcoup_io_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("coupling CSV round trip with marginals sidecar") {
  Rng rng(71);
  const Vec p = testsupport::random_simplex(4, rng);
  const Vec q = testsupport::random_simplex(4, rng);
  const CouplingMatrix original = inverse_cdf_coupling(p, q);
  const auto path = temp_dir() / "coupling.csv";
  save_coupling_csv(original, path, "deadbeef");

  // first line is the config comment, then the exact header
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "# config deadbeef");
  std::getline(in, line);
  CHECK(line == "x,y,prob");
  CHECK(std::filesystem::exists(temp_dir() / "coupling.marginals.json"));

  const CouplingMatrix loaded = load_coupling_csv(path);
  loaded.validate();
  REQUIRE(loaded.joint.data.size() == original.joint.data.size());
  for (std::size_t i = 0; i < loaded.joint.data.size(); ++i)
    CHECK(loaded.joint.data[i] == original.joint.data[i]);
  CHECK(loaded.row_marginal == original.row_marginal);
}

TEST_CASE("gadget checkpoints round trip for both kinds") {
  Rng rng(72);
  const GadgetParams g1{make_gadget1(4, {6, 6}, rng)};
  const GadgetParams g2{make_gadget2(5, 3, {6}, rng)};
  for (const GadgetParams* params : {&g1, &g2}) {
    const auto path = temp_dir() / "checkpoint.json";
    save_gadget_checkpoint(*params, path);
    const GadgetParams loaded = load_gadget_checkpoint(path);
    CHECK(kind_of(loaded) == kind_of(*params));
    CHECK(flatten_params(loaded) == flatten_params(*params));
  }

  // tied parameters survive the round trip
  Gadget1Parameters tied = make_gadget1(4, {6}, rng, /*tied=*/true);
  const auto path = temp_dir() / "tied.json";
  save_gadget_checkpoint(GadgetParams{tied}, path);
  const GadgetParams loaded = load_gadget_checkpoint(path);
  CHECK(std::get<Gadget1Parameters>(loaded).tied);
}

TEST_CASE("train run description round trip") {
  TrainRunDescription run;
  run.model.kind = GadgetKind::Gadget2;
  run.model.outcome_count = 7;
  run.model.cluster_count = 4;
  run.model.hidden = {16, 8};
  run.query.source = PairSource::Mirrored;
  run.query.outcome_count = 7;
  run.query.loss.kind = LossKind::SquaredScoreDiff;
  run.query.loss.scores = {0, 1, 2, 3, 4, 5, 6};
  run.train.iterations = 123;
  run.train.seed = 99;
  run.train.learning_rate = 0.004;

  const TrainRunDescription parsed = parse_train_run(train_run_to_json(run));
  CHECK(parsed.model.kind == run.model.kind);
  CHECK(parsed.model.hidden == run.model.hidden);
  CHECK(parsed.query.source == run.query.source);
  CHECK(parsed.query.loss.scores == run.query.loss.scores);
  CHECK(parsed.train.iterations == run.train.iterations);
  CHECK(parsed.train.seed == run.train.seed);
  CHECK(parsed.train.learning_rate == run.train.learning_rate);
}

TEST_CASE("trajectory CSV round trip and exact header") {
  std::vector<Trajectory> trajectories(2);
  trajectories[0].steps = {{0, 1, 2}, {2, 0, 3}};
  trajectories[1].steps = {{4, 2, 0}};
  const auto path = temp_dir() / "trajectories.csv";
  save_trajectories_csv(trajectories, path, "cafe");

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "# config cafe");
  std::getline(in, line);
  CHECK(line == "traj_id,t,state,action,next_state");

  const std::vector<Trajectory> loaded = load_trajectories_csv(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].steps.size() == 2);
  CHECK(loaded[0].steps[1].next_state == 3);
  CHECK(loaded[1].steps[0].action == 2);
}

TEST_CASE("effect table header matches the interface") {
  const std::vector<EffectRow> rows{
      {Mechanism::GumbelMax, SamplingSetting::Joint, 0, 3, 0.25, 1.5}};
  const auto path = temp_dir() / "effects.csv";
  save_effect_rows_csv(rows, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "mechanism,setting,pair_id,seed,mean_diff,variance");
  std::getline(in, line);
  CHECK(line.substr(0, 17) == "gumbel-max,joint,");
}

TEST_CASE("MDP JSON round trip") {
  Rng rng(73);
  SepsisLikeConfig config;
  config.category_counts = {2, 2};
  config.normal_category = {0, 0};
  config.n_treatments = 2;
  const SepsisLikeModel model = make_synthetic_sepsis_like(config, rng);
  const auto path = temp_dir() / "mdp.json";
  save_mdp_json(model.mdp, path);
  const TabularMDP loaded = load_mdp_json(path);
  CHECK(loaded.n_states == model.mdp.n_states);
  CHECK(loaded.transition == model.mdp.transition);
  CHECK(loaded.absorbing == model.mdp.absorbing);
  CHECK(loaded.state_reward == model.mdp.state_reward);
}

TEST_CASE("config hash is stable and content sensitive") {
  CHECK(config_hash_hex("abc") == config_hash_hex("abc"));
  CHECK(config_hash_hex("abc") != config_hash_hex("abd"));
}

}  // TEST_SUITE

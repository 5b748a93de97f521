#include "catcoup/io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace catcoup {

using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::filesystem::path marginals_sidecar(const std::filesystem::path& csv_path) {
  std::filesystem::path sidecar = csv_path;
  sidecar.replace_extension(".marginals.json");
  return sidecar;
}

json net_to_json(const FeedForwardNet& net) {
  json layers = json::array();
  for (const DenseLayer& layer : net.layers)
    layers.push_back({{"rows", layer.weight.rows},
                      {"cols", layer.weight.cols},
                      {"weight", layer.weight.data},
                      {"bias", layer.bias}});
  return {{"activation", net.activation == Activation::Tanh ? "tanh" : "relu"},
          {"layers", layers}};
}

FeedForwardNet net_from_json(const json& j) {
  FeedForwardNet net;
  const std::string act = j.at("activation").get<std::string>();
  if (act == "tanh")
    net.activation = Activation::Tanh;
  else if (act == "relu")
    net.activation = Activation::Relu;
  else
    throw std::runtime_error("checkpoint: unknown activation " + act);
  for (const json& lj : j.at("layers")) {
    DenseLayer layer;
    layer.weight.rows = lj.at("rows").get<std::size_t>();
    layer.weight.cols = lj.at("cols").get<std::size_t>();
    layer.weight.data = lj.at("weight").get<Vec>();
    layer.bias = lj.at("bias").get<Vec>();
    if (layer.weight.data.size() != layer.weight.rows * layer.weight.cols)
      throw std::runtime_error("checkpoint: weight size mismatch");
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

}  // namespace

std::string config_hash_hex(const std::string& canonical) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : canonical) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << hash;
  return out.str();
}

void save_coupling_csv(const CouplingMatrix& coupling, const std::filesystem::path& csv_path,
                       const std::string& config_hash) {
  std::ostringstream out;
  out.precision(17);
  if (!config_hash.empty()) out << "# config " << config_hash << "\n";
  out << "x,y,prob\n";
  for (std::size_t x = 0; x < coupling.joint.rows; ++x)
    for (std::size_t y = 0; y < coupling.joint.cols; ++y)
      out << x << "," << y << "," << coupling.joint(x, y) << "\n";
  write_file(csv_path, out.str());

  json sidecar = {{"k", coupling.joint.rows},
                  {"row_marginal", coupling.row_marginal},
                  {"col_marginal", coupling.col_marginal}};
  write_file(marginals_sidecar(csv_path), sidecar.dump(2) + "\n");
}

CouplingMatrix load_coupling_csv(const std::filesystem::path& csv_path) {
  const json sidecar = json::parse(read_file(marginals_sidecar(csv_path)));
  const std::size_t k = sidecar.at("k").get<std::size_t>();

  CouplingMatrix coupling;
  coupling.joint = Mat(k, k);
  coupling.row_marginal = sidecar.at("row_marginal").get<Vec>();
  coupling.col_marginal = sidecar.at("col_marginal").get<Vec>();

  std::istringstream in(read_file(csv_path));
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "x,y,prob") throw std::runtime_error("coupling CSV: bad header");
      header_seen = true;
      continue;
    }
    std::istringstream row(line);
    std::size_t x, y;
    char comma;
    double prob;
    if (!(row >> x >> comma >> y >> comma >> prob))
      throw std::runtime_error("coupling CSV: bad row: " + line);
    if (x >= k || y >= k) throw std::runtime_error("coupling CSV: index out of range");
    coupling.joint(x, y) = prob;
  }
  if (!header_seen) throw std::runtime_error("coupling CSV: missing header");
  return coupling;
}

void save_gadget_checkpoint(const GadgetParams& params, const std::filesystem::path& path) {
  json j;
  j["version"] = kCheckpointVersion;
  if (const auto* g1 = std::get_if<Gadget1Parameters>(&params)) {
    j["kind"] = "gadget1";
    j["outcome_count"] = g1->outcome_count;
    j["tied"] = g1->tied;
    j["net_p"] = net_to_json(g1->net_p);
    if (!g1->tied) j["net_q"] = net_to_json(g1->net_q);
  } else {
    const auto& g2 = std::get<Gadget2Parameters>(params);
    j["kind"] = "gadget2";
    j["cluster_count"] = g2.cluster_count;
    j["cluster_prior"] = g2.cluster_prior;
    j["sinkhorn_steps"] = g2.sinkhorn_steps;
    j["net"] = net_to_json(g2.net);
  }
  write_file(path, j.dump(2) + "\n");
}

GadgetParams load_gadget_checkpoint(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "gadget1") {
    Gadget1Parameters params;
    params.outcome_count = j.at("outcome_count").get<std::size_t>();
    params.tied = j.at("tied").get<bool>();
    params.net_p = net_from_json(j.at("net_p"));
    params.net_q = params.tied ? params.net_p : net_from_json(j.at("net_q"));
    params.validate();
    return params;
  }
  if (kind == "gadget2") {
    Gadget2Parameters params;
    params.cluster_count = j.at("cluster_count").get<std::size_t>();
    params.cluster_prior = j.at("cluster_prior").get<Vec>();
    params.sinkhorn_steps = j.at("sinkhorn_steps").get<int>();
    params.net = net_from_json(j.at("net"));
    params.validate();
    return params;
  }
  throw std::runtime_error("checkpoint: unknown kind " + kind);
}

namespace {

PairSource parse_source(const std::string& name) {
  if (name == "independent") return PairSource::IndependentRandom;
  if (name == "mirrored") return PairSource::Mirrored;
  if (name == "fixed_perturbed") return PairSource::FixedPerturbed;
  if (name == "explicit") return PairSource::ExplicitList;
  throw std::runtime_error("train run: unknown pair source " + name);
}

std::string source_name(PairSource source) {
  switch (source) {
    case PairSource::IndependentRandom: return "independent";
    case PairSource::Mirrored: return "mirrored";
    case PairSource::FixedPerturbed: return "fixed_perturbed";
    case PairSource::ExplicitList: return "explicit";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "squared_score_diff") return LossKind::SquaredScoreDiff;
  if (name == "mismatch") return LossKind::Mismatch;
  if (name == "table") return LossKind::Table;
  throw std::runtime_error("train run: unknown loss kind " + name);
}

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::SquaredScoreDiff: return "squared_score_diff";
    case LossKind::Mismatch: return "mismatch";
    case LossKind::Table: return "table";
  }
  return "?";
}

}  // namespace

TrainRunDescription parse_train_run(const std::string& json_text) {
  const json j = json::parse(json_text);
  TrainRunDescription run;

  const json& mj = j.at("model");
  const std::string kind = mj.at("gadget").get<std::string>();
  if (kind == "gadget1")
    run.model.kind = GadgetKind::Gadget1;
  else if (kind == "gadget2")
    run.model.kind = GadgetKind::Gadget2;
  else
    throw std::runtime_error("train run: unknown gadget " + kind);
  run.model.outcome_count = mj.at("outcome_count").get<std::size_t>();
  run.model.cluster_count = mj.value("cluster_count", std::size_t{5});
  run.model.hidden = mj.value("hidden", std::vector<std::size_t>{64, 64});
  run.model.sinkhorn_steps = mj.value("sinkhorn_steps", 10);
  run.model.tied = mj.value("tied", false);
  run.model.diagonal_bias = mj.value("diagonal_bias", 0.0);
  run.model.output_scale = mj.value("output_scale", 1.0);

  const json& qj = j.at("query");
  run.query.source = parse_source(qj.at("source").get<std::string>());
  run.query.outcome_count = run.model.outcome_count;
  run.query.logit_scale = qj.value("logit_scale", 1.0);
  run.query.noise_scale = qj.value("noise_scale", 0.0);
  if (qj.contains("base_l1")) run.query.base_l1 = qj.at("base_l1").get<Vec>();
  if (qj.contains("base_l2")) run.query.base_l2 = qj.at("base_l2").get<Vec>();
  if (qj.contains("pairs"))
    for (const json& pj : qj.at("pairs"))
      run.query.pairs.push_back({pj.at(0).get<Vec>(), pj.at(1).get<Vec>()});

  const json& lj = qj.at("loss");
  run.query.loss.kind = parse_loss_kind(lj.at("kind").get<std::string>());
  if (lj.contains("scores")) run.query.loss.scores = lj.at("scores").get<Vec>();
  if (lj.contains("table")) {
    const auto rows = lj.at("table").get<std::vector<Vec>>();
    run.query.loss.table = Mat(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[r].size(); ++c) run.query.loss.table(r, c) = rows[r][c];
  }

  const json& tj = j.at("train");
  run.train.learning_rate = tj.value("learning_rate", 3e-3);
  run.train.batch_pairs = tj.value("batch_pairs", std::size_t{64});
  run.train.noise_draws_per_pair = tj.value("noise_draws_per_pair", std::size_t{16});
  run.train.iterations = tj.value("iterations", std::size_t{5000});
  run.train.temperature = tj.value("temperature", 1.0);
  run.train.seed = tj.value("seed", std::uint64_t{1});
  if (tj.contains("adam")) {
    const json& aj = tj.at("adam");
    run.train.adam.beta1 = aj.value("beta1", 0.9);
    run.train.adam.beta2 = aj.value("beta2", 0.999);
    run.train.adam.epsilon = aj.value("epsilon", 1e-8);
  }
  return run;
}

TrainRunDescription load_train_run(const std::filesystem::path& path) {
  return parse_train_run(read_file(path));
}

std::string train_run_to_json(const TrainRunDescription& run) {
  json j;
  j["model"] = {
      {"gadget", run.model.kind == GadgetKind::Gadget1 ? "gadget1" : "gadget2"},
      {"outcome_count", run.model.outcome_count},
      {"cluster_count", run.model.cluster_count},
      {"hidden", run.model.hidden},
      {"sinkhorn_steps", run.model.sinkhorn_steps},
      {"tied", run.model.tied},
      {"diagonal_bias", run.model.diagonal_bias},
      {"output_scale", run.model.output_scale},
  };
  json qj = {
      {"source", source_name(run.query.source)},
      {"logit_scale", run.query.logit_scale},
      {"noise_scale", run.query.noise_scale},
  };
  if (!run.query.base_l1.empty()) qj["base_l1"] = run.query.base_l1;
  if (!run.query.base_l2.empty()) qj["base_l2"] = run.query.base_l2;
  if (!run.query.pairs.empty()) {
    json pairs = json::array();
    for (const auto& [l1, l2] : run.query.pairs) pairs.push_back({l1, l2});
    qj["pairs"] = pairs;
  }
  json lj = {{"kind", loss_kind_name(run.query.loss.kind)}};
  if (!run.query.loss.scores.empty()) lj["scores"] = run.query.loss.scores;
  if (run.query.loss.table.size() > 0) {
    std::vector<Vec> rows;
    for (std::size_t r = 0; r < run.query.loss.table.rows; ++r) {
      const double* base = run.query.loss.table.data.data() + r * run.query.loss.table.cols;
      rows.emplace_back(base, base + run.query.loss.table.cols);
    }
    lj["table"] = rows;
  }
  qj["loss"] = lj;
  j["query"] = qj;
  j["train"] = {
      {"learning_rate", run.train.learning_rate},
      {"batch_pairs", run.train.batch_pairs},
      {"noise_draws_per_pair", run.train.noise_draws_per_pair},
      {"iterations", run.train.iterations},
      {"temperature", run.train.temperature},
      {"seed", run.train.seed},
      {"adam",
       {{"beta1", run.train.adam.beta1},
        {"beta2", run.train.adam.beta2},
        {"epsilon", run.train.adam.epsilon}}},
  };
  return j.dump(2);
}

void save_loss_history_csv(const Vec& history, const std::filesystem::path& path,
                           const std::string& config_hash) {
  std::ostringstream out;
  out.precision(17);
  if (!config_hash.empty()) out << "# config " << config_hash << "\n";
  out << "iteration,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) out << i << "," << history[i] << "\n";
  write_file(path, out.str());
}

void save_trajectories_csv(const std::vector<Trajectory>& trajectories,
                           const std::filesystem::path& path, const std::string& config_hash) {
  std::ostringstream out;
  if (!config_hash.empty()) out << "# config " << config_hash << "\n";
  out << "traj_id,t,state,action,next_state\n";
  for (std::size_t id = 0; id < trajectories.size(); ++id)
    for (std::size_t t = 0; t < trajectories[id].steps.size(); ++t) {
      const Step& step = trajectories[id].steps[t];
      out << id << "," << t << "," << step.state << "," << step.action << ","
          << step.next_state << "\n";
    }
  write_file(path, out.str());
}

std::vector<Trajectory> load_trajectories_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Trajectory> trajectories;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "traj_id,t,state,action,next_state")
        throw std::runtime_error("trajectory CSV: bad header");
      header_seen = true;
      continue;
    }
    std::istringstream row(line);
    std::size_t id, t, s, a, s2;
    char comma;
    if (!(row >> id >> comma >> t >> comma >> s >> comma >> a >> comma >> s2))
      throw std::runtime_error("trajectory CSV: bad row: " + line);
    if (id >= trajectories.size()) trajectories.resize(id + 1);
    if (trajectories[id].steps.size() != t)
      throw std::runtime_error("trajectory CSV: steps out of order");
    trajectories[id].steps.push_back({s, a, s2});
  }
  return trajectories;
}

void save_effect_rows_csv(const std::vector<EffectRow>& rows, const std::filesystem::path& path,
                          const std::string& config_hash) {
  std::ostringstream out;
  out.precision(17);
  if (!config_hash.empty()) out << "# config " << config_hash << "\n";
  out << "mechanism,setting,pair_id,seed,mean_diff,variance\n";
  for (const EffectRow& row : rows)
    out << to_string(row.mechanism) << "," << to_string(row.setting) << "," << row.pair_index
        << "," << row.seed << "," << row.mean_diff << "," << row.variance << "\n";
  write_file(path, out.str());
}

void save_mdp_json(const TabularMDP& mdp, const std::filesystem::path& path) {
  std::vector<std::size_t> absorbing;
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    if (mdp.absorbing[s]) absorbing.push_back(s);
  const json j = {{"n_states", mdp.n_states},
                  {"n_actions", mdp.n_actions},
                  {"discount", mdp.discount},
                  {"transition", mdp.transition},
                  {"state_reward", mdp.state_reward},
                  {"absorbing", absorbing}};
  write_file(path, j.dump() + "\n");
}

TabularMDP load_mdp_json(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  TabularMDP mdp;
  mdp.n_states = j.at("n_states").get<std::size_t>();
  mdp.n_actions = j.at("n_actions").get<std::size_t>();
  mdp.discount = j.at("discount").get<double>();
  mdp.transition = j.at("transition").get<std::vector<double>>();
  mdp.state_reward = j.at("state_reward").get<Vec>();
  mdp.absorbing.assign(mdp.n_states, false);
  for (const std::size_t s : j.at("absorbing").get<std::vector<std::size_t>>())
    mdp.absorbing[s] = true;
  mdp.validate();
  return mdp;
}

}  // namespace catcoup

#include "catcoup/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "catcoup/numeric.hpp"
#include "catcoup/tape.hpp"

namespace catcoup {

GadgetKind kind_of(const GadgetParams& params) {
  return std::holds_alternative<Gadget1Parameters>(params) ? GadgetKind::Gadget1
                                                           : GadgetKind::Gadget2;
}

std::size_t outcome_count_of(const GadgetParams& params) {
  if (const auto* g1 = std::get_if<Gadget1Parameters>(&params)) return g1->outcome_count;
  return std::get<Gadget2Parameters>(params).outcome_count();
}

Mat LossSpec::loss_table(std::size_t k) const {
  Mat g(k, k);
  switch (kind) {
    case LossKind::SquaredScoreDiff: {
      if (scores.size() != k)
        throw std::invalid_argument("LossSpec: scores length must equal K");
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y) {
          const double d = scores[x] - scores[y];
          g(x, y) = d * d;
        }
      break;
    }
    case LossKind::Mismatch:
      for (std::size_t x = 0; x < k; ++x)
        for (std::size_t y = 0; y < k; ++y) g(x, y) = (x == y) ? 0.0 : 1.0;
      break;
    case LossKind::Table:
      if (table.rows != k || table.cols != k)
        throw std::invalid_argument("LossSpec: table must be K x K");
      g = table;
      break;
  }
  if (!all_finite(g.data)) throw std::invalid_argument("LossSpec: loss table must be finite");
  return g;
}

std::pair<Vec, Vec> QuerySpec::sample_pair(Rng& rng) const {
  switch (source) {
    case PairSource::IndependentRandom: {
      Vec l1 = rng.normal_vector(outcome_count);
      Vec l2 = rng.normal_vector(outcome_count);
      for (double& x : l1) x *= logit_scale;
      for (double& x : l2) x *= logit_scale;
      return {std::move(l1), std::move(l2)};
    }
    case PairSource::Mirrored: {
      Vec l1 = rng.normal_vector(outcome_count);
      for (double& x : l1) x *= logit_scale;
      Vec l2(l1.rbegin(), l1.rend());
      return {std::move(l1), std::move(l2)};
    }
    case PairSource::FixedPerturbed: {
      Vec l1 = base_l1, l2 = base_l2;
      if (noise_scale != 0.0) {
        for (double& x : l1) x += noise_scale * rng.normal();
        for (double& x : l2) x += noise_scale * rng.normal();
      }
      return {std::move(l1), std::move(l2)};
    }
    case PairSource::ExplicitList:
      return pairs[rng.uniform_index(pairs.size())];
  }
  throw std::logic_error("QuerySpec: unknown source");
}

void QuerySpec::validate() const {
  if (outcome_count < 2) throw std::invalid_argument("QuerySpec: K must be >= 2");
  if (source == PairSource::FixedPerturbed) {
    if (base_l1.size() != outcome_count || base_l2.size() != outcome_count)
      throw std::invalid_argument("QuerySpec: base pair length mismatch");
    require_finite_logits(base_l1, "QuerySpec.base_l1");
    require_finite_logits(base_l2, "QuerySpec.base_l2");
  }
  if (source == PairSource::ExplicitList) {
    if (pairs.empty()) throw std::invalid_argument("QuerySpec: explicit pair list is empty");
    for (const auto& [l1, l2] : pairs) {
      if (l1.size() != outcome_count || l2.size() != outcome_count)
        throw std::invalid_argument("QuerySpec: explicit pair length mismatch");
      require_finite_logits(l1, "QuerySpec.pairs");
      require_finite_logits(l2, "QuerySpec.pairs");
    }
  }
}

void TrainConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("TrainConfig: temperature must be > 0");
  if (batch_pairs < 1 || noise_draws_per_pair < 1)
    throw std::invalid_argument("TrainConfig: counts must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
}

GadgetParams init_gadget(const ModelConfig& config, Rng& rng) {
  if (config.kind == GadgetKind::Gadget1) {
    Gadget1Parameters params = make_gadget1(config.outcome_count, config.hidden, rng,
                                            config.tied, config.activation,
                                            config.output_scale);
    if (config.diagonal_bias != 0.0) add_diagonal_bias(params, config.diagonal_bias);
    return params;
  }
  return make_gadget2(config.outcome_count, config.cluster_count, config.hidden, rng,
                      config.sinkhorn_steps, config.activation, config.output_scale);
}

ScoreFunction reward_monotone(std::size_t k, Rng& rng) {
  ScoreFunction h;
  h.table.resize(k);
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    acc += rng.uniform_open01();
    h.table[i] = acc;
  }
  return h;
}

ScoreFunction reward_nonmonotone(std::size_t k, Rng& rng, NonmonotoneForm form) {
  ScoreFunction h;
  h.table.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double g = rng.normal();
    h.table[i] = (form == NonmonotoneForm::SineOfGaussian)
                     ? std::sin(30.0 * g)
                     : std::sin(30.0 * static_cast<double>(i)) + g;
  }
  return h;
}

NoiseBatch make_noise_batch(GadgetKind kind, std::size_t outcome_count,
                            std::size_t cluster_count, std::size_t n_pairs,
                            std::size_t n_draws, Rng& rng) {
  NoiseBatch batch(n_pairs);
  for (auto& draws : batch) {
    draws.resize(n_draws);
    for (NoiseDraw& draw : draws) {
      if (kind == GadgetKind::Gadget1) {
        draw.matrix = Mat(outcome_count, outcome_count);
        for (double& g : draw.matrix.data) g = rng.gumbel();
      } else {
        draw.cluster = rng.gumbel_vector(cluster_count);
        draw.outcome = rng.gumbel_vector(outcome_count);
      }
    }
  }
  return batch;
}

namespace {

using ad::Tape;
using ad::Var;

struct NetLeaves {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

NetLeaves register_net(Tape& tape, const FeedForwardNet& net) {
  NetLeaves leaves;
  for (const DenseLayer& layer : net.layers) {
    leaves.weights.push_back(tape.leaf(layer.weight));
    leaves.biases.push_back(tape.leaf(layer.bias));
  }
  return leaves;
}

Var net_forward(Tape& tape, const NetLeaves& leaves, Activation activation, const Vec& input) {
  Var h = tape.leaf(input);
  for (std::size_t li = 0; li < leaves.weights.size(); ++li) {
    h = tape.affine(leaves.weights[li], h, leaves.biases[li]);
    if (li + 1 < leaves.weights.size())
      h = (activation == Activation::Tanh) ? tape.tanh_(h) : tape.relu(h);
  }
  return h;
}

/// log pi(x, z | l) for one gadget-1 side as a K x K tape node.
Var build_g1_log_joint(Tape& tape, const NetLeaves& leaves, Activation activation,
                       const Vec& logits) {
  const std::size_t k = logits.size();
  const Vec log_p = stabilized_log_softmax(logits);
  Vec p(k);
  for (std::size_t x = 0; x < k; ++x) p[x] = std::exp(log_p[x]);
  const Var raw = net_forward(tape, leaves, activation, log_p);
  const Var scores = tape.reshape(raw, k, k);
  const Var over_z = tape.row_softmax(scores);
  const Var joint = tape.mul_rows_const(over_z, p);
  return tape.log_(joint);
}

/// pi(x | z, l) for gadget 2 as a Z x K tape node (mirrors gadget2_conditional).
Var build_g2_conditional(Tape& tape, const NetLeaves& leaves, const Gadget2Parameters& params,
                         const Vec& logits) {
  const std::size_t k = params.outcome_count();
  const Vec log_p = stabilized_log_softmax(logits);
  Vec p(k);
  for (std::size_t x = 0; x < k; ++x) p[x] = std::exp(log_p[x]);
  const Vec& prior = params.cluster_prior;

  const Var raw = net_forward(tape, leaves, params.net.activation, log_p);
  Var a = tape.softplus_shift(tape.reshape(raw, params.cluster_count, k), 1e-6);
  for (int t = 0; t < params.sinkhorn_steps; ++t) {
    a = tape.rescale_cols_to(a, p);
    a = tape.rescale_rows_to(a, prior);
  }
  const Var cs = tape.col_sums_(a);
  const Var c = tape.const_div(p, cs);
  const Var c_star = tape.max_all(c);
  const Var scaled = tape.mul_cols(a, tape.div_scalar(c, c_star));
  const Var first = tape.div_rows_const(scaled, prior);
  const Var d = tape.div_elem_const(tape.rows_dot(a, c), prior);
  const Var fallback = tape.outer_const(tape.one_minus_div_scalar(d, c_star), p);
  return tape.add(first, fallback);
}

struct BuiltLoss {
  Var loss;
  std::vector<Var> leaf_slots;  // flatten order
};

BuiltLoss build_batch_loss(Tape& tape, const GadgetParams& params, const PairBatch& pair_batch,
                           const NoiseBatch& noise_batch, const Mat& loss_table,
                           double temperature) {
  if (pair_batch.size() != noise_batch.size())
    throw std::invalid_argument("surrogate_loss: pair/noise batch size mismatch");
  if (pair_batch.empty()) throw std::invalid_argument("surrogate_loss: empty batch");

  BuiltLoss built;
  std::vector<Var> draws;

  if (const auto* g1 = std::get_if<Gadget1Parameters>(&params)) {
    const NetLeaves leaves_p = register_net(tape, g1->net_p);
    const NetLeaves leaves_q = g1->tied ? leaves_p : register_net(tape, g1->net_q);
    for (std::size_t b = 0; b < pair_batch.size(); ++b) {
      const auto& [l1, l2] = pair_batch[b];
      const Var lj1 = build_g1_log_joint(tape, leaves_p, g1->net_p.activation, l1);
      const Var lj2 = build_g1_log_joint(tape, leaves_q, g1->q_net().activation, l2);
      for (const NoiseDraw& draw : noise_batch[b]) {
        const Var s1 = tape.add_const(lj1, draw.matrix.data);
        const Var s2 = tape.add_const(lj2, transposed(draw.matrix).data);
        const Var f1 = tape.softmax_temp(tape.row_max(s1), temperature);
        const Var f2 = tape.softmax_temp(tape.row_max(s2), temperature);
        draws.push_back(tape.bilinear_const(f1, loss_table, f2));
      }
    }
    for (std::size_t li = 0; li < leaves_p.weights.size(); ++li) {
      built.leaf_slots.push_back(leaves_p.weights[li]);
      built.leaf_slots.push_back(leaves_p.biases[li]);
    }
    if (!g1->tied)
      for (std::size_t li = 0; li < leaves_q.weights.size(); ++li) {
        built.leaf_slots.push_back(leaves_q.weights[li]);
        built.leaf_slots.push_back(leaves_q.biases[li]);
      }
  } else {
    const auto& g2 = std::get<Gadget2Parameters>(params);
    const NetLeaves leaves = register_net(tape, g2.net);
    Vec log_prior(g2.cluster_count);
    for (std::size_t z = 0; z < g2.cluster_count; ++z)
      log_prior[z] = std::log(g2.cluster_prior[z]);
    for (std::size_t b = 0; b < pair_batch.size(); ++b) {
      const auto& [l1, l2] = pair_batch[b];
      const Var lc1 = tape.log_(build_g2_conditional(tape, leaves, g2, l1));
      const Var lc2 = tape.log_(build_g2_conditional(tape, leaves, g2, l2));
      for (const NoiseDraw& draw : noise_batch[b]) {
        // The cluster draw stays hard; the prior carries no parameters.
        std::size_t z_hat = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t z = 0; z < g2.cluster_count; ++z) {
          const double v = log_prior[z] + draw.cluster[z];
          if (v > best) {
            best = v;
            z_hat = z;
          }
        }
        const Var u1 = tape.add_const(tape.row(lc1, z_hat), draw.outcome);
        const Var u2 = tape.add_const(tape.row(lc2, z_hat), draw.outcome);
        const Var f1 = tape.softmax_temp(u1, temperature);
        const Var f2 = tape.softmax_temp(u2, temperature);
        draws.push_back(tape.bilinear_const(f1, loss_table, f2));
      }
    }
    for (std::size_t li = 0; li < leaves.weights.size(); ++li) {
      built.leaf_slots.push_back(leaves.weights[li]);
      built.leaf_slots.push_back(leaves.biases[li]);
    }
  }

  built.loss = tape.mean_of(draws);
  return built;
}

void append_net(const FeedForwardNet& net, Vec& flat) {
  for (const DenseLayer& layer : net.layers) {
    flat.insert(flat.end(), layer.weight.data.begin(), layer.weight.data.end());
    flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
  }
}

std::size_t read_net(FeedForwardNet& net, const Vec& flat, std::size_t offset) {
  for (DenseLayer& layer : net.layers) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
              flat.begin() + static_cast<std::ptrdiff_t>(offset + layer.weight.size()),
              layer.weight.data.begin());
    offset += layer.weight.size();
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
              flat.begin() + static_cast<std::ptrdiff_t>(offset + layer.bias.size()),
              layer.bias.begin());
    offset += layer.bias.size();
  }
  return offset;
}

}  // namespace

double surrogate_loss(const GadgetParams& params, const PairBatch& pair_batch,
                      const NoiseBatch& noise_batch, const Mat& loss_table,
                      double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("surrogate_loss: temperature must be > 0");
  Tape tape;
  const BuiltLoss built = build_batch_loss(tape, params, pair_batch, noise_batch, loss_table,
                                           temperature);
  return tape.scalar(built.loss);
}

LossAndGrad gradient(const GadgetParams& params, const PairBatch& pair_batch,
                     const NoiseBatch& noise_batch, const Mat& loss_table, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("gradient: temperature must be > 0");
  Tape tape;
  const BuiltLoss built = build_batch_loss(tape, params, pair_batch, noise_batch, loss_table,
                                           temperature);
  tape.backward(built.loss);
  LossAndGrad out;
  out.loss = tape.scalar(built.loss);
  for (Var leaf : built.leaf_slots) {
    const Vec& g = tape.grad(leaf);
    out.grad.insert(out.grad.end(), g.begin(), g.end());
  }
  return out;
}

Vec flatten_params(const GadgetParams& params) {
  Vec flat;
  if (const auto* g1 = std::get_if<Gadget1Parameters>(&params)) {
    append_net(g1->net_p, flat);
    if (!g1->tied) append_net(g1->net_q, flat);
  } else {
    append_net(std::get<Gadget2Parameters>(params).net, flat);
  }
  return flat;
}

void unflatten_params(GadgetParams& params, const Vec& flat) {
  std::size_t offset = 0;
  if (auto* g1 = std::get_if<Gadget1Parameters>(&params)) {
    offset = read_net(g1->net_p, flat, offset);
    if (!g1->tied) offset = read_net(g1->net_q, flat, offset);
  } else {
    offset = read_net(std::get<Gadget2Parameters>(params).net, flat, offset);
  }
  if (offset != flat.size())
    throw std::invalid_argument("unflatten_params: flat size mismatch");
}

void adam_step(OptimizerState& state, Vec& params, const Vec& grad, double learning_rate,
               const AdamConfig& config) {
  if (params.size() != grad.size())
    throw std::invalid_argument("adam_step: parameter/gradient shape mismatch");
  if (state.first_moment.empty()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
    state.step = 0;
  }
  if (state.first_moment.size() != params.size())
    throw std::invalid_argument("adam_step: state shape mismatch");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.first_moment[i] = config.beta1 * state.first_moment[i] + (1.0 - config.beta1) * grad[i];
    state.second_moment[i] =
        config.beta2 * state.second_moment[i] + (1.0 - config.beta2) * grad[i] * grad[i];
    const double m_hat = state.first_moment[i] / bc1;
    const double v_hat = state.second_moment[i] / bc2;
    params[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

TrainResult train(const ModelConfig& model, const QuerySpec& query, const TrainConfig& config) {
  Rng init_rng(Rng::derive(config.seed, 0));
  return train_from(init_gadget(model, init_rng), query, config);
}

TrainResult train_from(GadgetParams initial, const QuerySpec& query, const TrainConfig& config) {
  config.validate();
  query.validate();
  const GadgetKind kind = kind_of(initial);
  const std::size_t k = outcome_count_of(initial);
  if (query.outcome_count != k)
    throw std::invalid_argument("train: query/model outcome count mismatch");
  const std::size_t z = (kind == GadgetKind::Gadget2)
                            ? std::get<Gadget2Parameters>(initial).cluster_count
                            : 0;
  const Mat loss_table = query.loss.loss_table(k);

  TrainResult result;
  result.params = std::move(initial);
  result.loss_history.reserve(config.iterations);

  Vec flat = flatten_params(result.params);
  OptimizerState opt;
  Rng pair_rng(Rng::derive(config.seed, 1));
  Rng noise_rng(Rng::derive(config.seed, 2));

  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    PairBatch batch;
    batch.reserve(config.batch_pairs);
    for (std::size_t b = 0; b < config.batch_pairs; ++b)
      batch.push_back(query.sample_pair(pair_rng));
    const NoiseBatch noise = make_noise_batch(kind, k, z, config.batch_pairs,
                                              config.noise_draws_per_pair, noise_rng);
    const LossAndGrad lg = gradient(result.params, batch, noise, loss_table,
                                    config.temperature);
    if (!std::isfinite(lg.loss))
      throw std::runtime_error("train: non-finite loss at iteration " + std::to_string(iter));
    result.loss_history.push_back(lg.loss);
    adam_step(opt, flat, lg.grad, config.learning_rate, config.adam);
    unflatten_params(result.params, flat);
  }
  return result;
}

VarianceReport evaluate_variance(const PairSampler& sampler,
                                 const std::vector<std::pair<Vec, Vec>>& pairs,
                                 const ScoreFunction& h, std::size_t n_samples, Rng& rng) {
  if (n_samples < 2) throw std::invalid_argument("evaluate_variance: n_samples must be >= 2");
  if (pairs.empty()) throw std::invalid_argument("evaluate_variance: no pairs");
  Vec pair_means, pair_vars;
  Vec diffs(n_samples);
  for (const auto& [l1, l2] : pairs) {
    for (std::size_t s = 0; s < n_samples; ++s) {
      const auto [x, y] = sampler(l1, l2, rng);
      diffs[s] = h.table[x] - h.table[y];
    }
    const double m = mean(diffs);
    double v = 0.0;
    for (double d : diffs) v += (d - m) * (d - m);
    v /= static_cast<double>(n_samples - 1);
    pair_means.push_back(m);
    pair_vars.push_back(v);
  }
  VarianceReport report;
  report.mean_diff = mean(pair_means);
  report.variance = mean(pair_vars);
  if (pair_vars.size() > 1) {
    double s2 = 0.0;
    for (double v : pair_vars) s2 += (v - report.variance) * (v - report.variance);
    s2 /= static_cast<double>(pair_vars.size() - 1);
    report.std_error = std::sqrt(s2 / static_cast<double>(pair_vars.size()));
  }
  return report;
}

}  // namespace catcoup

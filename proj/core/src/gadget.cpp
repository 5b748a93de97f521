#include "catcoup/gadget.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "catcoup/gumbel.hpp"
#include "catcoup/numeric.hpp"

namespace catcoup {

Vec FeedForwardNet::forward(const Vec& input) const {
  Vec h = input;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const DenseLayer& layer = layers[li];
    Vec next(layer.weight.rows);
    for (std::size_t i = 0; i < layer.weight.rows; ++i) {
      double s = layer.bias[i];
      const double* wr = layer.weight.data.data() + i * layer.weight.cols;
      for (std::size_t j = 0; j < layer.weight.cols; ++j) s += wr[j] * h[j];
      next[i] = s;
    }
    if (li + 1 < layers.size()) {
      if (activation == Activation::Tanh)
        for (double& x : next) x = std::tanh(x);
      else
        for (double& x : next) x = x > 0.0 ? x : 0.0;
    }
    h = std::move(next);
  }
  return h;
}

std::size_t FeedForwardNet::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

void FeedForwardNet::validate() const {
  if (layers.empty()) throw std::invalid_argument("FeedForwardNet: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const DenseLayer& layer = layers[i];
    if (layer.bias.size() != layer.weight.rows)
      throw std::invalid_argument("FeedForwardNet: bias size mismatch");
    if (i > 0 && layer.weight.cols != layers[i - 1].weight.rows)
      throw std::invalid_argument("FeedForwardNet: layer dimensions do not compose");
    for (double w : layer.weight.data)
      if (!std::isfinite(w)) throw std::invalid_argument("FeedForwardNet: non-finite weight");
    for (double b : layer.bias)
      if (!std::isfinite(b)) throw std::invalid_argument("FeedForwardNet: non-finite bias");
  }
}

FeedForwardNet make_ffn(std::size_t in_dim, const std::vector<std::size_t>& hidden,
                        std::size_t out_dim, Rng& rng, Activation activation,
                        double output_scale) {
  FeedForwardNet net;
  net.activation = activation;
  std::vector<std::size_t> dims;
  dims.push_back(in_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out_dim);
  for (std::size_t li = 0; li + 1 < dims.size(); ++li) {
    DenseLayer layer;
    layer.weight = Mat(dims[li + 1], dims[li]);
    layer.bias = Vec(dims[li + 1], 0.0);
    double scale = 1.0 / std::sqrt(static_cast<double>(dims[li]));
    if (li + 2 == dims.size()) scale *= output_scale;
    for (double& w : layer.weight.data) w = scale * rng.normal();
    net.layers.push_back(std::move(layer));
  }
  return net;
}

void Gadget1Parameters::validate() const {
  if (outcome_count < 2) throw std::invalid_argument("Gadget1Parameters: K must be >= 2");
  net_p.validate();
  if (net_p.input_size() != outcome_count || net_p.output_size() != outcome_count * outcome_count)
    throw std::invalid_argument("Gadget1Parameters: net_p must map K to K*K");
  if (!tied) {
    net_q.validate();
    if (net_q.input_size() != outcome_count ||
        net_q.output_size() != outcome_count * outcome_count)
      throw std::invalid_argument("Gadget1Parameters: net_q must map K to K*K");
  }
}

Gadget1Parameters make_gadget1(std::size_t outcome_count,
                               const std::vector<std::size_t>& hidden, Rng& rng,
                               bool tied, Activation activation, double output_scale) {
  Gadget1Parameters params;
  params.outcome_count = outcome_count;
  params.tied = tied;
  params.net_p = make_ffn(outcome_count, hidden, outcome_count * outcome_count, rng, activation,
                          output_scale);
  if (!tied)
    params.net_q = make_ffn(outcome_count, hidden, outcome_count * outcome_count, rng,
                            activation, output_scale);
  return params;
}

void add_diagonal_bias(Gadget1Parameters& params, double scale) {
  const std::size_t k = params.outcome_count;
  for (FeedForwardNet* net : {&params.net_p, &params.net_q}) {
    if (net->layers.empty()) continue;
    Vec& bias = net->layers.back().bias;
    for (std::size_t i = 0; i < k; ++i) bias[i * k + i] += scale;
  }
}

Gadget1Parameters make_diagonal_gadget1(std::size_t outcome_count, double scale) {
  Gadget1Parameters params;
  params.outcome_count = outcome_count;
  params.tied = true;
  FeedForwardNet net;
  DenseLayer layer;
  layer.weight = Mat(outcome_count * outcome_count, outcome_count, 0.0);
  layer.bias = Vec(outcome_count * outcome_count, 0.0);
  for (std::size_t i = 0; i < outcome_count; ++i) layer.bias[i * outcome_count + i] = scale;
  net.layers.push_back(std::move(layer));
  params.net_p = net;
  params.net_q = std::move(net);
  return params;
}

Mat gadget1_joint(const Gadget1Parameters& params, Gadget1Side side, const Vec& logits) {
  require_finite_logits(logits, "gadget1_joint");
  const std::size_t k = params.outcome_count;
  if (logits.size() != k) throw std::invalid_argument("gadget1_joint: logit length mismatch");
  const FeedForwardNet& net = (side == Gadget1Side::P) ? params.net_p : params.q_net();
  // Normalized input makes the whole construction shift invariant in l; the
  // stabilized form keeps every row mass strictly positive for extreme logits.
  const Vec log_p = stabilized_log_softmax(logits);
  const Vec raw = net.forward(log_p);
  Vec p(k);
  for (std::size_t x = 0; x < k; ++x) p[x] = std::exp(log_p[x]);
  Mat joint(k, k);
  for (std::size_t x = 0; x < k; ++x) {
    Vec scores(raw.begin() + static_cast<std::ptrdiff_t>(x * k),
               raw.begin() + static_cast<std::ptrdiff_t>((x + 1) * k));
    const Vec over_z = softmax(scores);
    for (std::size_t z = 0; z < k; ++z) joint(x, z) = p[x] * over_z[z];
  }
  return joint;
}

namespace {

Mat log_of(const Mat& m) {
  Mat out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = std::log(m.data[i]);
  return out;
}

std::size_t gadget1_forward_side(const Mat& log_joint, const Mat& noise, bool transpose_noise) {
  const std::size_t k = log_joint.rows;
  std::size_t best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t x = 0; x < k; ++x) {
    double row_best = -std::numeric_limits<double>::infinity();
    for (std::size_t z = 0; z < k; ++z) {
      const double g = transpose_noise ? noise(z, x) : noise(x, z);
      const double v = g + log_joint(x, z);
      if (v > row_best) row_best = v;
    }
    if (row_best > best_v) {
      best_v = row_best;
      best = x;
    }
  }
  return best;
}

Mat reconstruct_noise_from_tables(const Mat& joint, const Mat& log_joint,
                                  const Vec& row_log_mass, std::size_t observed, Rng& rng) {
  const std::size_t k = joint.rows;
  // Row maxima are Gumbels located at the row log-masses (= the normalized
  // logits, by the marginal constraint); draw them jointly from the posterior
  // given that the observed row attains the overall maximum.
  const Vec max_noise = sample_conditional_gumbels(row_log_mass, observed, rng);

  Mat noise(k, k);
  Vec over_z(k);
  for (std::size_t x = 0; x < k; ++x) {
    const double row_max = row_log_mass[x] + max_noise[x];
    // Within a row the argmax is independent of the max value.
    const double mass = std::exp(row_log_mass[x]);
    for (std::size_t z = 0; z < k; ++z) over_z[z] = joint(x, z) / mass;
    const std::size_t z_star = rng.categorical(over_z);
    for (std::size_t z = 0; z < k; ++z) {
      const double shifted =
          (z == z_star) ? row_max : truncated_gumbel(log_joint(x, z), row_max, rng);
      noise(x, z) = shifted - log_joint(x, z);
    }
  }
  // Undo any one-ulp ties introduced by the subtract-add round trip so the
  // p-side forward reproduces the observation unconditionally.
  for (int rounds = 0;
       gadget1_forward_side(log_joint, noise, false) != observed && rounds < 64; ++rounds) {
    for (std::size_t z = 0; z < k; ++z)
      noise(observed, z) =
          std::nextafter(noise(observed, z), std::numeric_limits<double>::infinity());
  }
  return noise;
}

}  // namespace

Gadget1Tables gadget1_tables(const Gadget1Parameters& params, const Vec& l1, const Vec& l2) {
  Gadget1Tables tables;
  tables.joint_p = gadget1_joint(params, Gadget1Side::P, l1);
  tables.log_joint_p = log_of(tables.joint_p);
  tables.log_joint_q = log_of(gadget1_joint(params, Gadget1Side::Q, l2));
  const std::size_t k = tables.joint_p.rows;
  tables.row_log_mass_p.resize(k);
  for (std::size_t x = 0; x < k; ++x) {
    Vec row(tables.log_joint_p.data.begin() + static_cast<std::ptrdiff_t>(x * k),
            tables.log_joint_p.data.begin() + static_cast<std::ptrdiff_t>((x + 1) * k));
    tables.row_log_mass_p[x] = logsumexp(row);
  }
  return tables;
}

std::pair<std::size_t, std::size_t> gadget1_sample_pair_from(const Gadget1Tables& tables,
                                                             const Mat& noise) {
  const std::size_t k = tables.joint_p.rows;
  if (noise.rows != k || noise.cols != k)
    throw std::invalid_argument("gadget1_sample_pair: noise must be K x K");
  return {gadget1_forward_side(tables.log_joint_p, noise, false),
          gadget1_forward_side(tables.log_joint_q, noise, true)};
}

std::size_t gadget1_counterfactual_from(const Gadget1Tables& tables, std::size_t observed,
                                        Rng& rng) {
  if (observed >= tables.joint_p.rows)
    throw std::invalid_argument("gadget1_counterfactual: observed index out of range");
  const Mat noise = reconstruct_noise_from_tables(tables.joint_p, tables.log_joint_p,
                                                  tables.row_log_mass_p, observed, rng);
  return gadget1_forward_side(tables.log_joint_q, noise, true);
}

std::pair<std::size_t, std::size_t> gadget1_sample_pair(const Gadget1Parameters& params,
                                                        const Vec& l1, const Vec& l2,
                                                        const Mat& noise) {
  return gadget1_sample_pair_from(gadget1_tables(params, l1, l2), noise);
}

Mat gadget1_reconstruct_noise(const Gadget1Parameters& params, const Vec& l1,
                              std::size_t observed, Rng& rng) {
  if (observed >= params.outcome_count)
    throw std::invalid_argument("gadget1_reconstruct_noise: observed index out of range");
  const Mat joint = gadget1_joint(params, Gadget1Side::P, l1);
  const Mat log_joint = log_of(joint);
  const std::size_t k = joint.rows;
  Vec row_log_mass(k);
  for (std::size_t x = 0; x < k; ++x) {
    Vec row(log_joint.data.begin() + static_cast<std::ptrdiff_t>(x * k),
            log_joint.data.begin() + static_cast<std::ptrdiff_t>((x + 1) * k));
    row_log_mass[x] = logsumexp(row);
  }
  return reconstruct_noise_from_tables(joint, log_joint, row_log_mass, observed, rng);
}

std::size_t gadget1_counterfactual(const Gadget1Parameters& params, const Vec& l1,
                                   const Vec& l2, std::size_t observed, Rng& rng) {
  return gadget1_counterfactual_from(gadget1_tables(params, l1, l2), observed, rng);
}

void Gadget2Parameters::validate() const {
  if (cluster_count < 1) throw std::invalid_argument("Gadget2Parameters: Z must be >= 1");
  net.validate();
  if (net.output_size() != cluster_count * net.input_size())
    throw std::invalid_argument("Gadget2Parameters: net must map K to Z*K");
  if (cluster_prior.size() != cluster_count)
    throw std::invalid_argument("Gadget2Parameters: prior length mismatch");
  double s = 0.0;
  for (double x : cluster_prior) {
    if (!(x > 0.0)) throw std::invalid_argument("Gadget2Parameters: prior must be positive");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw std::invalid_argument("Gadget2Parameters: prior must sum to 1");
  if (sinkhorn_steps < 1) throw std::invalid_argument("Gadget2Parameters: T must be >= 1");
}

Gadget2Parameters make_gadget2(std::size_t outcome_count, std::size_t cluster_count,
                               const std::vector<std::size_t>& hidden, Rng& rng,
                               int sinkhorn_steps, Activation activation, double output_scale) {
  Gadget2Parameters params;
  params.cluster_count = cluster_count;
  params.cluster_prior = Vec(cluster_count, 1.0 / static_cast<double>(cluster_count));
  params.sinkhorn_steps = sinkhorn_steps;
  params.net = make_ffn(outcome_count, hidden, cluster_count * outcome_count, rng, activation,
                        output_scale);
  return params;
}

Mat sinkhorn_normalize(const Mat& a0, const Vec& p, const Vec& prior, int steps) {
  if (steps < 1) throw std::invalid_argument("sinkhorn_normalize: steps must be >= 1");
  if (a0.rows != prior.size() || a0.cols != p.size())
    throw std::invalid_argument("sinkhorn_normalize: shape mismatch");
  for (double x : a0.data)
    if (!(x > 0.0)) throw std::invalid_argument("sinkhorn_normalize: entries must be positive");

  Mat a = a0;
  const std::size_t rows = a.rows, cols = a.cols;
  for (int t = 0; t < steps; ++t) {
    Vec cs = col_sums(a);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) a(i, j) *= p[j] / cs[j];
    // The cluster normalization runs last so row sums match the prior exactly.
    Vec rs = row_sums(a);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) a(i, j) *= prior[i] / rs[i];
  }
  return a;
}

Mat accept_reject_correct(const Mat& a, const Vec& p, const Vec& prior) {
  const std::size_t z_count = a.rows, k = a.cols;
  if (prior.size() != z_count || p.size() != k)
    throw std::invalid_argument("accept_reject_correct: shape mismatch");
  const Vec rs = row_sums(a);
  for (std::size_t z = 0; z < z_count; ++z)
    if (std::abs(rs[z] - prior[z]) > 1e-9)
      throw std::invalid_argument("accept_reject_correct: row sums must equal the prior");

  const Vec cs = col_sums(a);
  Vec c(k);
  double c_star = 0.0;
  for (std::size_t x = 0; x < k; ++x) {
    c[x] = p[x] / cs[x];
    c_star = std::max(c_star, c[x]);
  }
  Mat out(z_count, k);
  for (std::size_t z = 0; z < z_count; ++z) {
    double d = 0.0;
    for (std::size_t x = 0; x < k; ++x) d += a(z, x) * c[x];
    d /= prior[z];
    const double fallback = 1.0 - d / c_star;
    for (std::size_t x = 0; x < k; ++x)
      out(z, x) = (c[x] / c_star) * a(z, x) / prior[z] + fallback * p[x];
  }
  return out;
}

Mat gadget2_conditional(const Gadget2Parameters& params, const Vec& logits) {
  require_finite_logits(logits, "gadget2_conditional");
  const std::size_t k = params.outcome_count();
  if (logits.size() != k)
    throw std::invalid_argument("gadget2_conditional: logit length mismatch");
  const Vec log_p = stabilized_log_softmax(logits);
  const Vec raw = params.net.forward(log_p);
  Mat a0(params.cluster_count, k);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double x = raw[i];
    a0.data[i] = (x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x))) + 1e-6;
  }
  Vec p(k);
  for (std::size_t x = 0; x < k; ++x) p[x] = std::exp(log_p[x]);
  const Mat a = sinkhorn_normalize(a0, p, params.cluster_prior, params.sinkhorn_steps);
  return accept_reject_correct(a, p, params.cluster_prior);
}

Gadget2Tables gadget2_tables(const Gadget2Parameters& params, const Vec& l1, const Vec& l2) {
  Gadget2Tables tables;
  tables.cond1 = gadget2_conditional(params, l1);
  tables.cond2 = gadget2_conditional(params, l2);
  tables.log_cond1 = log_of(tables.cond1);
  tables.log_cond2 = log_of(tables.cond2);
  tables.prior = params.cluster_prior;
  tables.log_prior.resize(tables.prior.size());
  for (std::size_t z = 0; z < tables.prior.size(); ++z)
    tables.log_prior[z] = std::log(tables.prior[z]);
  return tables;
}

std::pair<std::size_t, std::size_t> gadget2_sample_pair_from(const Gadget2Tables& tables,
                                                             const Vec& cluster_noise,
                                                             const Vec& outcome_noise) {
  const std::size_t z_count = tables.prior.size();
  const std::size_t k = tables.cond1.cols;
  if (cluster_noise.size() != z_count)
    throw std::invalid_argument("gadget2_sample_pair: cluster noise length mismatch");
  if (outcome_noise.size() != k)
    throw std::invalid_argument("gadget2_sample_pair: outcome noise length mismatch");

  std::size_t z_hat = 0;
  if (z_count > 1) {
    double best = tables.log_prior[0] + cluster_noise[0];
    for (std::size_t z = 1; z < z_count; ++z) {
      const double v = tables.log_prior[z] + cluster_noise[z];
      if (v > best) {
        best = v;
        z_hat = z;
      }
    }
  }
  std::size_t x = 0, y = 0;
  double bx = -std::numeric_limits<double>::infinity();
  double by = bx;
  for (std::size_t i = 0; i < k; ++i) {
    const double vx = tables.log_cond1(z_hat, i) + outcome_noise[i];
    const double vy = tables.log_cond2(z_hat, i) + outcome_noise[i];
    if (vx > bx) {
      bx = vx;
      x = i;
    }
    if (vy > by) {
      by = vy;
      y = i;
    }
  }
  return {x, y};
}

std::size_t gadget2_counterfactual_from(const Gadget2Tables& tables, std::size_t observed,
                                        Rng& rng) {
  const std::size_t z_count = tables.prior.size();
  const std::size_t k = tables.cond1.cols;
  if (observed >= k)
    throw std::invalid_argument("gadget2_counterfactual: observed index out of range");

  Vec posterior(z_count);
  double norm = 0.0;
  for (std::size_t z = 0; z < z_count; ++z) {
    posterior[z] = tables.prior[z] * tables.cond1(z, observed);
    norm += posterior[z];
  }
  if (!(norm > 0.0))
    throw std::runtime_error("gadget2_counterfactual: observation has zero probability");
  for (double& x : posterior) x /= norm;
  const std::size_t z = rng.categorical(posterior);

  Vec log_row1(k), log_row2(k);
  for (std::size_t x = 0; x < k; ++x) {
    log_row1[x] = tables.log_cond1(z, x);
    log_row2[x] = tables.log_cond2(z, x);
  }
  const Vec noise = sample_conditional_gumbels(log_row1, observed, rng);
  return gumbel_argmax(log_row2, noise);
}

std::pair<std::size_t, std::size_t> gadget2_sample_pair(const Gadget2Parameters& params,
                                                        const Vec& l1, const Vec& l2,
                                                        const Vec& cluster_noise,
                                                        const Vec& outcome_noise) {
  return gadget2_sample_pair_from(gadget2_tables(params, l1, l2), cluster_noise, outcome_noise);
}

std::size_t gadget2_counterfactual(const Gadget2Parameters& params, const Vec& l1,
                                   const Vec& l2, std::size_t observed, Rng& rng) {
  return gadget2_counterfactual_from(gadget2_tables(params, l1, l2), observed, rng);
}

}  // namespace catcoup

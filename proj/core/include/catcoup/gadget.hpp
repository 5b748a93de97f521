#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "catcoup/matrix.hpp"
#include "catcoup/rng.hpp"

namespace catcoup {

enum class Activation { Tanh, Relu };

struct DenseLayer {
  Mat weight;
  Vec bias;
};

/// Small fully connected network. Hidden layers use `activation`; the output
/// layer is linear.
struct FeedForwardNet {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::Tanh;

  Vec forward(const Vec& input) const;
  std::size_t input_size() const { return layers.front().weight.cols; }
  std::size_t output_size() const { return layers.back().weight.rows; }
  std::size_t parameter_count() const;
  void validate() const;
};

/// Fan-in-scaled random weights, zero biases. output_scale multiplies the
/// final layer's weights; 0 starts the net at a constant output, which for
/// both gadgets is the configuration that reproduces plain shared-Gumbel
/// sampling (a neutral anchor that training then moves away from).
FeedForwardNet make_ffn(std::size_t in_dim, const std::vector<std::size_t>& hidden,
                        std::size_t out_dim, Rng& rng,
                        Activation activation = Activation::Tanh,
                        double output_scale = 1.0);

/// First mechanism: learns an auxiliary joint pi(x, z | l) over K x K whose
/// x-marginal is softmax(l) by construction. Paired samples share one K x K
/// Gumbel matrix, transposed for the second side. Two nets (one per side);
/// `tied` makes the second side reuse net_p.
struct Gadget1Parameters {
  FeedForwardNet net_p;
  FeedForwardNet net_q;
  std::size_t outcome_count = 0;
  bool tied = false;

  const FeedForwardNet& q_net() const { return tied ? net_p : net_q; }
  void validate() const;
};

enum class Gadget1Side { P, Q };

Gadget1Parameters make_gadget1(std::size_t outcome_count,
                               const std::vector<std::size_t>& hidden, Rng& rng,
                               bool tied = false,
                               Activation activation = Activation::Tanh,
                               double output_scale = 1.0);

/// Adds `scale` to the diagonal entries of the final-layer bias so the
/// auxiliary joint starts concentrated on z = x. With zeroed weights and a
/// large scale this reproduces shared-Gumbel sampling exactly (up to fp
/// precision); with a moderate scale it is a trainable starting point that
/// behaves like it.
void add_diagonal_bias(Gadget1Parameters& params, double scale);

/// Sets all weights to zero and the final bias to scale * vec(I); the joint
/// is then p(x) 1[z == x] up to an O(exp(-scale)) remainder, independent of
/// the input logits.
Gadget1Parameters make_diagonal_gadget1(std::size_t outcome_count, double scale = 30.0);

/// pi(x, z | l) for one side: softmax(l)(x) * softmax_z(net(log_softmax(l))
/// row x). Rows sum to softmax(l) exactly.
Mat gadget1_joint(const Gadget1Parameters& params, Gadget1Side side, const Vec& logits);

/// Shared-noise forward pair: noise is K x K of independent Gumbel(0); the
/// second side consumes its transpose.
std::pair<std::size_t, std::size_t> gadget1_sample_pair(const Gadget1Parameters& params,
                                                        const Vec& l1, const Vec& l2,
                                                        const Mat& noise);

/// Counterfactual draw: reconstructs the full K x K noise matrix from the
/// posterior given that the p-side forward produced `observed` (row maxima by
/// conditional top-down sampling, per-row argmax from pi(z | x), remaining
/// entries from truncated Gumbels), then runs the q side on the transpose.
std::size_t gadget1_counterfactual(const Gadget1Parameters& params, const Vec& l1,
                                   const Vec& l2, std::size_t observed, Rng& rng);

/// Posterior noise reconstruction used by gadget1_counterfactual; exposed for
/// tests. Running the p side on the result always reproduces `observed`.
Mat gadget1_reconstruct_noise(const Gadget1Parameters& params, const Vec& l1,
                              std::size_t observed, Rng& rng);

/// Precomputed per-pair tables so repeated draws skip the net evaluations.
struct Gadget1Tables {
  Mat joint_p;        // pi(x, z | l1)
  Mat log_joint_p;
  Mat log_joint_q;    // log pi(y, z | l2)
  Vec row_log_mass_p; // logsumexp over z per row of log_joint_p
};

Gadget1Tables gadget1_tables(const Gadget1Parameters& params, const Vec& l1, const Vec& l2);
std::pair<std::size_t, std::size_t> gadget1_sample_pair_from(const Gadget1Tables& tables,
                                                             const Mat& noise);
std::size_t gadget1_counterfactual_from(const Gadget1Tables& tables, std::size_t observed,
                                        Rng& rng);

/// Second mechanism: a latent cluster z with fixed prior plus learned
/// cluster-conditional outcome distributions that mix back to softmax(l)
/// exactly for every parameter setting.
struct Gadget2Parameters {
  FeedForwardNet net;      // K -> Z*K, read as a Z x K matrix
  std::size_t cluster_count = 0;
  Vec cluster_prior;       // length Z, strictly positive, sums to 1
  int sinkhorn_steps = 10;

  std::size_t outcome_count() const { return net.input_size(); }
  void validate() const;
};

Gadget2Parameters make_gadget2(std::size_t outcome_count, std::size_t cluster_count,
                               const std::vector<std::size_t>& hidden, Rng& rng,
                               int sinkhorn_steps = 10,
                               Activation activation = Activation::Tanh,
                               double output_scale = 1.0);

/// Alternating marginal scaling of a strictly positive Z x K matrix: columns
/// to p, then rows to prior, for `steps` rounds. Ends on the row (cluster)
/// normalization, so row sums equal the prior exactly.
Mat sinkhorn_normalize(const Mat& a0, const Vec& p, const Vec& prior, int steps);

/// Closed-form correction turning a cluster-normalized proposal A into exact
/// conditionals: pi(x|z) = (c_x/c*) A[z,x]/prior(z) + (1 - d_z/c*) p(x),
/// with c_x = p(x)/sum_z A[z,x], c* = max_x c_x, d_z = sum_x A[z,x] c_x / prior(z).
/// Every row is a distribution and sum_z prior(z) pi(x|z) = p(x).
Mat accept_reject_correct(const Mat& a, const Vec& p, const Vec& prior);

/// Full conditional table pi(x | z, l): softplus-positive net output,
/// Sinkhorn normalization, accept-reject correction. Z x K, rows index z.
Mat gadget2_conditional(const Gadget2Parameters& params, const Vec& logits);

/// Shared-noise forward pair: one cluster draw from the prior (via Gumbel
/// argmax on cluster_noise) and one shared outcome noise vector.
std::pair<std::size_t, std::size_t> gadget2_sample_pair(const Gadget2Parameters& params,
                                                        const Vec& l1, const Vec& l2,
                                                        const Vec& cluster_noise,
                                                        const Vec& outcome_noise);

/// Counterfactual draw: cluster from the posterior given `observed`, outcome
/// noise from its posterior under the l1 conditional, applied to the l2
/// conditional.
std::size_t gadget2_counterfactual(const Gadget2Parameters& params, const Vec& l1,
                                   const Vec& l2, std::size_t observed, Rng& rng);

/// Precomputed per-pair tables for repeated draws.
struct Gadget2Tables {
  Mat cond1;       // pi(x | z, l1), rows index z
  Mat cond2;
  Mat log_cond1;
  Mat log_cond2;
  Vec prior;
  Vec log_prior;
};

Gadget2Tables gadget2_tables(const Gadget2Parameters& params, const Vec& l1, const Vec& l2);
std::pair<std::size_t, std::size_t> gadget2_sample_pair_from(const Gadget2Tables& tables,
                                                             const Vec& cluster_noise,
                                                             const Vec& outcome_noise);
std::size_t gadget2_counterfactual_from(const Gadget2Tables& tables, std::size_t observed,
                                        Rng& rng);

}  // namespace catcoup

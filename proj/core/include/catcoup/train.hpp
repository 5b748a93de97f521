#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <variant>
#include <vector>

#include "catcoup/coupling.hpp"
#include "catcoup/gadget.hpp"
#include "catcoup/matrix.hpp"
#include "catcoup/rng.hpp"

namespace catcoup {

enum class GadgetKind { Gadget1, Gadget2 };

using GadgetParams = std::variant<Gadget1Parameters, Gadget2Parameters>;

GadgetKind kind_of(const GadgetParams& params);
std::size_t outcome_count_of(const GadgetParams& params);

enum class PairSource { IndependentRandom, Mirrored, FixedPerturbed, ExplicitList };

enum class LossKind { SquaredScoreDiff, Mismatch, Table };

struct LossSpec {
  LossKind kind = LossKind::SquaredScoreDiff;
  Vec scores;  // SquaredScoreDiff: g(x,y) = (scores[x] - scores[y])^2
  Mat table;   // Table: explicit K x K loss

  Mat loss_table(std::size_t k) const;
};

/// Distribution over (l1, l2) logit pairs plus the joint loss.
struct QuerySpec {
  PairSource source = PairSource::IndependentRandom;
  std::size_t outcome_count = 0;
  double logit_scale = 1.0;  // random sources: logits are scale * N(0,1)
  Vec base_l1, base_l2;      // FixedPerturbed
  double noise_scale = 0.0;  // FixedPerturbed: rho; 0 reproduces the base pair
  std::vector<std::pair<Vec, Vec>> pairs;  // ExplicitList
  LossSpec loss;

  std::pair<Vec, Vec> sample_pair(Rng& rng) const;
  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double learning_rate = 3e-3;
  std::size_t batch_pairs = 64;
  std::size_t noise_draws_per_pair = 16;
  std::size_t iterations = 5000;
  double temperature = 1.0;
  std::uint64_t seed = 1;
  AdamConfig adam;

  void validate() const;
};

struct ModelConfig {
  GadgetKind kind = GadgetKind::Gadget2;
  std::size_t outcome_count = 10;
  std::size_t cluster_count = 5;
  std::vector<std::size_t> hidden{64, 64};
  int sinkhorn_steps = 10;
  bool tied = false;
  double diagonal_bias = 0.0;   // gadget1 only
  double output_scale = 1.0;    // 0 starts at the shared-Gumbel anchor
  Activation activation = Activation::Tanh;
};

GadgetParams init_gadget(const ModelConfig& config, Rng& rng);

/// Nondecreasing scores: cumulative sum of uniform draws.
ScoreFunction reward_monotone(std::size_t k, Rng& rng);

enum class NonmonotoneForm {
  SineOfGaussian,    // h(i) = sin(30 * g_i), g_i ~ N(0,1)
  SinePlusGaussian,  // h(i) = sin(30 * i) + g_i
};

ScoreFunction reward_nonmonotone(std::size_t k, Rng& rng,
                                 NonmonotoneForm form = NonmonotoneForm::SineOfGaussian);

/// One shared-noise realization for a single draw.
struct NoiseDraw {
  Mat matrix;   // gadget1: K x K
  Vec cluster;  // gadget2: Z
  Vec outcome;  // gadget2: K
};

using NoiseBatch = std::vector<std::vector<NoiseDraw>>;  // [pair][draw]
using PairBatch = std::vector<std::pair<Vec, Vec>>;

NoiseBatch make_noise_batch(GadgetKind kind, std::size_t outcome_count,
                            std::size_t cluster_count, std::size_t n_pairs,
                            std::size_t n_draws, Rng& rng);

/// Relaxed objective: outcome-level argmaxes become tempered softmaxes; the
/// cluster draw (gadget 2) and the inner max over the auxiliary variable
/// (gadget 1) stay hard. Returns the batch mean of f1' G f2 per draw.
double surrogate_loss(const GadgetParams& params, const PairBatch& pair_batch,
                      const NoiseBatch& noise_batch, const Mat& loss_table,
                      double temperature);

struct LossAndGrad {
  double loss = 0.0;
  Vec grad;  // flattened, matching flatten_params order
};

/// Exact reverse-mode derivative of surrogate_loss with respect to the net
/// parameters (through the affine layers, nonlinearity, softplus, unrolled
/// Sinkhorn, accept-reject correction, log and tempered softmax).
LossAndGrad gradient(const GadgetParams& params, const PairBatch& pair_batch,
                     const NoiseBatch& noise_batch, const Mat& loss_table,
                     double temperature);

Vec flatten_params(const GadgetParams& params);
void unflatten_params(GadgetParams& params, const Vec& flat);

struct OptimizerState {
  Vec first_moment;
  Vec second_moment;
  std::size_t step = 0;
};

/// Bias-corrected update; state shapes must mirror params.
void adam_step(OptimizerState& state, Vec& params, const Vec& grad, double learning_rate,
               const AdamConfig& config);

struct TrainResult {
  GadgetParams params;
  Vec loss_history;
};

TrainResult train(const ModelConfig& model, const QuerySpec& query, const TrainConfig& config);
TrainResult train_from(GadgetParams initial, const QuerySpec& query, const TrainConfig& config);

/// Draws one coupled pair of outcomes for the given logit pair.
using PairSampler =
    std::function<std::pair<std::size_t, std::size_t>(const Vec& l1, const Vec& l2, Rng& rng)>;

struct VarianceReport {
  double mean_diff = 0.0;  // average per-pair mean of h(x) - h(y)
  double variance = 0.0;   // average per-pair sample variance
  double std_error = 0.0;  // standard error of the variance across pairs
};

VarianceReport evaluate_variance(const PairSampler& sampler,
                                 const std::vector<std::pair<Vec, Vec>>& pairs,
                                 const ScoreFunction& h, std::size_t n_samples, Rng& rng);

}  // namespace catcoup

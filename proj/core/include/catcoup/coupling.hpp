#pragma once

#include <cstddef>

#include "catcoup/matrix.hpp"
#include "catcoup/rng.hpp"

namespace catcoup {

/// Joint distribution over pairs of outcomes with prescribed marginals.
struct CouplingMatrix {
  Mat joint;          // K x K, entries >= 0, total mass 1
  Vec row_marginal;   // p, length K
  Vec col_marginal;   // q, length K

  std::size_t outcome_count() const { return joint.rows; }

  /// Checks nonnegativity, marginal consistency and total mass within tol.
  /// Throws std::runtime_error on violation.
  void validate(double tol = 1e-9) const;

  /// Builds a coupling from a joint table, deriving both marginals from it.
  static CouplingMatrix from_joint(Mat joint);

  /// Probability that the two coordinates differ.
  double mismatch_probability() const;
};

/// Per-outcome score table (reward units).
struct ScoreFunction {
  Vec table;
};

struct CouplingMetrics {
  double mean_diff = 0.0;   // E[h1(x) - h2(y)]
  double var_diff = 0.0;    // Var[h1(x) - h2(y)]
  double p_mismatch = 0.0;  // P(x != y)
};

struct EstimateResult {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// 0.5 * sum_i |p_i - q_i|.
double total_variation(const Vec& p, const Vec& q);

/// joint[x,y] = p(x) q(y).
CouplingMatrix independent_coupling(const Vec& p, const Vec& q);

/// Couples through a shared uniform: joint[x,y] is the overlap length of the
/// CDF cell of x under p with the CDF cell of y under q.
CouplingMatrix inverse_cdf_coupling(const Vec& p, const Vec& q);

/// Closed form for P(x = y = i) under the shared-Gumbel coupling:
/// 1 / (1 + sum_{j != i} max(p_j/p_i, q_j/q_i)). Requires strict positivity.
Vec gumbel_max_diagonal(const Vec& p, const Vec& q);

/// Monte Carlo estimate of the shared-Gumbel coupling from logits. The
/// marginals of the estimate are the empirical ones, so they match
/// softmax(l1), softmax(l2) only up to Monte Carlo error.
CouplingMatrix estimate_gumbel_max_coupling(const Vec& l1, const Vec& l2,
                                            std::size_t n_samples, Rng& rng);

/// Diagonal min(p_i, q_i); the residual mass is coupled as the normalized
/// outer product of the positive parts of p - min and q - min.
CouplingMatrix maximal_coupling(const Vec& p, const Vec& q);

/// Exact minimizer of sum joint[x,y] * cost[x,y] over all couplings of (p, q).
CouplingMatrix optimal_transport_coupling(const Vec& p, const Vec& q, const Mat& cost);

/// True iff the shared-Gumbel coupling is suboptimal under the 1[x != y]
/// metric: exists i with
///   max(sum_{j!=i} p_j/p_i, sum_{j!=i} q_j/q_i) < sum_{j!=i} max(p_j/p_i, q_j/q_i).
bool check_gumbel_max_suboptimal(const Vec& p, const Vec& q);

/// Exact mean/variance of h1(x) - h2(y) and P(x != y) under the joint.
CouplingMetrics coupling_metrics(const CouplingMatrix& pi, const ScoreFunction& h1,
                                 const ScoreFunction& h2);

/// Counterfactual estimator of E_p[h1] - E_q[h2]: draw y ~ softmax(l2), draw
/// noise from its posterior given argmax = y, evaluate
/// h1(argmax(l1 + noise)) - h2(y). Returns the sample mean and its standard
/// error over n_outer draws.
EstimateResult gumbel_max_counterfactual_estimate(const Vec& l1, const Vec& l2,
                                                  const ScoreFunction& h1,
                                                  const ScoreFunction& h2,
                                                  std::size_t n_outer, Rng& rng);

}  // namespace catcoup

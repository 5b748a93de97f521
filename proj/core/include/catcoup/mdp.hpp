#pragma once

#include <cstdint>
#include <vector>

#include "catcoup/matrix.hpp"
#include "catcoup/mechanisms.hpp"
#include "catcoup/rng.hpp"
#include "catcoup/train.hpp"

namespace catcoup {

struct TabularMDP {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> transition;  // [s][a][s'] row-major
  Vec state_reward;
  std::vector<bool> absorbing;
  double discount = 0.95;

  double prob(std::size_t s, std::size_t a, std::size_t s2) const {
    return transition[(s * n_actions + a) * n_states + s2];
  }
  double& prob(std::size_t s, std::size_t a, std::size_t s2) {
    return transition[(s * n_actions + a) * n_states + s2];
  }
  Vec kernel(std::size_t s, std::size_t a) const;

  /// Transition slices sum to 1 within tol; absorbing states self-loop.
  void validate(double tol = 1e-9) const;
};

/// Synthetic vital-signs environment: a product of small discrete variables
/// plus death/discharge absorbing states. Each (action, variable) pair gets a
/// random drift; per-step dynamics move each variable up/down/stay. A next
/// state with at least `abnormal_death_threshold` abnormal variables resolves
/// to death, an all-normal one to discharge.
struct SepsisLikeConfig {
  std::vector<std::size_t> category_counts{3, 3, 2, 2, 2, 2};
  std::vector<std::size_t> normal_category{1, 1, 0, 0, 0, 0};
  std::size_t n_treatments = 8;
  std::size_t abnormal_death_threshold = 3;
  double stay_weight = 1.0;
  double drift_scale = 0.7;
  double death_reward = -4.0;
  double discharge_reward = 4.0;
  double discount = 0.95;
};

struct SepsisLikeModel {
  TabularMDP mdp;
  SepsisLikeConfig config;
  std::size_t death_state = 0;
  std::size_t discharge_state = 0;
  std::vector<std::size_t> viable_start_states;

  std::size_t n_vital_states() const { return mdp.n_states - 2; }
  std::vector<std::size_t> decode(std::size_t vital_state) const;
  std::size_t abnormal_count(std::size_t vital_state) const;
};

SepsisLikeModel make_synthetic_sepsis_like(const SepsisLikeConfig& config, Rng& rng);

struct Step {
  std::size_t state, action, next_state;
};

struct Trajectory {
  std::vector<Step> steps;
};

struct Policy {
  Mat action_probs;  // S x A, rows are distributions

  static Policy deterministic(const std::vector<std::size_t>& actions, std::size_t n_actions);
  std::size_t greedy_action(std::size_t s) const;
  Policy epsilon_greedy(double epsilon) const;
  void validate() const;
};

/// Rolls out from `start`; terminates on entering an absorbing state or after
/// max_t steps. An absorbing start yields an empty trajectory.
Trajectory sample_trajectory(const TabularMDP& mdp, const Policy& policy, std::size_t start,
                             std::size_t max_t, Rng& rng);

/// n rollouts with uniform starts over the provided set (all non-absorbing
/// states when the set is empty).
std::vector<Trajectory> sample_trajectories(const TabularMDP& mdp, const Policy& policy,
                                            std::size_t n, std::size_t max_t, Rng& rng,
                                            const std::vector<std::size_t>& start_states = {});

/// Maximum-likelihood transition estimate with additive smoothing. Unseen
/// (s, a) rows fall back to uniform; states that are entered but never left
/// are marked absorbing and given self-loops.
TabularMDP estimate_mdp(const std::vector<Trajectory>& trajectories, std::size_t n_states,
                        std::size_t n_actions, double smoothing);

struct PolicyIterationResult {
  Policy policy;
  Vec value;
  std::size_t improvement_rounds = 0;
};

/// Exact policy iteration (linear-solve evaluation, greedy improvement).
/// Rewards accrue on entering a state; absorbing states have value 0 after
/// their entry reward. Throws std::runtime_error if the policy has not
/// stabilized after the iteration cap.
PolicyIterationResult policy_iteration(const TabularMDP& mdp, std::size_t max_rounds = 1000);

/// Bellman optimality residual max_s |V(s) - max_a Q(s,a)| for diagnostics.
double bellman_residual(const TabularMDP& mdp, const Vec& value);

struct QueryPairContext {
  std::size_t state = 0;
  std::size_t action_doctor = 0;
  std::size_t action_target = 0;
  std::size_t observed_next = 0;
};

/// A coupled-transition query: both kernels restricted to the union of their
/// supports, floored and renormalized so logits stay finite.
struct QueryPair {
  Vec l1, l2;
  std::vector<std::size_t> support;  // global state ids, ascending
  std::size_t observed_index = 0;    // position of observed_next in support
  QueryPairContext context;
};

/// One query per distinct observed (s, a, s') step: l1 from the estimated
/// kernel of (s, a), l2 from (s, argmax action of the target policy at s).
/// Pairs where either kernel has fewer than min_support nonzero entries are
/// dropped, as are steps the behavior policy could not have produced.
std::vector<QueryPair> extract_query_pairs(const std::vector<Trajectory>& trajectories,
                                           const TabularMDP& estimated, const Policy& behavior,
                                           const Policy& target, std::size_t min_support);

/// Fresh per-variable category rewards (standard normal), summed per state;
/// absorbing states keep their configured rewards.
Vec state_reward_draw(const SepsisLikeModel& model, Rng& rng);

struct MechanismSpec {
  Mechanism mechanism;
  std::vector<GadgetParams> per_pair;  // trained parameters, one per query pair
};

struct EffectRow {
  Mechanism mechanism;
  SamplingSetting setting;
  std::size_t pair_index = 0;
  std::uint64_t seed = 0;
  double mean_diff = 0.0;
  double variance = 0.0;
};

/// Treatment-effect table: per (mechanism, setting, pair, seed), the sample
/// mean and variance of h(x) - h(y) over n_samples coupled draws. The joint
/// setting shares forward noise; the counterfactual setting draws the
/// observed outcome from the first kernel, infers the noise, and samples the
/// intervention side. Deterministic given base_seed.
std::vector<EffectRow> treatment_effect_experiment(
    const std::vector<QueryPair>& pairs, const std::vector<MechanismSpec>& mechanisms,
    const std::vector<SamplingSetting>& settings, const Vec& state_scores,
    std::size_t n_samples, std::size_t n_seeds, std::uint64_t base_seed);

}  // namespace catcoup

#include <doctest.h>

#include <cmath>

#include "catcoup/mdp.hpp"
#include "catcoup/numeric.hpp"
#include "support/stats.hpp"

using namespace catcoup;

namespace {

/// Independent iterative policy evaluation, used as the oracle against the
/// library's exact linear-solve evaluation.
Vec evaluate_policy_oracle(const TabularMDP& mdp, const Policy& policy, int sweeps = 4000) {
  Vec value(mdp.n_states, 0.0);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    Vec next(mdp.n_states, 0.0);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      if (mdp.absorbing[s]) continue;
      double v = 0.0;
      for (std::size_t a = 0; a < mdp.n_actions; ++a) {
        const double pa = policy.action_probs(s, a);
        if (pa == 0.0) continue;
        for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) {
          const double p = mdp.prob(s, a, s2);
          if (p == 0.0) continue;
          v += pa * p *
               (mdp.state_reward[s2] + (mdp.absorbing[s2] ? 0.0 : mdp.discount * value[s2]));
        }
      }
      next[s] = v;
    }
    value = std::move(next);
  }
  return value;
}

TabularMDP small_random_mdp(std::size_t n_states, std::size_t n_actions, Rng& rng) {
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.discount = 0.9;
  mdp.transition.assign(n_states * n_actions * n_states, 0.0);
  mdp.state_reward = rng.normal_vector(n_states);
  mdp.absorbing.assign(n_states, false);
  mdp.absorbing[n_states - 1] = true;
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t a = 0; a < n_actions; ++a) {
      if (mdp.absorbing[s]) {
        mdp.prob(s, a, s) = 1.0;
        continue;
      }
      const Vec row = testsupport::random_simplex(n_states, rng);
      for (std::size_t s2 = 0; s2 < n_states; ++s2) mdp.prob(s, a, s2) = row[s2];
    }
  mdp.validate();
  return mdp;
}

}  // namespace

TEST_SUITE("mdp") {

TEST_CASE("synthetic environment: 146 states, valid kernels, absorbing self-loops") {
  Rng rng(61);
  const SepsisLikeModel model = make_synthetic_sepsis_like(SepsisLikeConfig{}, rng);
  CHECK(model.mdp.n_states == 146);
  CHECK(model.n_vital_states() == 144);
  CHECK(model.mdp.n_actions == 8);
  model.mdp.validate();  // slices sum to 1, absorbing states self-loop
  CHECK(model.mdp.state_reward[model.death_state] == doctest::Approx(-4.0));
  CHECK(model.mdp.state_reward[model.discharge_state] == doctest::Approx(4.0));
  CHECK(!model.viable_start_states.empty());
  for (std::size_t s : model.viable_start_states) {
    CHECK(model.abnormal_count(s) >= 1);
    CHECK(model.abnormal_count(s) < model.config.abnormal_death_threshold);
  }

  SepsisLikeConfig tiny;
  tiny.category_counts = {2};
  tiny.normal_category = {0};
  tiny.abnormal_death_threshold = 2;
  Rng rng2(62);
  const SepsisLikeModel small = make_synthetic_sepsis_like(tiny, rng2);
  CHECK(small.mdp.n_states == 4);
  small.mdp.validate();
}

TEST_CASE("rollouts: absorbing starts, length cap, kernel frequencies") {
  Rng rng(63);
  const SepsisLikeModel model = make_synthetic_sepsis_like(SepsisLikeConfig{}, rng);
  const Policy uniform = Policy::deterministic(
      std::vector<std::size_t>(model.mdp.n_states, 0), model.mdp.n_actions);

  const Trajectory empty =
      sample_trajectory(model.mdp, uniform, model.death_state, 20, rng);
  CHECK(empty.steps.empty());

  const std::vector<Trajectory> rollouts = sample_trajectories(
      model.mdp, uniform, 2000, 20, rng, model.viable_start_states);
  for (const Trajectory& trajectory : rollouts) {
    CHECK(trajectory.steps.size() <= 20);
    for (std::size_t t = 0; t + 1 < trajectory.steps.size(); ++t)
      CHECK(trajectory.steps[t].next_state == trajectory.steps[t + 1].state);
    if (trajectory.steps.size() < 20)
      CHECK(model.mdp.absorbing[trajectory.steps.back().next_state]);
  }

  // next-state frequencies from a fixed (s, a) against the true kernel
  const std::size_t s0 = model.viable_start_states.front();
  const Vec kernel = model.mdp.kernel(s0, 0);
  Vec freq(model.mdp.n_states, 0.0);
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const Trajectory one = sample_trajectory(model.mdp, uniform, s0, 1, rng);
    freq[one.steps.front().next_state] += 1.0;
  }
  for (std::size_t s2 = 0; s2 < model.mdp.n_states; ++s2) {
    const double p = kernel[s2];
    const double tol = 4.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(n)) + 1e-12;
    CHECK(std::abs(freq[s2] / static_cast<double>(n) - p) <= tol);
  }
}

TEST_CASE("estimation: point masses, kernel recovery, uniform fallback") {
  // single deterministic chain
  std::vector<Trajectory> chain(1);
  chain[0].steps = {{0, 0, 1}, {1, 0, 2}};
  const TabularMDP point = estimate_mdp(chain, 4, 1, 0.0);
  CHECK(point.prob(0, 0, 1) == 1.0);
  CHECK(point.prob(1, 0, 2) == 1.0);
  // state 3 never seen: uniform fallback
  for (std::size_t s2 = 0; s2 < 4; ++s2)
    CHECK(point.prob(3, 0, s2) == doctest::Approx(0.25));
  // state 2 entered but never exited: inferred absorbing
  CHECK(point.absorbing[2]);
  CHECK(point.prob(2, 0, 2) == 1.0);

  // recovery of a known MDP under full coverage
  Rng rng(64);
  TabularMDP truth = small_random_mdp(5, 2, rng);
  Policy explore;
  explore.action_probs = Mat(5, 2, 0.5);
  std::vector<std::size_t> starts{0, 1, 2, 3};
  const std::vector<Trajectory> data =
      sample_trajectories(truth, explore, 30000, 12, rng, starts);
  const TabularMDP estimated = estimate_mdp(data, 5, 2, 0.0);
  std::vector<double> visits(5 * 2, 0.0);
  for (const Trajectory& trajectory : data)
    for (const Step& step : trajectory.steps) visits[step.state * 2 + step.action] += 1.0;
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t a = 0; a < 2; ++a) {
      if (visits[s * 2 + a] < 10000) continue;
      CHECK(total_variation(estimated.kernel(s, a), truth.kernel(s, a)) <= 0.02);
    }

  // rows always sum to one
  for (std::size_t s = 0; s < 5; ++s)
    for (std::size_t a = 0; a < 2; ++a)
      CHECK(sum(estimated.kernel(s, a)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("policy iteration: dominance, optimality against random policies") {
  // two states, two actions; action 1 strictly dominates from state 0
  TabularMDP mdp;
  mdp.n_states = 2;
  mdp.n_actions = 2;
  mdp.discount = 0.9;
  mdp.transition.assign(8, 0.0);
  mdp.state_reward = {0.0, 5.0};
  mdp.absorbing = {false, true};
  mdp.prob(0, 0, 0) = 1.0;  // action 0 stays (no reward)
  mdp.prob(0, 1, 1) = 1.0;  // action 1 reaches the rewarding absorbing state
  mdp.prob(1, 0, 1) = 1.0;
  mdp.prob(1, 1, 1) = 1.0;
  const PolicyIterationResult direct = policy_iteration(mdp);
  CHECK(direct.policy.greedy_action(0) == 1);
  CHECK(direct.value[0] == doctest::Approx(5.0));
  CHECK(bellman_residual(mdp, direct.value) <= 1e-8);

  Rng rng(65);
  const TabularMDP random_mdp = small_random_mdp(6, 3, rng);
  const PolicyIterationResult result = policy_iteration(random_mdp);
  CHECK(bellman_residual(random_mdp, result.value) <= 1e-8);

  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> actions(6);
    for (auto& a : actions) a = rng.uniform_index(3);
    const Vec value = evaluate_policy_oracle(random_mdp, Policy::deterministic(actions, 3));
    for (std::size_t s = 0; s < 6; ++s) CHECK(result.value[s] >= value[s] - 1e-6);
  }

  // greedy consistency of the returned policy with its value function
  for (std::size_t s = 0; s < 6; ++s) {
    if (random_mdp.absorbing[s]) continue;
    double best = -1e300;
    std::size_t best_a = 0;
    for (std::size_t a = 0; a < 3; ++a) {
      double q = 0.0;
      for (std::size_t s2 = 0; s2 < 6; ++s2)
        q += random_mdp.prob(s, a, s2) *
             (random_mdp.state_reward[s2] +
              (random_mdp.absorbing[s2] ? 0.0 : random_mdp.discount * result.value[s2]));
      if (q > best + 1e-12) {
        best = q;
        best_a = a;
      }
    }
    CHECK(result.policy.greedy_action(s) == best_a);
  }
}

TEST_CASE("query-pair extraction: support filter and finite logits") {
  // hand-built estimated MDP with controlled supports
  TabularMDP est;
  est.n_states = 6;
  est.n_actions = 2;
  est.discount = 0.9;
  est.transition.assign(6 * 2 * 6, 0.0);
  est.state_reward.assign(6, 0.0);
  est.absorbing.assign(6, false);
  // action 0 from state 0: support 4; action 1 from state 0: support 3
  est.prob(0, 0, 1) = 0.4;
  est.prob(0, 0, 2) = 0.3;
  est.prob(0, 0, 3) = 0.2;
  est.prob(0, 0, 4) = 0.1;
  est.prob(0, 1, 1) = 0.5;
  est.prob(0, 1, 2) = 0.25;
  est.prob(0, 1, 3) = 0.25;
  for (std::size_t s = 1; s < 6; ++s)
    for (std::size_t a = 0; a < 2; ++a) est.prob(s, a, s) = 1.0;

  Policy behavior;
  behavior.action_probs = Mat(6, 2, 0.5);

  std::vector<Trajectory> observed(2);
  observed[0].steps = {{0, 0, 2}};
  observed[1].steps = {{0, 1, 1}};

  // target points to action 0 (support 4) at state 0
  const Policy target = Policy::deterministic({0, 0, 0, 0, 0, 0}, 2);
  const std::vector<QueryPair> pairs =
      extract_query_pairs(observed, est, behavior, target, 4);

  // the (0, 1, .) step is dropped: its kernel has only 3 nonzero entries
  REQUIRE(pairs.size() == 1);
  const QueryPair& pair = pairs[0];
  CHECK(pair.context.state == 0);
  CHECK(pair.context.action_doctor == 0);
  CHECK(pair.context.action_target == 0);
  CHECK(pair.support == std::vector<std::size_t>{1, 2, 3, 4});
  CHECK(pair.support[pair.observed_index] == 2);

  // doctor action == target action: l1 == l2, pair retained
  for (std::size_t i = 0; i < pair.l1.size(); ++i) CHECK(pair.l1[i] == pair.l2[i]);

  // exponentiate-and-normalize recovers a valid distribution close to the kernel
  const Vec p = softmax(pair.l1);
  CHECK(std::abs(sum(p) - 1.0) <= 1e-12);
  CHECK(p[0] == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(p[3] == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("reward draws: additivity, absorbing values, reproducibility") {
  Rng rng(66);
  const SepsisLikeModel model = make_synthetic_sepsis_like(SepsisLikeConfig{}, rng);
  Rng a(4242), b(4242);
  const Vec ha = state_reward_draw(model, a);
  const Vec hb = state_reward_draw(model, b);
  CHECK(ha == hb);
  CHECK(ha[model.death_state] == doctest::Approx(-4.0));
  CHECK(ha[model.discharge_state] == doctest::Approx(4.0));

  // states differing in exactly one variable differ by a value that depends
  // only on that variable's categories
  const std::size_t n_vars = model.config.category_counts.size();
  std::vector<std::vector<double>> diffs;
  for (std::size_t s1 = 0; s1 < model.n_vital_states(); ++s1) {
    const auto c1 = model.decode(s1);
    for (std::size_t s2 = s1 + 1; s2 < model.n_vital_states(); ++s2) {
      const auto c2 = model.decode(s2);
      std::size_t differing = n_vars;
      std::size_t count = 0;
      for (std::size_t v = 0; v < n_vars; ++v)
        if (c1[v] != c2[v]) {
          differing = v;
          ++count;
        }
      if (count != 1) continue;
      diffs.push_back({static_cast<double>(differing), static_cast<double>(c1[differing]),
                       static_cast<double>(c2[differing]), ha[s1] - ha[s2]});
    }
  }
  for (std::size_t i = 0; i < diffs.size(); ++i)
    for (std::size_t j = i + 1; j < diffs.size(); ++j)
      if (diffs[i][0] == diffs[j][0] && diffs[i][1] == diffs[j][1] &&
          diffs[i][2] == diffs[j][2])
        CHECK(diffs[i][3] == doctest::Approx(diffs[j][3]).epsilon(1e-12));
}

TEST_CASE("treatment effects: degenerate pairs, mean agreement, determinism") {
  Rng rng(67);
  // one pair with l1 == l2 and one generic pair
  QueryPair same;
  same.l1 = testsupport::random_logits(5, rng);
  same.l2 = same.l1;
  same.support = {0, 1, 2, 3, 4};
  same.observed_index = 0;
  QueryPair generic;
  generic.l1 = testsupport::random_logits(5, rng);
  generic.l2 = testsupport::random_logits(5, rng);
  generic.support = {0, 1, 2, 3, 4};
  generic.observed_index = 1;

  Rng train_rng(68);
  std::vector<MechanismSpec> mechanisms;
  for (const Mechanism m : {Mechanism::Independent, Mechanism::InverseCdf, Mechanism::GumbelMax,
                            Mechanism::Gadget1, Mechanism::Gadget2, Mechanism::OptimalLP}) {
    MechanismSpec spec{m, {}};
    if (m == Mechanism::Gadget1) {
      // the diagonal anchor is the configuration where the transposed noise
      // acts identically on both sides, so l1 == l2 forces equal outcomes
      spec.per_pair.push_back(make_diagonal_gadget1(5, 30.0));
      spec.per_pair.push_back(make_gadget1(5, {8}, train_rng));
    }
    if (m == Mechanism::Gadget2)
      for (int i = 0; i < 2; ++i)
        spec.per_pair.push_back(make_gadget2(5, 3, {8}, train_rng));
    mechanisms.push_back(std::move(spec));
  }
  const Vec scores = testsupport::random_logits(5, rng);
  const std::vector<SamplingSetting> settings{SamplingSetting::Joint,
                                              SamplingSetting::Counterfactual};

  const std::vector<EffectRow> rows = treatment_effect_experiment(
      {same, generic}, mechanisms, settings, scores, 3000, 2, 77);

  // shared-noise mechanisms on the identical pair: exactly zero
  for (const EffectRow& row : rows) {
    if (row.pair_index != 0) continue;
    if (row.mechanism == Mechanism::GumbelMax || row.mechanism == Mechanism::Gadget1 ||
        row.mechanism == Mechanism::Gadget2) {
      CHECK(row.mean_diff == 0.0);
      CHECK(row.variance == 0.0);
    }
  }

  // the mean treatment effect is fixed by the marginals: all mechanisms agree
  const Vec p = softmax(generic.l1), q = softmax(generic.l2);
  double expected = 0.0;
  for (std::size_t i = 0; i < 5; ++i) expected += (p[i] - q[i]) * scores[i];
  for (const EffectRow& row : rows) {
    if (row.pair_index != 1) continue;
    const double se = std::sqrt(row.variance / 3000.0);
    CHECK(std::abs(row.mean_diff - expected) <= 4.0 * se + 1e-9);
  }

  // bit-identical on re-run
  const std::vector<EffectRow> again = treatment_effect_experiment(
      {same, generic}, mechanisms, settings, scores, 3000, 2, 77);
  REQUIRE(rows.size() == again.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].mean_diff == again[i].mean_diff);
    CHECK(rows[i].variance == again[i].variance);
  }
}

TEST_CASE("posterior-then-forward sampling reproduces the intervention marginal") {
  // draw x from p, infer the noise, push it through l2: h(y) must average to
  // the plain expectation under softmax(l2)
  Rng rng(69);
  const std::size_t k = 6;
  const Vec l1 = testsupport::random_logits(k, rng), l2 = testsupport::random_logits(k, rng);
  const ScoreFunction h{testsupport::random_logits(k, rng)};
  const PairSampler cf = make_mechanism_sampler(Mechanism::GumbelMax,
                                                SamplingSetting::Counterfactual, h,
                                                std::nullopt);
  const Vec q = softmax(l2);
  double expected = 0.0, second = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    expected += q[i] * h.table[i];
    second += q[i] * h.table[i] * h.table[i];
  }
  const std::size_t n = 200000;
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) total += h.table[cf(l1, l2, rng).second];
  const double se = std::sqrt(std::max(0.0, second - expected * expected) /
                              static_cast<double>(n));
  CHECK(std::abs(total / static_cast<double>(n) - expected) <= 3.0 * se);
}

}  // TEST_SUITE

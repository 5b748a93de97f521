#include "catcoup/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>

#include "catcoup/numeric.hpp"

namespace catcoup {

Vec TabularMDP::kernel(std::size_t s, std::size_t a) const {
  const double* base = transition.data() + (s * n_actions + a) * n_states;
  return Vec(base, base + n_states);
}

void TabularMDP::validate(double tol) const {
  if (n_states < 2) throw std::runtime_error("TabularMDP: need at least 2 states");
  if (transition.size() != n_states * n_actions * n_states)
    throw std::runtime_error("TabularMDP: transition tensor size mismatch");
  if (state_reward.size() != n_states || absorbing.size() != n_states)
    throw std::runtime_error("TabularMDP: per-state field size mismatch");
  if (!(discount > 0.0) || discount > 1.0)
    throw std::runtime_error("TabularMDP: discount must be in (0, 1]");
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t a = 0; a < n_actions; ++a) {
      double total = 0.0;
      for (std::size_t s2 = 0; s2 < n_states; ++s2) {
        const double p = prob(s, a, s2);
        if (!(p >= 0.0) || !std::isfinite(p))
          throw std::runtime_error("TabularMDP: invalid transition probability");
        total += p;
      }
      if (std::abs(total - 1.0) > tol)
        throw std::runtime_error("TabularMDP: transition slice does not sum to 1");
      if (absorbing[s] && std::abs(prob(s, a, s) - 1.0) > tol)
        throw std::runtime_error("TabularMDP: absorbing state must self-loop");
    }
}

std::vector<std::size_t> SepsisLikeModel::decode(std::size_t vital_state) const {
  std::vector<std::size_t> cats(config.category_counts.size());
  for (std::size_t v = config.category_counts.size(); v-- > 0;) {
    cats[v] = vital_state % config.category_counts[v];
    vital_state /= config.category_counts[v];
  }
  return cats;
}

std::size_t SepsisLikeModel::abnormal_count(std::size_t vital_state) const {
  const std::vector<std::size_t> cats = decode(vital_state);
  std::size_t count = 0;
  for (std::size_t v = 0; v < cats.size(); ++v)
    if (cats[v] != config.normal_category[v]) ++count;
  return count;
}

SepsisLikeModel make_synthetic_sepsis_like(const SepsisLikeConfig& config, Rng& rng) {
  if (config.category_counts.empty() || config.n_treatments < 1)
    throw std::invalid_argument("make_synthetic_sepsis_like: empty configuration");
  if (config.normal_category.size() != config.category_counts.size())
    throw std::invalid_argument("make_synthetic_sepsis_like: normal_category size mismatch");
  std::size_t n_vital = 1;
  for (std::size_t c : config.category_counts) {
    if (c < 2) throw std::invalid_argument("make_synthetic_sepsis_like: categories must be >= 2");
    n_vital *= c;
  }
  if (n_vital < 2) throw std::invalid_argument("make_synthetic_sepsis_like: fewer than 2 states");

  SepsisLikeModel model;
  model.config = config;
  const std::size_t n_vars = config.category_counts.size();
  const std::size_t n_states = n_vital + 2;
  model.death_state = n_vital;
  model.discharge_state = n_vital + 1;

  TabularMDP& mdp = model.mdp;
  mdp.n_states = n_states;
  mdp.n_actions = config.n_treatments;
  mdp.discount = config.discount;
  mdp.transition.assign(n_states * mdp.n_actions * n_states, 0.0);
  mdp.absorbing.assign(n_states, false);
  mdp.absorbing[model.death_state] = true;
  mdp.absorbing[model.discharge_state] = true;

  // One random drift per (action, variable); per-variable kernels are lazy
  // random walks whose up/down weights tilt with the drift.
  Mat drift(config.n_treatments, n_vars);
  for (double& d : drift.data) d = config.drift_scale * rng.normal();

  // per_var_kernel[a][v] is a (categories x categories) row-stochastic matrix
  std::vector<std::vector<Mat>> per_var_kernel(config.n_treatments);
  for (std::size_t a = 0; a < config.n_treatments; ++a) {
    per_var_kernel[a].resize(n_vars);
    for (std::size_t v = 0; v < n_vars; ++v) {
      const std::size_t c = config.category_counts[v];
      Mat kernel(c, c, 0.0);
      for (std::size_t cur = 0; cur < c; ++cur) {
        const double w_stay = std::exp(config.stay_weight);
        const double w_up = (cur + 1 < c) ? std::exp(drift(a, v)) : 0.0;
        const double w_down = (cur > 0) ? std::exp(-drift(a, v)) : 0.0;
        const double total = w_stay + w_up + w_down;
        kernel(cur, cur) = w_stay / total;
        if (cur + 1 < c) kernel(cur, cur + 1) = w_up / total;
        if (cur > 0) kernel(cur, cur - 1) = w_down / total;
      }
      per_var_kernel[a][v] = std::move(kernel);
    }
  }

  std::vector<std::size_t> cats(n_vars), next_cats(n_vars);
  for (std::size_t s = 0; s < n_vital; ++s) {
    // decode s
    std::size_t rem = s;
    for (std::size_t v = n_vars; v-- > 0;) {
      cats[v] = rem % config.category_counts[v];
      rem /= config.category_counts[v];
    }
    for (std::size_t a = 0; a < config.n_treatments; ++a) {
      // enumerate product next states
      std::fill(next_cats.begin(), next_cats.end(), 0);
      bool done = false;
      while (!done) {
        double p = 1.0;
        std::size_t next = 0, abnormal = 0;
        for (std::size_t v = 0; v < n_vars; ++v) {
          p *= per_var_kernel[a][v](cats[v], next_cats[v]);
          next = next * config.category_counts[v] + next_cats[v];
          if (next_cats[v] != config.normal_category[v]) ++abnormal;
        }
        if (p > 0.0) {
          std::size_t target = next;
          if (abnormal >= config.abnormal_death_threshold)
            target = model.death_state;
          else if (abnormal == 0)
            target = model.discharge_state;
          mdp.prob(s, a, target) += p;
        }
        done = true;
        for (std::size_t v = n_vars; v-- > 0;) {
          if (++next_cats[v] < config.category_counts[v]) {
            done = false;
            break;
          }
          next_cats[v] = 0;
        }
      }
    }
  }
  for (std::size_t a = 0; a < config.n_treatments; ++a) {
    mdp.prob(model.death_state, a, model.death_state) = 1.0;
    mdp.prob(model.discharge_state, a, model.discharge_state) = 1.0;
  }

  // Terminal-only base rewards; experiment-specific rewards come from
  // state_reward_draw.
  mdp.state_reward.assign(n_states, 0.0);
  mdp.state_reward[model.death_state] = config.death_reward;
  mdp.state_reward[model.discharge_state] = config.discharge_reward;

  for (std::size_t s = 0; s < n_vital; ++s) {
    const std::size_t abnormal = model.abnormal_count(s);
    if (abnormal > 0 && abnormal < config.abnormal_death_threshold)
      model.viable_start_states.push_back(s);
  }
  mdp.validate();
  return model;
}

Policy Policy::deterministic(const std::vector<std::size_t>& actions, std::size_t n_actions) {
  Policy policy;
  policy.action_probs = Mat(actions.size(), n_actions, 0.0);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] >= n_actions) throw std::invalid_argument("Policy: action out of range");
    policy.action_probs(s, actions[s]) = 1.0;
  }
  return policy;
}

std::size_t Policy::greedy_action(std::size_t s) const {
  std::size_t best = 0;
  for (std::size_t a = 1; a < action_probs.cols; ++a)
    if (action_probs(s, a) > action_probs(s, best)) best = a;
  return best;
}

Policy Policy::epsilon_greedy(double epsilon) const {
  if (!(epsilon >= 0.0) || epsilon > 1.0)
    throw std::invalid_argument("Policy::epsilon_greedy: epsilon must be in [0, 1]");
  Policy out = *this;
  const std::size_t n_actions = action_probs.cols;
  for (std::size_t s = 0; s < action_probs.rows; ++s)
    for (std::size_t a = 0; a < n_actions; ++a)
      out.action_probs(s, a) = (1.0 - epsilon) * action_probs(s, a) +
                               epsilon / static_cast<double>(n_actions);
  return out;
}

void Policy::validate() const {
  for (std::size_t s = 0; s < action_probs.rows; ++s) {
    double total = 0.0;
    for (std::size_t a = 0; a < action_probs.cols; ++a) {
      if (!(action_probs(s, a) >= 0.0))
        throw std::runtime_error("Policy: negative action probability");
      total += action_probs(s, a);
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::runtime_error("Policy: action probabilities must sum to 1");
  }
}

Trajectory sample_trajectory(const TabularMDP& mdp, const Policy& policy, std::size_t start,
                             std::size_t max_t, Rng& rng) {
  Trajectory trajectory;
  std::size_t s = start;
  for (std::size_t t = 0; t < max_t && !mdp.absorbing[s]; ++t) {
    Vec action_row(mdp.n_actions);
    for (std::size_t a = 0; a < mdp.n_actions; ++a) action_row[a] = policy.action_probs(s, a);
    const std::size_t a = rng.categorical(action_row);
    const std::size_t s2 = rng.categorical(mdp.kernel(s, a));
    trajectory.steps.push_back({s, a, s2});
    s = s2;
  }
  return trajectory;
}

std::vector<Trajectory> sample_trajectories(const TabularMDP& mdp, const Policy& policy,
                                            std::size_t n, std::size_t max_t, Rng& rng,
                                            const std::vector<std::size_t>& start_states) {
  if (n < 1) throw std::invalid_argument("sample_trajectories: n must be >= 1");
  std::vector<std::size_t> starts = start_states;
  if (starts.empty())
    for (std::size_t s = 0; s < mdp.n_states; ++s)
      if (!mdp.absorbing[s]) starts.push_back(s);
  std::vector<Trajectory> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(
        sample_trajectory(mdp, policy, starts[rng.uniform_index(starts.size())], max_t, rng));
  return out;
}

TabularMDP estimate_mdp(const std::vector<Trajectory>& trajectories, std::size_t n_states,
                        std::size_t n_actions, double smoothing) {
  if (trajectories.empty()) throw std::invalid_argument("estimate_mdp: no trajectories");
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.transition.assign(n_states * n_actions * n_states, 0.0);
  mdp.state_reward.assign(n_states, 0.0);
  mdp.absorbing.assign(n_states, false);

  std::vector<double> counts(n_states * n_actions * n_states, 0.0);
  std::vector<bool> entered(n_states, false), exited(n_states, false);
  for (const Trajectory& trajectory : trajectories)
    for (const Step& step : trajectory.steps) {
      if (step.state >= n_states || step.action >= n_actions || step.next_state >= n_states)
        throw std::invalid_argument("estimate_mdp: step outside state/action ranges");
      counts[(step.state * n_actions + step.action) * n_states + step.next_state] += 1.0;
      exited[step.state] = true;
      entered[step.next_state] = true;
    }

  for (std::size_t s = 0; s < n_states; ++s) {
    if (entered[s] && !exited[s]) mdp.absorbing[s] = true;
    for (std::size_t a = 0; a < n_actions; ++a) {
      const std::size_t base = (s * n_actions + a) * n_states;
      double total = 0.0;
      for (std::size_t s2 = 0; s2 < n_states; ++s2) total += counts[base + s2];
      if (mdp.absorbing[s]) {
        mdp.prob(s, a, s) = 1.0;
      } else if (total == 0.0 && smoothing == 0.0) {
        for (std::size_t s2 = 0; s2 < n_states; ++s2)
          mdp.prob(s, a, s2) = 1.0 / static_cast<double>(n_states);
      } else {
        const double denom = total + smoothing * static_cast<double>(n_states);
        for (std::size_t s2 = 0; s2 < n_states; ++s2)
          mdp.prob(s, a, s2) = (counts[base + s2] + smoothing) / denom;
      }
    }
  }
  return mdp;
}

namespace {

/// Value of a fixed policy: V(s) = sum_a pi(a|s) sum_s' P(s'|s,a) (R(s') +
/// discount * V(s') [s' non-absorbing]), V = 0 on absorbing states. Solved
/// exactly by Gaussian elimination over the non-absorbing block.
Vec evaluate_policy(const TabularMDP& mdp, const Policy& policy) {
  const std::size_t n = mdp.n_states;
  std::vector<std::size_t> free_states;
  std::vector<std::ptrdiff_t> index_of(n, -1);
  for (std::size_t s = 0; s < n; ++s)
    if (!mdp.absorbing[s]) {
      index_of[s] = static_cast<std::ptrdiff_t>(free_states.size());
      free_states.push_back(s);
    }
  const std::size_t m = free_states.size();
  Vec value(n, 0.0);
  if (m == 0) return value;

  Mat a(m, m, 0.0);
  Vec rhs(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t s = free_states[i];
    a(i, i) = 1.0;
    for (std::size_t act = 0; act < mdp.n_actions; ++act) {
      const double pa = policy.action_probs(s, act);
      if (pa == 0.0) continue;
      for (std::size_t s2 = 0; s2 < n; ++s2) {
        const double p = pa * mdp.prob(s, act, s2);
        if (p == 0.0) continue;
        rhs[i] += p * mdp.state_reward[s2];
        if (index_of[s2] >= 0) a(i, static_cast<std::size_t>(index_of[s2])) -= mdp.discount * p;
      }
    }
  }

  // Gaussian elimination with partial pivoting.
  std::vector<std::size_t> perm(m);
  for (std::size_t i = 0; i < m; ++i) perm[i] = i;
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < m; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (std::abs(a(piv, col)) < 1e-14)
      throw std::runtime_error("evaluate_policy: singular system (discount 1 without absorption?)");
    if (piv != col) {
      for (std::size_t c = 0; c < m; ++c) std::swap(a(col, c), a(piv, c));
      std::swap(rhs[col], rhs[piv]);
    }
    for (std::size_t r = col + 1; r < m; ++r) {
      const double f = a(r, col) / a(col, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < m; ++c) a(r, c) -= f * a(col, c);
      rhs[r] -= f * rhs[col];
    }
  }
  Vec x(m, 0.0);
  for (std::size_t i = m; i-- > 0;) {
    double s = rhs[i];
    for (std::size_t c = i + 1; c < m; ++c) s -= a(i, c) * x[c];
    x[i] = s / a(i, i);
  }
  for (std::size_t i = 0; i < m; ++i) value[free_states[i]] = x[i];
  return value;
}

double action_value(const TabularMDP& mdp, const Vec& value, std::size_t s, std::size_t a) {
  double q = 0.0;
  for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) {
    const double p = mdp.prob(s, a, s2);
    if (p == 0.0) continue;
    q += p * (mdp.state_reward[s2] + (mdp.absorbing[s2] ? 0.0 : mdp.discount * value[s2]));
  }
  return q;
}

}  // namespace

PolicyIterationResult policy_iteration(const TabularMDP& mdp, std::size_t max_rounds) {
  mdp.validate();
  PolicyIterationResult result;
  result.policy = Policy::deterministic(std::vector<std::size_t>(mdp.n_states, 0), mdp.n_actions);
  for (std::size_t round = 0; round < max_rounds; ++round) {
    result.value = evaluate_policy(mdp, result.policy);
    bool changed = false;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      if (mdp.absorbing[s]) continue;
      std::size_t best = 0;
      double best_q = action_value(mdp, result.value, s, 0);
      for (std::size_t a = 1; a < mdp.n_actions; ++a) {
        const double q = action_value(mdp, result.value, s, a);
        if (q > best_q + 1e-12) {
          best_q = q;
          best = a;
        }
      }
      if (best != result.policy.greedy_action(s)) {
        changed = true;
        for (std::size_t a = 0; a < mdp.n_actions; ++a)
          result.policy.action_probs(s, a) = (a == best) ? 1.0 : 0.0;
      }
    }
    result.improvement_rounds = round + 1;
    if (!changed) return result;
  }
  throw std::runtime_error("policy_iteration: no fixed point after " +
                           std::to_string(max_rounds) + " rounds");
}

double bellman_residual(const TabularMDP& mdp, const Vec& value) {
  double residual = 0.0;
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    if (mdp.absorbing[s]) continue;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < mdp.n_actions; ++a)
      best = std::max(best, action_value(mdp, value, s, a));
    residual = std::max(residual, std::abs(value[s] - best));
  }
  return residual;
}

std::vector<QueryPair> extract_query_pairs(const std::vector<Trajectory>& trajectories,
                                           const TabularMDP& estimated, const Policy& behavior,
                                           const Policy& target, std::size_t min_support) {
  if (min_support < 1) throw std::invalid_argument("extract_query_pairs: min_support must be >= 1");
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  for (const Trajectory& trajectory : trajectories)
    for (const Step& step : trajectory.steps)
      seen.insert({step.state, step.action, step.next_state});

  std::vector<QueryPair> out;
  for (const auto& key : seen) {
    const auto [s, a_doctor, s_next] = key;
    if (behavior.action_probs(s, a_doctor) <= 0.0) continue;
    const std::size_t a_target = target.greedy_action(s);
    const Vec k1 = estimated.kernel(s, a_doctor);
    const Vec k2 = estimated.kernel(s, a_target);

    std::vector<std::size_t> support;
    std::size_t support1 = 0, support2 = 0;
    for (std::size_t i = 0; i < k1.size(); ++i) {
      if (k1[i] > 0.0) ++support1;
      if (k2[i] > 0.0) ++support2;
      if (k1[i] > 0.0 || k2[i] > 0.0) support.push_back(i);
    }
    if (support1 < min_support || support2 < min_support) continue;

    QueryPair pair;
    pair.support = std::move(support);
    const std::size_t m = pair.support.size();
    // Floor zero entries so both logit vectors stay finite; the floor is far
    // below the Monte Carlo resolution of the estimate.
    Vec p1(m), p2(m);
    double t1 = 0.0, t2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      p1[i] = std::max(k1[pair.support[i]], 1e-12);
      p2[i] = std::max(k2[pair.support[i]], 1e-12);
      t1 += p1[i];
      t2 += p2[i];
    }
    pair.l1.resize(m);
    pair.l2.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      pair.l1[i] = std::log(p1[i] / t1);
      pair.l2[i] = std::log(p2[i] / t2);
    }
    pair.context = {s, a_doctor, a_target, s_next};
    pair.observed_index = static_cast<std::size_t>(
        std::lower_bound(pair.support.begin(), pair.support.end(), s_next) -
        pair.support.begin());
    out.push_back(std::move(pair));
  }
  return out;
}

Vec state_reward_draw(const SepsisLikeModel& model, Rng& rng) {
  const std::size_t n_vars = model.config.category_counts.size();
  std::vector<Vec> per_value(n_vars);
  for (std::size_t v = 0; v < n_vars; ++v)
    per_value[v] = rng.normal_vector(model.config.category_counts[v]);

  Vec rewards(model.mdp.n_states, 0.0);
  for (std::size_t s = 0; s < model.n_vital_states(); ++s) {
    const std::vector<std::size_t> cats = model.decode(s);
    for (std::size_t v = 0; v < n_vars; ++v) rewards[s] += per_value[v][cats[v]];
  }
  rewards[model.death_state] = model.config.death_reward;
  rewards[model.discharge_state] = model.config.discharge_reward;
  return rewards;
}

std::vector<EffectRow> treatment_effect_experiment(
    const std::vector<QueryPair>& pairs, const std::vector<MechanismSpec>& mechanisms,
    const std::vector<SamplingSetting>& settings, const Vec& state_scores,
    std::size_t n_samples, std::size_t n_seeds, std::uint64_t base_seed) {
  if (n_samples < 2)
    throw std::invalid_argument("treatment_effect_experiment: n_samples must be >= 2");
  std::vector<EffectRow> rows;
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const QueryPair& pair = pairs[pi];
    ScoreFunction h;
    h.table.resize(pair.support.size());
    for (std::size_t i = 0; i < pair.support.size(); ++i)
      h.table[i] = state_scores[pair.support[i]];

    for (const MechanismSpec& spec : mechanisms) {
      const bool needs_params =
          spec.mechanism == Mechanism::Gadget1 || spec.mechanism == Mechanism::Gadget2;
      if (needs_params && spec.per_pair.size() != pairs.size())
        throw std::invalid_argument(
            "treatment_effect_experiment: trained parameters missing for " +
            to_string(spec.mechanism));
      for (const SamplingSetting setting : settings) {
        PairSampler sampler = make_mechanism_sampler(
            spec.mechanism, setting, h,
            needs_params ? std::optional<GadgetParams>(spec.per_pair[pi]) : std::nullopt);
        for (std::size_t seed = 0; seed < n_seeds; ++seed) {
          const std::uint64_t mix =
              (static_cast<std::uint64_t>(pi) << 32) ^
              (static_cast<std::uint64_t>(spec.mechanism) << 24) ^
              (static_cast<std::uint64_t>(setting) << 16) ^ seed;
          Rng rng(Rng::derive(base_seed, mix));
          double sum = 0.0, sum_sq = 0.0;
          for (std::size_t t = 0; t < n_samples; ++t) {
            const auto [x, y] = sampler(pair.l1, pair.l2, rng);
            const double d = h.table[x] - h.table[y];
            sum += d;
            sum_sq += d * d;
          }
          const double n = static_cast<double>(n_samples);
          const double m = sum / n;
          const double var = std::max(0.0, (sum_sq - n * m * m) / (n - 1.0));
          rows.push_back({spec.mechanism, setting, pi, seed, m, var});
        }
      }
    }
  }
  return rows;
}

}  // namespace catcoup

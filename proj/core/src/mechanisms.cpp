#include "catcoup/mechanisms.hpp"

#include <memory>
#include <stdexcept>

#include "catcoup/gumbel.hpp"
#include "catcoup/numeric.hpp"

namespace catcoup {

std::string to_string(Mechanism mechanism) {
  switch (mechanism) {
    case Mechanism::Independent: return "independent";
    case Mechanism::InverseCdf: return "inverse-cdf";
    case Mechanism::GumbelMax: return "gumbel-max";
    case Mechanism::Gadget1: return "gadget1";
    case Mechanism::Gadget2: return "gadget2";
    case Mechanism::OptimalLP: return "optimal-lp";
  }
  return "?";
}

std::string to_string(SamplingSetting setting) {
  return setting == SamplingSetting::Joint ? "joint" : "counterfactual";
}

Mechanism parse_mechanism(const std::string& name) {
  for (Mechanism m : {Mechanism::Independent, Mechanism::InverseCdf, Mechanism::GumbelMax,
                      Mechanism::Gadget1, Mechanism::Gadget2, Mechanism::OptimalLP})
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown mechanism: " + name);
}

namespace {

/// Per-pair cache shared by the closures below; rebuilt whenever the logits
/// change between calls.
template <typename Tables>
struct PairCache {
  Vec l1, l2;
  Tables tables;
  bool valid = false;

  template <typename Build>
  const Tables& get(const Vec& new_l1, const Vec& new_l2, Build&& build) {
    if (!valid || new_l1 != l1 || new_l2 != l2) {
      l1 = new_l1;
      l2 = new_l2;
      tables = build(new_l1, new_l2);
      valid = true;
    }
    return tables;
  }
};

struct ExplicitTables {
  Mat joint;
  Vec p;
};

std::pair<std::size_t, std::size_t> sample_joint_table(const Mat& joint, Rng& rng) {
  const double u = rng.uniform_open01();
  double acc = 0.0;
  const std::size_t k = joint.rows;
  for (std::size_t x = 0; x < k; ++x)
    for (std::size_t y = 0; y < k; ++y) {
      acc += joint(x, y);
      if (u <= acc) return {x, y};
    }
  return {k - 1, k - 1};
}

std::pair<std::size_t, std::size_t> sample_conditional_column(const Mat& joint, const Vec& p,
                                                              Rng& rng) {
  const std::size_t k = joint.rows;
  const std::size_t x = rng.categorical(p);
  Vec column(k);
  double mass = 0.0;
  for (std::size_t y = 0; y < k; ++y) {
    column[y] = joint(x, y);
    mass += column[y];
  }
  if (mass <= 0.0) return {x, x};  // p(x) ~ 0; conditional is immaterial
  for (double& c : column) c /= mass;
  return {x, rng.categorical(column)};
}

PairSampler make_explicit_sampler(SamplingSetting setting,
                                  std::function<CouplingMatrix(const Vec&, const Vec&)> build) {
  auto cache = std::make_shared<PairCache<ExplicitTables>>();
  return [cache, setting, build = std::move(build)](const Vec& l1, const Vec& l2, Rng& rng) {
    const ExplicitTables& tables =
        cache->get(l1, l2, [&](const Vec& a, const Vec& b) -> ExplicitTables {
          CouplingMatrix coupling = build(a, b);
          return {std::move(coupling.joint), softmax(a)};
        });
    return setting == SamplingSetting::Joint
               ? sample_joint_table(tables.joint, rng)
               : sample_conditional_column(tables.joint, tables.p, rng);
  };
}

}  // namespace

PairSampler make_mechanism_sampler(Mechanism mechanism, SamplingSetting setting,
                                   std::optional<ScoreFunction> scores_for_lp,
                                   std::optional<GadgetParams> params) {
  switch (mechanism) {
    case Mechanism::Independent:
      // The conditional of a product coupling is q either way.
      return [](const Vec& l1, const Vec& l2, Rng& rng) -> std::pair<std::size_t, std::size_t> {
        return {rng.categorical(softmax(l1)), rng.categorical(softmax(l2))};
      };

    case Mechanism::InverseCdf:
      if (setting == SamplingSetting::Joint)
        return [](const Vec& l1, const Vec& l2, Rng& rng) -> std::pair<std::size_t, std::size_t> {
          const double u = rng.uniform_open01();
          const Vec p = softmax(l1), q = softmax(l2);
          std::size_t x = 0, y = 0;
          double cp = p[0], cq = q[0];
          while (u > cp && x + 1 < p.size()) cp += p[++x];
          while (u > cq && y + 1 < q.size()) cq += q[++y];
          return {x, y};
        };
      return make_explicit_sampler(setting, [](const Vec& l1, const Vec& l2) {
        return inverse_cdf_coupling(softmax(l1), softmax(l2));
      });

    case Mechanism::GumbelMax:
      if (setting == SamplingSetting::Joint)
        return [](const Vec& l1, const Vec& l2, Rng& rng) -> std::pair<std::size_t, std::size_t> {
          const Vec noise = rng.gumbel_vector(l1.size());
          return {gumbel_argmax(l1, noise), gumbel_argmax(l2, noise)};
        };
      return [](const Vec& l1, const Vec& l2, Rng& rng) -> std::pair<std::size_t, std::size_t> {
        const std::size_t x = rng.categorical(softmax(l1));
        const Vec noise = sample_conditional_gumbels(l1, x, rng);
        return {x, gumbel_argmax(l2, noise)};
      };

    case Mechanism::Gadget1: {
      if (!params || !std::holds_alternative<Gadget1Parameters>(*params))
        throw std::invalid_argument("gadget1 sampler requires Gadget1Parameters");
      auto owned = std::make_shared<Gadget1Parameters>(std::get<Gadget1Parameters>(*params));
      auto cache = std::make_shared<PairCache<Gadget1Tables>>();
      if (setting == SamplingSetting::Joint)
        return [owned, cache](const Vec& l1, const Vec& l2, Rng& rng) {
          const Gadget1Tables& tables = cache->get(
              l1, l2, [&](const Vec& a, const Vec& b) { return gadget1_tables(*owned, a, b); });
          Mat noise(l1.size(), l1.size());
          for (double& g : noise.data) g = rng.gumbel();
          return gadget1_sample_pair_from(tables, noise);
        };
      return [owned, cache](const Vec& l1, const Vec& l2,
                            Rng& rng) -> std::pair<std::size_t, std::size_t> {
        const Gadget1Tables& tables = cache->get(
            l1, l2, [&](const Vec& a, const Vec& b) { return gadget1_tables(*owned, a, b); });
        const std::size_t x = rng.categorical(softmax(l1));
        return {x, gadget1_counterfactual_from(tables, x, rng)};
      };
    }

    case Mechanism::Gadget2: {
      if (!params || !std::holds_alternative<Gadget2Parameters>(*params))
        throw std::invalid_argument("gadget2 sampler requires Gadget2Parameters");
      auto owned = std::make_shared<Gadget2Parameters>(std::get<Gadget2Parameters>(*params));
      auto cache = std::make_shared<PairCache<Gadget2Tables>>();
      if (setting == SamplingSetting::Joint)
        return [owned, cache](const Vec& l1, const Vec& l2, Rng& rng) {
          const Gadget2Tables& tables = cache->get(
              l1, l2, [&](const Vec& a, const Vec& b) { return gadget2_tables(*owned, a, b); });
          const Vec zn = rng.gumbel_vector(owned->cluster_count);
          const Vec xn = rng.gumbel_vector(owned->outcome_count());
          return gadget2_sample_pair_from(tables, zn, xn);
        };
      return [owned, cache](const Vec& l1, const Vec& l2,
                            Rng& rng) -> std::pair<std::size_t, std::size_t> {
        const Gadget2Tables& tables = cache->get(
            l1, l2, [&](const Vec& a, const Vec& b) { return gadget2_tables(*owned, a, b); });
        const std::size_t x = rng.categorical(softmax(l1));
        return {x, gadget2_counterfactual_from(tables, x, rng)};
      };
    }

    case Mechanism::OptimalLP: {
      if (!scores_for_lp)
        throw std::invalid_argument("optimal-lp sampler requires a score function");
      ScoreFunction h = *scores_for_lp;
      return make_explicit_sampler(setting, [h = std::move(h)](const Vec& l1, const Vec& l2) {
        const std::size_t k = l1.size();
        if (h.table.size() != k)
          throw std::invalid_argument("optimal-lp sampler: score length mismatch");
        Mat cost(k, k);
        for (std::size_t x = 0; x < k; ++x)
          for (std::size_t y = 0; y < k; ++y) {
            const double d = h.table[x] - h.table[y];
            cost(x, y) = d * d;
          }
        return optimal_transport_coupling(softmax(l1), softmax(l2), cost);
      });
    }
  }
  throw std::logic_error("make_mechanism_sampler: unknown mechanism");
}

}  // namespace catcoup

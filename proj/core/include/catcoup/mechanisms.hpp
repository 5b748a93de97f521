#pragma once

#include <optional>
#include <string>

#include "catcoup/coupling.hpp"
#include "catcoup/train.hpp"

namespace catcoup {

enum class Mechanism { Independent, InverseCdf, GumbelMax, Gadget1, Gadget2, OptimalLP };

enum class SamplingSetting {
  Joint,           // shared forward noise
  Counterfactual,  // draw x from p, infer the noise, sample the other side
};

std::string to_string(Mechanism mechanism);
std::string to_string(SamplingSetting setting);
Mechanism parse_mechanism(const std::string& name);

/// Paired sampler for a mechanism. l1 and l2 are logits. Explicit-joint
/// mechanisms (independent, inverse-CDF, optimal-LP) form their coupling
/// table per pair (cached across consecutive calls with the same pair); in
/// the counterfactual setting they sample y from the conditional column given
/// x, which is the unique conditional consistent with their joint.
/// scores_for_lp supplies the squared-score-difference cost for OptimalLP;
/// params supplies trained parameters for the gadget mechanisms.
PairSampler make_mechanism_sampler(Mechanism mechanism, SamplingSetting setting,
                                   std::optional<ScoreFunction> scores_for_lp = std::nullopt,
                                   std::optional<GadgetParams> params = std::nullopt);

}  // namespace catcoup

#pragma once

#include <cstddef>

#include "catcoup/matrix.hpp"
#include "catcoup/rng.hpp"

namespace catcoup {

/// n independent Gumbel(0) draws via -log(-log(u)), u uniform on (0,1).
Vec sample_gumbels(std::size_t n, Rng& rng);

/// argmax_k (logits[k] + noise[k]); ties broken by lowest index.
/// Throws std::invalid_argument on length mismatch.
std::size_t gumbel_argmax(const Vec& logits, const Vec& noise);

/// softmax((logits + noise) / temperature). Throws if temperature <= 0.
Vec gumbel_softmax(const Vec& logits, const Vec& noise, double temperature);

/// Draws Gumbel noise from the posterior given that gumbel_argmax(logits, .)
/// equals `observed` (top-down construction: the shifted maximum is sampled
/// from Gumbel(logsumexp(logits)) and pinned to the observed coordinate, the
/// remaining shifted values are truncated Gumbels below it). The returned
/// noise always reproduces the conditioning argmax exactly.
Vec sample_conditional_gumbels(const Vec& logits, std::size_t observed, Rng& rng);

/// Gumbel(location) truncated above at `bound`, via the log-space identity
/// -log(exp(-g) + exp(-bound)).
double truncated_gumbel(double location, double bound, Rng& rng);

}  // namespace catcoup

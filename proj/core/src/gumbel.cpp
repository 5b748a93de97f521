#include "catcoup/gumbel.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "catcoup/numeric.hpp"

namespace catcoup {

Vec sample_gumbels(std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_gumbels: n must be >= 1");
  return rng.gumbel_vector(n);
}

std::size_t gumbel_argmax(const Vec& logits, const Vec& noise) {
  if (logits.size() != noise.size())
    throw std::invalid_argument("gumbel_argmax: logits/noise length mismatch");
  std::size_t best = 0;
  double best_v = logits[0] + noise[0];
  for (std::size_t k = 1; k < logits.size(); ++k) {
    const double v = logits[k] + noise[k];
    if (v > best_v) {
      best_v = v;
      best = k;
    }
  }
  return best;
}

Vec gumbel_softmax(const Vec& logits, const Vec& noise, double temperature) {
  if (logits.size() != noise.size())
    throw std::invalid_argument("gumbel_softmax: logits/noise length mismatch");
  if (!(temperature > 0.0)) throw std::invalid_argument("gumbel_softmax: temperature must be > 0");
  Vec scaled(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k)
    scaled[k] = (logits[k] + noise[k]) / temperature;
  return softmax(scaled);
}

double truncated_gumbel(double location, double bound, Rng& rng) {
  const double g = location + rng.gumbel();
  double t = -log_add_exp(-g, -bound);
  // Rounding can land exactly on the bound when g >> bound; nudge below so a
  // lowest-index argmax can never steal the conditioning coordinate.
  if (t >= bound) t = std::nextafter(bound, -std::numeric_limits<double>::infinity());
  return t;
}

Vec sample_conditional_gumbels(const Vec& logits, std::size_t observed, Rng& rng) {
  require_finite_logits(logits, "sample_conditional_gumbels");
  const std::size_t k = logits.size();
  if (observed >= k)
    throw std::invalid_argument("sample_conditional_gumbels: observed index out of range");

  const double max_shifted = logsumexp(logits) + rng.gumbel();
  Vec noise(k);
  noise[observed] = max_shifted - logits[observed];
  for (std::size_t j = 0; j < k; ++j) {
    if (j == observed) continue;
    noise[j] = truncated_gumbel(logits[j], max_shifted, rng) - logits[j];
  }
  // The shift-subtract-add round trip can produce one-ulp ties; resolve them
  // toward the conditioning coordinate so the guarantee is unconditional.
  for (int rounds = 0; gumbel_argmax(logits, noise) != observed && rounds < 64; ++rounds)
    noise[observed] = std::nextafter(noise[observed], std::numeric_limits<double>::infinity());
  return noise;
}

}  // namespace catcoup

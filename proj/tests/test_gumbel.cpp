#include <doctest.h>

#include <cmath>

#include "catcoup/gumbel.hpp"
#include "catcoup/numeric.hpp"
#include "support/stats.hpp"

using namespace catcoup;
using testsupport::gumbel_cdf;
using testsupport::ks_consistent;

TEST_SUITE("gumbel") {

TEST_CASE("sampling is deterministic per seed") {
  Rng a(42), b(42);
  const Vec ga = sample_gumbels(3, a);
  const Vec gb = sample_gumbels(3, b);
  CHECK(ga == gb);
  CHECK(ga.size() == 3);
  CHECK_THROWS_AS(sample_gumbels(0, a), std::invalid_argument);
}

TEST_CASE("uniform draws stay strictly inside the unit interval") {
  Rng rng(7);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform_open01();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
  // the generating transform itself: u = e^{-1} maps to exactly zero
  CHECK(-std::log(-std::log(std::exp(-1.0))) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("empirical mean approaches the Euler-Mascheroni constant") {
  Rng rng(123);
  double s = 0.0;
  const std::size_t n = 1000000;
  for (std::size_t i = 0; i < n; ++i) s += rng.gumbel();
  CHECK(s / static_cast<double>(n) == doctest::Approx(0.5772156649).epsilon(0.02));
  CHECK(std::abs(s / static_cast<double>(n) - 0.5772156649) < 0.01);
}

TEST_CASE("argmax picks the largest perturbed logit, lowest index on ties") {
  CHECK(gumbel_argmax({0.0, 0.0}, {1.0, 0.5}) == 0);
  CHECK(gumbel_argmax({0.0, 0.0, 0.0}, {2.0, 2.0, 1.0}) == 0);
  CHECK_THROWS_AS(gumbel_argmax({0.0, 0.0}, {1.0}), std::invalid_argument);
}

TEST_CASE("argmax frequencies follow the softmax of the logits") {
  const Vec probs{0.2, 0.3, 0.5};
  Vec logits(3);
  for (int i = 0; i < 3; ++i) logits[i] = std::log(probs[i]);
  Rng rng(99);
  const std::size_t n = 1000000;
  std::vector<std::size_t> counts(3, 0);
  Vec noise(3);
  for (std::size_t s = 0; s < n; ++s) {
    for (double& g : noise) g = rng.gumbel();
    counts[gumbel_argmax(logits, noise)]++;
  }
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(static_cast<double>(counts[i]) / n - probs[i]) < 0.005);

  // uniform logits: chi-square consistency
  Rng rng2(100);
  std::vector<std::size_t> counts2(4, 0);
  const Vec uniform_logits(4, 0.0);
  Vec noise2(4);
  for (std::size_t s = 0; s < 200000; ++s) {
    for (double& g : noise2) g = rng2.gumbel();
    counts2[gumbel_argmax(uniform_logits, noise2)]++;
  }
  CHECK(testsupport::chi2_consistent(counts2, Vec(4, 0.25)));
}

TEST_CASE("argmax is shift invariant") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec l = testsupport::random_logits(6, rng);
    const Vec g = rng.gumbel_vector(6);
    Vec shifted = l;
    const double c = 10.0 * rng.normal();
    for (double& x : shifted) x += c;
    CHECK(gumbel_argmax(l, g) == gumbel_argmax(shifted, g));
  }
}

TEST_CASE("tempered softmax: normalization, symmetry, hard limit") {
  Rng rng(11);
  const Vec zeros(4, 0.0);
  const Vec sym = gumbel_softmax(zeros, zeros, 1.0);
  for (double x : sym) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));

  for (int trial = 0; trial < 100; ++trial) {
    const Vec l = testsupport::random_logits(5, rng);
    const Vec g = rng.gumbel_vector(5);
    const Vec soft = gumbel_softmax(l, g, 0.7);
    double total = 0.0;
    for (double x : soft) total += x;
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(gumbel_softmax(zeros, zeros, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gumbel_softmax(zeros, zeros, -1.0), std::invalid_argument);

  // tau -> 0 recovers the hard argmax when the top-two margin is clear
  std::size_t checked = 0;
  for (int trial = 0; trial < 20000 && checked < 10000; ++trial) {
    const Vec l = testsupport::random_logits(6, rng);
    const Vec g = rng.gumbel_vector(6);
    Vec perturbed(6);
    for (int i = 0; i < 6; ++i) perturbed[i] = l[i] + g[i];
    const std::size_t top = argmax_index(perturbed);
    double second = -1e300;
    for (int i = 0; i < 6; ++i)
      if (static_cast<std::size_t>(i) != top) second = std::max(second, perturbed[i]);
    if (perturbed[top] - second <= 1e-4) continue;
    ++checked;
    const Vec soft = gumbel_softmax(l, g, 1e-6);
    CHECK(argmax_index(soft) == top);
    CHECK(soft[top] > 0.999);
  }
  CHECK(checked == 10000);
}

TEST_CASE("conditional noise always reproduces the conditioning argmax") {
  Rng rng(31);
  for (int trial = 0; trial < 100000; ++trial) {
    const std::size_t k = 2 + rng.uniform_index(6);
    const Vec l = testsupport::random_logits(k, rng, 2.0);
    const std::size_t observed = rng.uniform_index(k);
    const Vec noise = sample_conditional_gumbels(l, observed, rng);
    REQUIRE(gumbel_argmax(l, noise) == observed);
  }
  CHECK_THROWS_AS(sample_conditional_gumbels({0.0, 0.0}, 2, rng), std::invalid_argument);
}

TEST_CASE("conditional maximum is distributed as a located Gumbel") {
  // K=2, uniform logits, observed = 0: the maximum of l + noise is
  // Gumbel(log 2) regardless of the conditioning coordinate.
  Rng rng(77);
  const Vec l{0.0, 0.0};
  std::vector<double> maxima;
  for (int trial = 0; trial < 100000; ++trial) {
    const Vec noise = sample_conditional_gumbels(l, 0, rng);
    maxima.push_back(std::max(l[0] + noise[0], l[1] + noise[1]));
  }
  CHECK(ks_consistent(std::move(maxima),
                      [](double x) { return gumbel_cdf(x, std::log(2.0)); }));
}

TEST_CASE("conditional noise marginalizes back to unconditional Gumbel noise") {
  Rng rng(78);
  const Vec l{0.3, -0.4, 1.1};
  const Vec p = softmax(l);
  std::vector<double> pooled[3];
  for (int trial = 0; trial < 100000; ++trial) {
    const std::size_t observed = rng.categorical(p);
    const Vec noise = sample_conditional_gumbels(l, observed, rng);
    for (int i = 0; i < 3; ++i) pooled[i].push_back(noise[i]);
  }
  for (int i = 0; i < 3; ++i)
    CHECK(ks_consistent(std::move(pooled[i]), [](double x) { return gumbel_cdf(x); }));
}

}  // TEST_SUITE

#include "catcoup/rng.hpp"

#include <cmath>

namespace catcoup {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open01();
  const double u2 = uniform_open01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::size_t Rng::uniform_index(std::size_t n) {
  return static_cast<std::size_t>(uniform_open01() * static_cast<double>(n)) % n;
}

std::size_t Rng::categorical(const Vec& probs) {
  const double u = uniform_open01();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    acc += probs[i];
    if (u <= acc) return i;
  }
  return probs.empty() ? 0 : probs.size() - 1;
}

Vec Rng::gumbel_vector(std::size_t n) {
  Vec out(n);
  for (double& x : out) x = gumbel();
  return out;
}

Vec Rng::normal_vector(std::size_t n) {
  Vec out(n);
  for (double& x : out) x = normal();
  return out;
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace catcoup

#include "catcoup/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace catcoup {

double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

double logsumexp(const Vec& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Vec softmax(const Vec& logits) {
  const double lse = logsumexp(logits);
  Vec out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp(logits[i] - lse);
  return out;
}

Vec log_softmax(const Vec& logits) {
  const double lse = logsumexp(logits);
  Vec out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

Vec stabilized_log_softmax(const Vec& logits, double floor) {
  Vec out = log_softmax(logits);
  bool clamped = false;
  for (double& x : out)
    if (x < floor) {
      x = floor;
      clamped = true;
    }
  if (clamped) {
    const double lse = logsumexp(out);
    for (double& x : out) x -= lse;
  }
  return out;
}

std::size_t argmax_index(const Vec& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double sum(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

double mean(const Vec& v) { return v.empty() ? 0.0 : sum(v) / static_cast<double>(v.size()); }

bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void require_distribution(const Vec& p, double tol, const char* what) {
  if (p.size() < 2) throw std::invalid_argument(std::string(what) + ": need at least 2 outcomes");
  double s = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x))
      throw std::invalid_argument(std::string(what) + ": entries must be finite and >= 0");
    s += x;
  }
  if (std::abs(s - 1.0) > tol)
    throw std::invalid_argument(std::string(what) + ": entries must sum to 1");
}

void require_positive_distribution(const Vec& p, double tol, const char* what) {
  require_distribution(p, tol, what);
  for (double x : p)
    if (x <= 0.0)
      throw std::invalid_argument(std::string(what) + ": entries must be strictly positive");
}

void require_finite_logits(const Vec& l, const char* what) {
  if (l.size() < 2) throw std::invalid_argument(std::string(what) + ": need at least 2 outcomes");
  if (!all_finite(l)) throw std::invalid_argument(std::string(what) + ": entries must be finite");
}

}  // namespace catcoup

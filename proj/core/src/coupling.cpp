#include "catcoup/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "catcoup/gumbel.hpp"
#include "catcoup/numeric.hpp"
#include "catcoup/transport.hpp"

namespace catcoup {

void CouplingMatrix::validate(double tol) const {
  const std::size_t k = joint.rows;
  if (joint.cols != k || row_marginal.size() != k || col_marginal.size() != k)
    throw std::runtime_error("CouplingMatrix: inconsistent dimensions");
  double total = 0.0;
  for (double x : joint.data) {
    if (!(x >= 0.0) || !std::isfinite(x))
      throw std::runtime_error("CouplingMatrix: entries must be finite and >= 0");
    total += x;
  }
  if (std::abs(total - 1.0) > tol)
    throw std::runtime_error("CouplingMatrix: total mass must be 1");
  const Vec rs = row_sums(joint);
  const Vec cs = col_sums(joint);
  for (std::size_t i = 0; i < k; ++i) {
    if (std::abs(rs[i] - row_marginal[i]) > tol)
      throw std::runtime_error("CouplingMatrix: row marginal mismatch");
    if (std::abs(cs[i] - col_marginal[i]) > tol)
      throw std::runtime_error("CouplingMatrix: column marginal mismatch");
  }
}

CouplingMatrix CouplingMatrix::from_joint(Mat joint) {
  CouplingMatrix out;
  out.row_marginal = row_sums(joint);
  out.col_marginal = col_sums(joint);
  out.joint = std::move(joint);
  return out;
}

double CouplingMatrix::mismatch_probability() const {
  double same = 0.0;
  for (std::size_t i = 0; i < joint.rows; ++i) same += joint(i, i);
  return 1.0 - same;
}

double total_variation(const Vec& p, const Vec& q) {
  if (p.size() != q.size()) throw std::invalid_argument("total_variation: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

namespace {

void require_pair(const Vec& p, const Vec& q) {
  require_distribution(p, 1e-9, "p");
  require_distribution(q, 1e-9, "q");
  if (p.size() != q.size())
    throw std::invalid_argument("coupling: p and q must have equal length");
}

}  // namespace

CouplingMatrix independent_coupling(const Vec& p, const Vec& q) {
  require_pair(p, q);
  const std::size_t k = p.size();
  CouplingMatrix out;
  out.joint = Mat(k, k);
  for (std::size_t x = 0; x < k; ++x)
    for (std::size_t y = 0; y < k; ++y) out.joint(x, y) = p[x] * q[y];
  out.row_marginal = p;
  out.col_marginal = q;
  return out;
}

CouplingMatrix inverse_cdf_coupling(const Vec& p, const Vec& q) {
  require_pair(p, q);
  const std::size_t k = p.size();
  CouplingMatrix out;
  out.joint = Mat(k, k);
  // Sweep the unit interval split by both CDFs; each segment belongs to one
  // (x, y) cell.
  std::size_t x = 0, y = 0;
  double cum = 0.0, px = p[0], qy = q[0];
  while (true) {
    const double next = std::min(px, qy);
    out.joint(x, y) += next - cum;
    cum = next;
    const bool advance_x = (px <= qy);
    if (advance_x) {
      if (++x == k) break;
      px += p[x];
    } else {
      if (++y == k) break;
      qy += q[y];
    }
  }
  out.row_marginal = p;
  out.col_marginal = q;
  return out;
}

Vec gumbel_max_diagonal(const Vec& p, const Vec& q) {
  require_positive_distribution(p, 1e-9, "p");
  require_positive_distribution(q, 1e-9, "q");
  if (p.size() != q.size())
    throw std::invalid_argument("gumbel_max_diagonal: length mismatch");
  const std::size_t k = p.size();
  Vec diag(k);
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      s += std::max(p[j] / p[i], q[j] / q[i]);
    }
    diag[i] = 1.0 / (1.0 + s);
  }
  return diag;
}

CouplingMatrix estimate_gumbel_max_coupling(const Vec& l1, const Vec& l2,
                                            std::size_t n_samples, Rng& rng) {
  require_finite_logits(l1, "l1");
  require_finite_logits(l2, "l2");
  if (l1.size() != l2.size())
    throw std::invalid_argument("estimate_gumbel_max_coupling: length mismatch");
  if (n_samples < 1)
    throw std::invalid_argument("estimate_gumbel_max_coupling: n_samples must be >= 1");
  const std::size_t k = l1.size();
  Mat counts(k, k, 0.0);
  Vec noise(k);
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (double& g : noise) g = rng.gumbel();
    counts(gumbel_argmax(l1, noise), gumbel_argmax(l2, noise)) += 1.0;
  }
  for (double& c : counts.data) c /= static_cast<double>(n_samples);
  return CouplingMatrix::from_joint(std::move(counts));
}

CouplingMatrix maximal_coupling(const Vec& p, const Vec& q) {
  require_pair(p, q);
  const std::size_t k = p.size();
  CouplingMatrix out;
  out.joint = Mat(k, k);
  Vec rp(k), rq(k);
  double tv = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double d = std::min(p[i], q[i]);
    out.joint(i, i) = d;
    rp[i] = p[i] - d;
    rq[i] = q[i] - d;
    tv += rp[i];
  }
  if (tv > 0.0) {
    for (std::size_t x = 0; x < k; ++x)
      for (std::size_t y = 0; y < k; ++y) out.joint(x, y) += rp[x] * rq[y] / tv;
  }
  out.row_marginal = p;
  out.col_marginal = q;
  return out;
}

CouplingMatrix optimal_transport_coupling(const Vec& p, const Vec& q, const Mat& cost) {
  require_pair(p, q);
  if (cost.rows != p.size() || cost.cols != q.size())
    throw std::invalid_argument("optimal_transport_coupling: cost shape mismatch");
  CouplingMatrix out;
  out.joint = solve_transport(p, q, cost);
  out.row_marginal = p;
  out.col_marginal = q;
  return out;
}

bool check_gumbel_max_suboptimal(const Vec& p, const Vec& q) {
  require_positive_distribution(p, 1e-9, "p");
  require_positive_distribution(q, 1e-9, "q");
  if (p.size() != q.size())
    throw std::invalid_argument("check_gumbel_max_suboptimal: length mismatch");
  const std::size_t k = p.size();
  for (std::size_t i = 0; i < k; ++i) {
    double sp = 0.0, sq = 0.0, smax = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      const double a = p[j] / p[i];
      const double b = q[j] / q[i];
      sp += a;
      sq += b;
      smax += std::max(a, b);
    }
    if (std::max(sp, sq) < smax) return true;
  }
  return false;
}

CouplingMetrics coupling_metrics(const CouplingMatrix& pi, const ScoreFunction& h1,
                                 const ScoreFunction& h2) {
  const std::size_t k = pi.joint.rows;
  if (h1.table.size() != k || h2.table.size() != k)
    throw std::invalid_argument("coupling_metrics: score length mismatch");
  double m = 0.0;
  for (std::size_t x = 0; x < k; ++x)
    for (std::size_t y = 0; y < k; ++y) m += pi.joint(x, y) * (h1.table[x] - h2.table[y]);
  double v = 0.0;
  for (std::size_t x = 0; x < k; ++x)
    for (std::size_t y = 0; y < k; ++y) {
      const double d = h1.table[x] - h2.table[y] - m;
      v += pi.joint(x, y) * d * d;
    }
  CouplingMetrics out;
  out.mean_diff = m;
  out.var_diff = v;
  out.p_mismatch = pi.mismatch_probability();
  return out;
}

EstimateResult gumbel_max_counterfactual_estimate(const Vec& l1, const Vec& l2,
                                                  const ScoreFunction& h1,
                                                  const ScoreFunction& h2,
                                                  std::size_t n_outer, Rng& rng) {
  require_finite_logits(l1, "l1");
  require_finite_logits(l2, "l2");
  if (l1.size() != l2.size())
    throw std::invalid_argument("gumbel_max_counterfactual_estimate: length mismatch");
  if (h1.table.size() != l1.size() || h2.table.size() != l2.size())
    throw std::invalid_argument("gumbel_max_counterfactual_estimate: score length mismatch");
  if (n_outer < 1)
    throw std::invalid_argument("gumbel_max_counterfactual_estimate: n_outer must be >= 1");

  const Vec q = softmax(l2);
  double s = 0.0, s2 = 0.0;
  for (std::size_t t = 0; t < n_outer; ++t) {
    const std::size_t y = rng.categorical(q);
    const Vec noise = sample_conditional_gumbels(l2, y, rng);
    const std::size_t x = gumbel_argmax(l1, noise);
    const double d = h1.table[x] - h2.table[y];
    s += d;
    s2 += d * d;
  }
  const double n = static_cast<double>(n_outer);
  EstimateResult out;
  out.estimate = s / n;
  const double var = std::max(0.0, s2 / n - out.estimate * out.estimate);
  out.std_error = std::sqrt(var / n);
  return out;
}

}  // namespace catcoup

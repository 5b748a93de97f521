#include "catcoup/transport.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace catcoup {

namespace {

struct Cell {
  std::size_t i, j;
  double flow;
};

}  // namespace

double transport_objective(const Mat& plan, const Mat& cost) {
  double obj = 0.0;
  for (std::size_t k = 0; k < plan.data.size(); ++k) obj += plan.data[k] * cost.data[k];
  return obj;
}

Mat solve_transport(const Vec& supply, const Vec& demand, const Mat& cost) {
  const std::size_t m = supply.size();
  const std::size_t n = demand.size();
  if (m == 0 || n == 0) throw std::invalid_argument("solve_transport: empty marginals");
  if (cost.rows != m || cost.cols != n)
    throw std::invalid_argument("solve_transport: cost shape mismatch");
  double total_supply = 0.0, total_demand = 0.0;
  for (double s : supply) {
    if (!(s >= 0.0)) throw std::invalid_argument("solve_transport: negative supply");
    total_supply += s;
  }
  for (double d : demand) {
    if (!(d >= 0.0)) throw std::invalid_argument("solve_transport: negative demand");
    total_demand += d;
  }
  if (std::abs(total_supply - total_demand) > 1e-9)
    throw std::invalid_argument("solve_transport: supply/demand totals differ");
  for (double c : cost.data)
    if (!std::isfinite(c)) throw std::invalid_argument("solve_transport: non-finite cost");

  // Northwest-corner start. Advancing only one of (row, col) per step keeps
  // exactly m+n-1 basic cells, inserting zero-flow cells on degenerate steps.
  std::vector<Cell> basis;
  basis.reserve(m + n - 1);
  {
    Vec a = supply, b = demand;
    std::size_t i = 0, j = 0;
    while (true) {
      const double x = std::min(a[i], b[j]);
      basis.push_back({i, j, x});
      a[i] -= x;
      b[j] -= x;
      if (i + 1 == m && j + 1 == n) break;
      if (a[i] <= b[j] && i + 1 < m)
        ++i;
      else
        ++j;
    }
  }

  double cost_scale = 0.0;
  for (double c : cost.data) cost_scale = std::max(cost_scale, std::abs(c));
  const double tol = 1e-12 * (1.0 + cost_scale);

  const std::size_t n_nodes = m + n;  // rows then cols
  std::vector<std::vector<std::size_t>> adj(n_nodes);  // node -> basis cell ids
  std::vector<double> u(m), v(n);
  std::vector<int> parent(n_nodes), via(n_nodes);
  std::vector<std::size_t> queue_buf(n_nodes);

  const std::size_t max_pivots = 10000 * (m + n) + 100000;
  for (std::size_t pivot = 0;; ++pivot) {
    if (pivot > max_pivots)
      throw std::runtime_error("solve_transport: pivot limit exceeded");

    for (auto& lst : adj) lst.clear();
    for (std::size_t c = 0; c < basis.size(); ++c) {
      adj[basis[c].i].push_back(c);
      adj[m + basis[c].j].push_back(c);
    }

    // Duals from the spanning tree: u[i] + v[j] = cost(i, j) on basic cells.
    std::fill(parent.begin(), parent.end(), -2);
    std::size_t head = 0, tail = 0;
    queue_buf[tail++] = 0;
    parent[0] = -1;
    u[0] = 0.0;
    while (head < tail) {
      const std::size_t node = queue_buf[head++];
      for (std::size_t c : adj[node]) {
        const Cell& cell = basis[c];
        const std::size_t other = (node < m) ? m + cell.j : cell.i;
        if (parent[other] != -2) continue;
        parent[other] = static_cast<int>(node);
        if (other < m)
          u[other] = cost(cell.i, cell.j) - v[cell.j];
        else
          v[other - m] = cost(cell.i, cell.j) - u[cell.i];
        queue_buf[tail++] = other;
      }
    }

    // Entering cell: Bland's rule, lowest linear index with negative reduced cost.
    std::size_t enter_i = m, enter_j = n;
    for (std::size_t i = 0; i < m && enter_i == m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (cost(i, j) - u[i] - v[j] < -tol) {
          enter_i = i;
          enter_j = j;
          break;
        }
    if (enter_i == m) break;  // optimal

    // Unique tree path from row enter_i to col enter_j.
    std::fill(parent.begin(), parent.end(), -2);
    head = tail = 0;
    queue_buf[tail++] = enter_i;
    parent[enter_i] = -1;
    while (head < tail && parent[m + enter_j] == -2) {
      const std::size_t node = queue_buf[head++];
      for (std::size_t c : adj[node]) {
        const Cell& cell = basis[c];
        const std::size_t other = (node < m) ? m + cell.j : cell.i;
        if (parent[other] != -2) continue;
        parent[other] = static_cast<int>(node);
        via[other] = static_cast<int>(c);
        queue_buf[tail++] = other;
      }
    }
    if (parent[m + enter_j] == -2)
      throw std::runtime_error("solve_transport: basis lost connectivity");

    // Walk back from the demand node; cells alternate -,+,-,... along the cycle.
    std::vector<std::size_t> path;
    for (std::size_t node = m + enter_j; node != enter_i;) {
      path.push_back(static_cast<std::size_t>(via[node]));
      node = static_cast<std::size_t>(parent[node]);
    }
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < path.size(); k += 2)
      theta = std::min(theta, basis[path[k]].flow);
    std::size_t leave_cell = basis.size();
    std::size_t leave_idx = m * n;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const Cell& cell = basis[path[k]];
      if (cell.flow == theta) {
        const std::size_t idx = cell.i * n + cell.j;
        if (idx < leave_idx) {
          leave_idx = idx;
          leave_cell = path[k];
        }
      }
    }

    for (std::size_t k = 0; k < path.size(); ++k) {
      if (k % 2 == 0)
        basis[path[k]].flow -= theta;
      else
        basis[path[k]].flow += theta;
    }
    basis[leave_cell] = {enter_i, enter_j, theta};
  }

  Mat plan(m, n, 0.0);
  for (const Cell& cell : basis) plan(cell.i, cell.j) = std::max(cell.flow, 0.0);
  return plan;
}

}  // namespace catcoup

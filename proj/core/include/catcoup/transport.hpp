#pragma once

#include "catcoup/matrix.hpp"

namespace catcoup {

/// Exact solution of the transportation problem
///   min sum_{i,j} plan[i,j] * cost[i,j]
///   s.t. row sums = supply, column sums = demand, plan >= 0,
/// by the transportation simplex: northwest-corner start, spanning-tree basis,
/// cycle pivoting. Degenerate pivots are admitted and cycling is prevented by
/// Bland's rule (lowest-index entering and leaving cells).
///
/// supply and demand must have equal totals; cost must be finite.
Mat solve_transport(const Vec& supply, const Vec& demand, const Mat& cost);

double transport_objective(const Mat& plan, const Mat& cost);

}  // namespace catcoup

#include "catcoup/matrix.hpp"

namespace catcoup {

Mat transposed(const Mat& m) {
  Mat out(m.cols, m.rows);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out(c, r) = m(r, c);
  return out;
}

Vec row_sums(const Mat& m) {
  Vec out(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out[r] += m(r, c);
  return out;
}

Vec col_sums(const Mat& m) {
  Vec out(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += m(r, c);
  return out;
}

}  // namespace catcoup

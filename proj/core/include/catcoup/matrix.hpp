#pragma once

#include <cstddef>
#include <vector>

namespace catcoup {

using Vec = std::vector<double>;

/// Dense row-major matrix. All matrices in this library are small (K, Z of
/// order tens to a couple hundred), so no attempt at blocking or views.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::size_t size() const { return data.size(); }
};

Mat transposed(const Mat& m);
Vec row_sums(const Mat& m);
Vec col_sums(const Mat& m);

}  // namespace catcoup

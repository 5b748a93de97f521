#pragma once

#include <cstddef>
#include <vector>

#include "catcoup/matrix.hpp"

namespace catcoup::ad {

/// Handle into a Tape. Valid until the owning tape is reset.
struct Var {
  int id = -1;
};

/// Reverse-mode tape over vector/matrix-valued nodes. The op set is exactly
/// what the gadget computation graphs need (affine layers, nonlinearities,
/// Sinkhorn rescaling, the accept-reject correction, tempered softmax, and a
/// bilinear loss form). Ops execute eagerly; backward() replays the records
/// in reverse. Subgradients at max nodes route to the lowest achieving index.
class Tape {
 public:
  Var leaf(const Vec& v);                      // column vector
  Var leaf(const Mat& m);
  Var leaf_scalar(double x);

  const Vec& value(Var v) const { return nodes_[v.id].value; }
  const Vec& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t rows(Var v) const { return nodes_[v.id].rows; }
  std::size_t cols(Var v) const { return nodes_[v.id].cols; }
  double scalar(Var v) const { return nodes_[v.id].value[0]; }

  // --- dense layers ---
  Var affine(Var w, Var x, Var b);             // W x + b
  Var tanh_(Var v);
  Var relu(Var v);

  // --- elementwise ---
  Var softplus_shift(Var v, double shift);     // softplus(v) + shift
  Var log_(Var v);
  Var add(Var a, Var b);
  Var add_const(Var v, const Vec& c);          // same flat size
  Var scale(Var v, double k);

  // --- softmax family ---
  Var softmax_temp(Var v, double temperature);
  Var row_softmax(Var m);

  // --- shape/selection ---
  Var reshape(Var v, std::size_t r, std::size_t c);
  Var row(Var m, std::size_t i);

  // --- row/column arithmetic on matrices ---
  Var mul_rows_const(Var m, const Vec& r);     // row i scaled by r[i]
  Var div_rows_const(Var m, const Vec& r);
  Var mul_cols(Var m, Var c);                  // column j scaled by c[j]
  Var rescale_cols_to(Var m, const Vec& target);  // column j sums to target[j]
  Var rescale_rows_to(Var m, const Vec& target);
  Var col_sums_(Var m);
  Var rows_dot(Var m, Var c);                  // out[i] = sum_j m(i,j) c[j]
  Var outer_const(Var v, const Vec& c);        // out(i,j) = v[i] c[j]

  // --- reductions / scalars ---
  Var const_div(const Vec& num, Var den);      // num[i] / den[i]
  Var div_elem_const(Var v, const Vec& den);   // v[i] / den[i]
  Var max_all(Var v);
  Var div_scalar(Var v, Var s);
  Var one_minus_div_scalar(Var v, Var s);      // 1 - v[i]/s
  Var row_max(Var m);                          // per-row max
  Var bilinear_const(Var f1, const Mat& g, Var f2);
  Var mean_of(const std::vector<Var>& scalars);

  /// Seeds d(root)=1 and accumulates gradients into every node.
  void backward(Var root);

  /// Drops all nodes/records but keeps allocations for reuse.
  void reset();

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : unsigned char {
    Leaf, Affine, Tanh, Relu, SoftplusShift, Log, Add, AddConst, Scale,
    SoftmaxTemp, RowSoftmax, Reshape, Row, MulRowsConst, DivRowsConst,
    MulCols, RescaleColsTo, RescaleRowsTo, ColSums, RowsDot, OuterConst,
    ConstDiv, DivElemConst, MaxAll, DivScalar, OneMinusDivScalar, RowMax,
    BilinearConst, MeanOf,
  };

  struct Node {
    std::size_t rows = 0, cols = 0;
    Vec value;
    Vec grad;
  };

  struct Record {
    Op op;
    int out = -1;
    int a = -1;
    int b = -1;
    int c = -1;
    double x = 0.0;
    int aux_vec = -1;    // index into const_pool_
    int aux_mat = -1;    // index into mat_pool_
    int aux_idx = -1;    // index into index_pool_
  };

  Var make_node(std::size_t r, std::size_t c);
  int push_const(const Vec& v);
  int push_mat(const Mat& m);
  int push_indices(std::vector<std::size_t> idx);
  void backward_record(const Record& rec);

  std::vector<Node> nodes_;
  std::vector<Record> records_;
  std::vector<Vec> const_pool_;
  std::vector<Mat> mat_pool_;
  std::vector<std::vector<std::size_t>> index_pool_;
};

}  // namespace catcoup::ad

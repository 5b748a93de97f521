#include "catcoup/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace catcoup::ad {

namespace {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var Tape::make_node(std::size_t r, std::size_t c) {
  Node node;
  node.rows = r;
  node.cols = c;
  node.value.assign(r * c, 0.0);
  node.grad.assign(r * c, 0.0);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

int Tape::push_const(const Vec& v) {
  const_pool_.push_back(v);
  return static_cast<int>(const_pool_.size() - 1);
}

int Tape::push_mat(const Mat& m) {
  mat_pool_.push_back(m);
  return static_cast<int>(mat_pool_.size() - 1);
}

int Tape::push_indices(std::vector<std::size_t> idx) {
  index_pool_.push_back(std::move(idx));
  return static_cast<int>(index_pool_.size() - 1);
}

Var Tape::leaf(const Vec& v) {
  Var out = make_node(v.size(), 1);
  nodes_[out.id].value = v;
  records_.push_back({Op::Leaf, out.id});
  return out;
}

Var Tape::leaf(const Mat& m) {
  Var out = make_node(m.rows, m.cols);
  nodes_[out.id].value = m.data;
  records_.push_back({Op::Leaf, out.id});
  return out;
}

Var Tape::leaf_scalar(double x) {
  Var out = make_node(1, 1);
  nodes_[out.id].value[0] = x;
  records_.push_back({Op::Leaf, out.id});
  return out;
}

Var Tape::affine(Var w, Var x, Var b) {
  const Node& wn = nodes_[w.id];
  const Node& xn = nodes_[x.id];
  const Node& bn = nodes_[b.id];
  if (wn.cols != xn.value.size() || wn.rows != bn.value.size())
    throw std::invalid_argument("Tape::affine: shape mismatch");
  Var out = make_node(wn.rows, 1);
  Vec& o = nodes_[out.id].value;
  const Vec& wv = nodes_[w.id].value;
  const Vec& xv = nodes_[x.id].value;
  const Vec& bv = nodes_[b.id].value;
  const std::size_t rows = nodes_[w.id].rows, cols = nodes_[w.id].cols;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = bv[i];
    const double* wr = wv.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) s += wr[j] * xv[j];
    o[i] = s;
  }
  records_.push_back({Op::Affine, out.id, w.id, x.id, b.id});
  return out;
}

Var Tape::tanh_(Var v) {
  Var out = make_node(nodes_[v.id].rows, nodes_[v.id].cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[v.id].value;
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = std::tanh(in[i]);
  records_.push_back({Op::Tanh, out.id, v.id});
  return out;
}

Var Tape::relu(Var v) {
  Var out = make_node(nodes_[v.id].rows, nodes_[v.id].cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[v.id].value;
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
  records_.push_back({Op::Relu, out.id, v.id});
  return out;
}

Var Tape::softplus_shift(Var v, double shift) {
  Var out = make_node(nodes_[v.id].rows, nodes_[v.id].cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[v.id].value;
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = softplus(in[i]) + shift;
  records_.push_back({Op::SoftplusShift, out.id, v.id, -1, -1, shift});
  return out;
}

Var Tape::log_(Var v) {
  Var out = make_node(nodes_[v.id].rows, nodes_[v.id].cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[v.id].value;
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = std::log(in[i]);
  records_.push_back({Op::Log, out.id, v.id});
  return out;
}

Var Tape::add(Var a, Var b) {
  if (nodes_[a.id].value.size() != nodes_[b.id].value.size())
    throw std::invalid_argument("Tape::add: size mismatch");
  Var out = make_node(nodes_[a.id].rows, nodes_[a.id].cols);
  Vec& o = nodes_[out.id].value;
  const Vec& av = nodes_[a.id].value;
  const Vec& bv = nodes_[b.id].value;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  records_.push_back({Op::Add, out.id, a.id, b.id});
  return out;
}

Var Tape::add_const(Var v, const Vec& c) {
  if (nodes_[v.id].value.size() != c.size())
    throw std::invalid_argument("Tape::add_const: size mismatch");
  Var out = make_node(nodes_[v.id].rows, nodes_[v.id].cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[v.id].value;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] + c[i];
  records_.push_back({Op::AddConst, out.id, v.id});
  return out;
}

Var Tape::scale(Var v, double k) {
  Var out = make_node(nodes_[v.id].rows, nodes_[v.id].cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[v.id].value;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = k * in[i];
  records_.push_back({Op::Scale, out.id, v.id, -1, -1, k});
  return out;
}

Var Tape::softmax_temp(Var v, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("Tape::softmax_temp: temperature <= 0");
  Var out = make_node(nodes_[v.id].rows, nodes_[v.id].cols);
  const Vec& in = nodes_[v.id].value;
  Vec& o = nodes_[out.id].value;
  double m = in[0];
  for (double x : in) m = std::max(m, x);
  double z = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    o[i] = std::exp((in[i] - m) / temperature);
    z += o[i];
  }
  for (double& x : o) x /= z;
  records_.push_back({Op::SoftmaxTemp, out.id, v.id, -1, -1, temperature});
  return out;
}

Var Tape::row_softmax(Var m) {
  const Node& mn = nodes_[m.id];
  Var out = make_node(mn.rows, mn.cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[m.id].value;
  const std::size_t rows = nodes_[m.id].rows, cols = nodes_[m.id].cols;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = in.data() + r * cols;
    double* dst = o.data() + r * cols;
    double mx = src[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, src[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      dst[c] = std::exp(src[c] - mx);
      z += dst[c];
    }
    for (std::size_t c = 0; c < cols; ++c) dst[c] /= z;
  }
  records_.push_back({Op::RowSoftmax, out.id, m.id});
  return out;
}

Var Tape::reshape(Var v, std::size_t r, std::size_t c) {
  if (nodes_[v.id].value.size() != r * c)
    throw std::invalid_argument("Tape::reshape: size mismatch");
  Var out = make_node(r, c);
  nodes_[out.id].value = nodes_[v.id].value;
  records_.push_back({Op::Reshape, out.id, v.id});
  return out;
}

Var Tape::row(Var m, std::size_t i) {
  const std::size_t rows = nodes_[m.id].rows, cols = nodes_[m.id].cols;
  if (i >= rows) throw std::invalid_argument("Tape::row: index out of range");
  Var out = make_node(cols, 1);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[m.id].value;
  for (std::size_t c = 0; c < cols; ++c) o[c] = in[i * cols + c];
  records_.push_back({Op::Row, out.id, m.id, -1, -1, 0.0, -1, -1,
                      push_indices({i})});
  return out;
}

Var Tape::mul_rows_const(Var m, const Vec& r) {
  const std::size_t rows = nodes_[m.id].rows, cols = nodes_[m.id].cols;
  if (r.size() != rows) throw std::invalid_argument("Tape::mul_rows_const: size mismatch");
  Var out = make_node(rows, cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[m.id].value;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) o[i * cols + j] = in[i * cols + j] * r[i];
  records_.push_back({Op::MulRowsConst, out.id, m.id, -1, -1, 0.0, push_const(r)});
  return out;
}

Var Tape::div_rows_const(Var m, const Vec& r) {
  const std::size_t rows = nodes_[m.id].rows, cols = nodes_[m.id].cols;
  if (r.size() != rows) throw std::invalid_argument("Tape::div_rows_const: size mismatch");
  Var out = make_node(rows, cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[m.id].value;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) o[i * cols + j] = in[i * cols + j] / r[i];
  records_.push_back({Op::DivRowsConst, out.id, m.id, -1, -1, 0.0, push_const(r)});
  return out;
}

Var Tape::mul_cols(Var m, Var c) {
  const std::size_t rows = nodes_[m.id].rows, cols = nodes_[m.id].cols;
  if (nodes_[c.id].value.size() != cols)
    throw std::invalid_argument("Tape::mul_cols: size mismatch");
  Var out = make_node(rows, cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[m.id].value;
  const Vec& cv = nodes_[c.id].value;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) o[i * cols + j] = in[i * cols + j] * cv[j];
  records_.push_back({Op::MulCols, out.id, m.id, c.id});
  return out;
}

Var Tape::rescale_cols_to(Var m, const Vec& target) {
  const std::size_t rows = nodes_[m.id].rows, cols = nodes_[m.id].cols;
  if (target.size() != cols)
    throw std::invalid_argument("Tape::rescale_cols_to: size mismatch");
  Var out = make_node(rows, cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[m.id].value;
  Vec sums(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) sums[j] += in[i * cols + j];
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      o[i * cols + j] = in[i * cols + j] * target[j] / sums[j];
  records_.push_back({Op::RescaleColsTo, out.id, m.id, -1, -1, 0.0, push_const(target)});
  return out;
}

Var Tape::rescale_rows_to(Var m, const Vec& target) {
  const std::size_t rows = nodes_[m.id].rows, cols = nodes_[m.id].cols;
  if (target.size() != rows)
    throw std::invalid_argument("Tape::rescale_rows_to: size mismatch");
  Var out = make_node(rows, cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[m.id].value;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += in[i * cols + j];
    for (std::size_t j = 0; j < cols; ++j) o[i * cols + j] = in[i * cols + j] * target[i] / s;
  }
  records_.push_back({Op::RescaleRowsTo, out.id, m.id, -1, -1, 0.0, push_const(target)});
  return out;
}

Var Tape::col_sums_(Var m) {
  const std::size_t rows = nodes_[m.id].rows, cols = nodes_[m.id].cols;
  Var out = make_node(cols, 1);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[m.id].value;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) o[j] += in[i * cols + j];
  records_.push_back({Op::ColSums, out.id, m.id});
  return out;
}

Var Tape::rows_dot(Var m, Var c) {
  const std::size_t rows = nodes_[m.id].rows, cols = nodes_[m.id].cols;
  if (nodes_[c.id].value.size() != cols)
    throw std::invalid_argument("Tape::rows_dot: size mismatch");
  Var out = make_node(rows, 1);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[m.id].value;
  const Vec& cv = nodes_[c.id].value;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += in[i * cols + j] * cv[j];
    o[i] = s;
  }
  records_.push_back({Op::RowsDot, out.id, m.id, c.id});
  return out;
}

Var Tape::outer_const(Var v, const Vec& c) {
  const std::size_t rows = nodes_[v.id].value.size();
  Var out = make_node(rows, c.size());
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[v.id].value;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < c.size(); ++j) o[i * c.size() + j] = in[i] * c[j];
  records_.push_back({Op::OuterConst, out.id, v.id, -1, -1, 0.0, push_const(c)});
  return out;
}

Var Tape::const_div(const Vec& num, Var den) {
  if (nodes_[den.id].value.size() != num.size())
    throw std::invalid_argument("Tape::const_div: size mismatch");
  Var out = make_node(num.size(), 1);
  Vec& o = nodes_[out.id].value;
  const Vec& dv = nodes_[den.id].value;
  for (std::size_t i = 0; i < num.size(); ++i) o[i] = num[i] / dv[i];
  records_.push_back({Op::ConstDiv, out.id, den.id, -1, -1, 0.0, push_const(num)});
  return out;
}

Var Tape::div_elem_const(Var v, const Vec& den) {
  if (nodes_[v.id].value.size() != den.size())
    throw std::invalid_argument("Tape::div_elem_const: size mismatch");
  Var out = make_node(nodes_[v.id].rows, nodes_[v.id].cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[v.id].value;
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] / den[i];
  records_.push_back({Op::DivElemConst, out.id, v.id, -1, -1, 0.0, push_const(den)});
  return out;
}

Var Tape::max_all(Var v) {
  std::size_t arg = 0;
  double best;
  {
    const Vec& in = nodes_[v.id].value;
    best = in[0];
    for (std::size_t i = 1; i < in.size(); ++i)
      if (in[i] > best) {
        best = in[i];
        arg = i;
      }
  }
  Var out = make_node(1, 1);
  nodes_[out.id].value[0] = best;
  records_.push_back({Op::MaxAll, out.id, v.id, -1, -1, 0.0, -1, -1, push_indices({arg})});
  return out;
}

Var Tape::div_scalar(Var v, Var s) {
  Var out = make_node(nodes_[v.id].rows, nodes_[v.id].cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[v.id].value;
  const double sv = nodes_[s.id].value[0];
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] / sv;
  records_.push_back({Op::DivScalar, out.id, v.id, s.id});
  return out;
}

Var Tape::one_minus_div_scalar(Var v, Var s) {
  Var out = make_node(nodes_[v.id].rows, nodes_[v.id].cols);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[v.id].value;
  const double sv = nodes_[s.id].value[0];
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = 1.0 - in[i] / sv;
  records_.push_back({Op::OneMinusDivScalar, out.id, v.id, s.id});
  return out;
}

Var Tape::row_max(Var m) {
  const std::size_t rows = nodes_[m.id].rows, cols = nodes_[m.id].cols;
  Var out = make_node(rows, 1);
  Vec& o = nodes_[out.id].value;
  const Vec& in = nodes_[m.id].value;
  std::vector<std::size_t> args(rows, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* src = in.data() + i * cols;
    std::size_t arg = 0;
    for (std::size_t j = 1; j < cols; ++j)
      if (src[j] > src[arg]) arg = j;
    args[i] = arg;
    o[i] = src[arg];
  }
  records_.push_back({Op::RowMax, out.id, m.id, -1, -1, 0.0, -1, -1,
                      push_indices(std::move(args))});
  return out;
}

Var Tape::bilinear_const(Var f1, const Mat& g, Var f2) {
  const Vec& a = nodes_[f1.id].value;
  const Vec& b = nodes_[f2.id].value;
  if (g.rows != a.size() || g.cols != b.size())
    throw std::invalid_argument("Tape::bilinear_const: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < g.rows; ++i) {
    const double* gr = g.data.data() + i * g.cols;
    double t = 0.0;
    for (std::size_t j = 0; j < g.cols; ++j) t += gr[j] * b[j];
    s += a[i] * t;
  }
  Var out = make_node(1, 1);
  nodes_[out.id].value[0] = s;
  records_.push_back({Op::BilinearConst, out.id, f1.id, f2.id, -1, 0.0, -1, push_mat(g)});
  return out;
}

Var Tape::mean_of(const std::vector<Var>& scalars) {
  if (scalars.empty()) throw std::invalid_argument("Tape::mean_of: empty list");
  double s = 0.0;
  std::vector<std::size_t> ids;
  ids.reserve(scalars.size());
  for (Var v : scalars) {
    s += nodes_[v.id].value[0];
    ids.push_back(static_cast<std::size_t>(v.id));
  }
  Var out = make_node(1, 1);
  nodes_[out.id].value[0] = s / static_cast<double>(scalars.size());
  records_.push_back({Op::MeanOf, out.id, -1, -1, -1, 0.0, -1, -1,
                      push_indices(std::move(ids))});
  return out;
}

void Tape::backward(Var root) {
  if (nodes_[root.id].value.size() != 1)
    throw std::invalid_argument("Tape::backward: root must be scalar");
  nodes_[root.id].grad[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) backward_record(*it);
}

void Tape::backward_record(const Record& rec) {
  Node& out = nodes_[rec.out];
  const Vec& go = out.grad;
  switch (rec.op) {
    case Op::Leaf:
      break;
    case Op::Affine: {
      Node& w = nodes_[rec.a];
      Node& x = nodes_[rec.b];
      Node& b = nodes_[rec.c];
      const std::size_t rows = w.rows, cols = w.cols;
      for (std::size_t i = 0; i < rows; ++i) {
        const double gi = go[i];
        if (gi == 0.0) continue;
        double* wg = w.grad.data() + i * cols;
        const double* wv = w.value.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) {
          wg[j] += gi * x.value[j];
          x.grad[j] += gi * wv[j];
        }
        b.grad[i] += gi;
      }
      break;
    }
    case Op::Tanh: {
      Node& v = nodes_[rec.a];
      for (std::size_t i = 0; i < go.size(); ++i)
        v.grad[i] += go[i] * (1.0 - out.value[i] * out.value[i]);
      break;
    }
    case Op::Relu: {
      Node& v = nodes_[rec.a];
      for (std::size_t i = 0; i < go.size(); ++i)
        if (v.value[i] > 0.0) v.grad[i] += go[i];
      break;
    }
    case Op::SoftplusShift: {
      Node& v = nodes_[rec.a];
      for (std::size_t i = 0; i < go.size(); ++i) v.grad[i] += go[i] * sigmoid(v.value[i]);
      break;
    }
    case Op::Log: {
      Node& v = nodes_[rec.a];
      for (std::size_t i = 0; i < go.size(); ++i) v.grad[i] += go[i] / v.value[i];
      break;
    }
    case Op::Add: {
      Node& a = nodes_[rec.a];
      Node& b = nodes_[rec.b];
      for (std::size_t i = 0; i < go.size(); ++i) {
        a.grad[i] += go[i];
        b.grad[i] += go[i];
      }
      break;
    }
    case Op::AddConst:
    case Op::Reshape: {
      Node& v = nodes_[rec.a];
      for (std::size_t i = 0; i < go.size(); ++i) v.grad[i] += go[i];
      break;
    }
    case Op::Scale: {
      Node& v = nodes_[rec.a];
      for (std::size_t i = 0; i < go.size(); ++i) v.grad[i] += rec.x * go[i];
      break;
    }
    case Op::SoftmaxTemp: {
      Node& v = nodes_[rec.a];
      double dot = 0.0;
      for (std::size_t i = 0; i < go.size(); ++i) dot += go[i] * out.value[i];
      for (std::size_t i = 0; i < go.size(); ++i)
        v.grad[i] += out.value[i] * (go[i] - dot) / rec.x;
      break;
    }
    case Op::RowSoftmax: {
      Node& v = nodes_[rec.a];
      const std::size_t rows = out.rows, cols = out.cols;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* ov = out.value.data() + r * cols;
        const double* og = go.data() + r * cols;
        double* vg = v.grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += og[c] * ov[c];
        for (std::size_t c = 0; c < cols; ++c) vg[c] += ov[c] * (og[c] - dot);
      }
      break;
    }
    case Op::Row: {
      Node& m = nodes_[rec.a];
      const std::size_t i = index_pool_[rec.aux_idx][0];
      const std::size_t cols = m.cols;
      for (std::size_t c = 0; c < cols; ++c) m.grad[i * cols + c] += go[c];
      break;
    }
    case Op::MulRowsConst: {
      Node& m = nodes_[rec.a];
      const Vec& r = const_pool_[rec.aux_vec];
      const std::size_t cols = m.cols;
      for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m.grad[i * cols + j] += go[i * cols + j] * r[i];
      break;
    }
    case Op::DivRowsConst: {
      Node& m = nodes_[rec.a];
      const Vec& r = const_pool_[rec.aux_vec];
      const std::size_t cols = m.cols;
      for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m.grad[i * cols + j] += go[i * cols + j] / r[i];
      break;
    }
    case Op::MulCols: {
      Node& m = nodes_[rec.a];
      Node& c = nodes_[rec.b];
      const std::size_t cols = m.cols;
      for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
          m.grad[i * cols + j] += go[i * cols + j] * c.value[j];
          c.grad[j] += go[i * cols + j] * m.value[i * cols + j];
        }
      break;
    }
    case Op::RescaleColsTo: {
      Node& m = nodes_[rec.a];
      const Vec& t = const_pool_[rec.aux_vec];
      const std::size_t rows = m.rows, cols = m.cols;
      for (std::size_t j = 0; j < cols; ++j) {
        double s = 0.0, dot = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          s += m.value[i * cols + j];
          dot += go[i * cols + j] * m.value[i * cols + j];
        }
        const double k = t[j] / s;
        for (std::size_t i = 0; i < rows; ++i)
          m.grad[i * cols + j] += k * (go[i * cols + j] - dot / s);
      }
      break;
    }
    case Op::RescaleRowsTo: {
      Node& m = nodes_[rec.a];
      const Vec& t = const_pool_[rec.aux_vec];
      const std::size_t rows = m.rows, cols = m.cols;
      for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0, dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          s += m.value[i * cols + j];
          dot += go[i * cols + j] * m.value[i * cols + j];
        }
        const double k = t[i] / s;
        for (std::size_t j = 0; j < cols; ++j)
          m.grad[i * cols + j] += k * (go[i * cols + j] - dot / s);
      }
      break;
    }
    case Op::ColSums: {
      Node& m = nodes_[rec.a];
      const std::size_t cols = m.cols;
      for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m.grad[i * cols + j] += go[j];
      break;
    }
    case Op::RowsDot: {
      Node& m = nodes_[rec.a];
      Node& c = nodes_[rec.b];
      const std::size_t cols = m.cols;
      for (std::size_t i = 0; i < m.rows; ++i) {
        const double gi = go[i];
        if (gi == 0.0) continue;
        for (std::size_t j = 0; j < cols; ++j) {
          m.grad[i * cols + j] += gi * c.value[j];
          c.grad[j] += gi * m.value[i * cols + j];
        }
      }
      break;
    }
    case Op::OuterConst: {
      Node& v = nodes_[rec.a];
      const Vec& c = const_pool_[rec.aux_vec];
      const std::size_t cols = c.size();
      for (std::size_t i = 0; i < v.value.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += go[i * cols + j] * c[j];
        v.grad[i] += s;
      }
      break;
    }
    case Op::ConstDiv: {
      Node& den = nodes_[rec.a];
      const Vec& num = const_pool_[rec.aux_vec];
      for (std::size_t i = 0; i < go.size(); ++i)
        den.grad[i] -= go[i] * num[i] / (den.value[i] * den.value[i]);
      break;
    }
    case Op::DivElemConst: {
      Node& v = nodes_[rec.a];
      const Vec& den = const_pool_[rec.aux_vec];
      for (std::size_t i = 0; i < go.size(); ++i) v.grad[i] += go[i] / den[i];
      break;
    }
    case Op::MaxAll: {
      Node& v = nodes_[rec.a];
      v.grad[index_pool_[rec.aux_idx][0]] += go[0];
      break;
    }
    case Op::DivScalar: {
      Node& v = nodes_[rec.a];
      Node& s = nodes_[rec.b];
      const double sv = s.value[0];
      double dot = 0.0;
      for (std::size_t i = 0; i < go.size(); ++i) {
        v.grad[i] += go[i] / sv;
        dot += go[i] * v.value[i];
      }
      s.grad[0] -= dot / (sv * sv);
      break;
    }
    case Op::OneMinusDivScalar: {
      Node& v = nodes_[rec.a];
      Node& s = nodes_[rec.b];
      const double sv = s.value[0];
      double dot = 0.0;
      for (std::size_t i = 0; i < go.size(); ++i) {
        v.grad[i] -= go[i] / sv;
        dot += go[i] * v.value[i];
      }
      s.grad[0] += dot / (sv * sv);
      break;
    }
    case Op::RowMax: {
      Node& m = nodes_[rec.a];
      const auto& args = index_pool_[rec.aux_idx];
      const std::size_t cols = m.cols;
      for (std::size_t i = 0; i < args.size(); ++i) m.grad[i * cols + args[i]] += go[i];
      break;
    }
    case Op::BilinearConst: {
      Node& f1 = nodes_[rec.a];
      Node& f2 = nodes_[rec.b];
      const Mat& g = mat_pool_[rec.aux_mat];
      const double gs = go[0];
      for (std::size_t i = 0; i < g.rows; ++i) {
        const double* gr = g.data.data() + i * g.cols;
        double t = 0.0;
        for (std::size_t j = 0; j < g.cols; ++j) {
          t += gr[j] * f2.value[j];
          f2.grad[j] += gs * gr[j] * f1.value[i];
        }
        f1.grad[i] += gs * t;
      }
      break;
    }
    case Op::MeanOf: {
      const auto& ids = index_pool_[rec.aux_idx];
      const double k = go[0] / static_cast<double>(ids.size());
      for (std::size_t id : ids) nodes_[id].grad[0] += k;
      break;
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  records_.clear();
  const_pool_.clear();
  mat_pool_.clear();
  index_pool_.clear();
}

}  // namespace catcoup::ad

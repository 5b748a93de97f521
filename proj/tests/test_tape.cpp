#include <doctest.h>

#include <cmath>
#include <functional>

#include "catcoup/numeric.hpp"
#include "catcoup/tape.hpp"
#include "support/stats.hpp"

using namespace catcoup;
using ad::Tape;
using ad::Var;

namespace {

// Central finite differences on a scalar function of a flat input vector,
// compared entrywise against the tape gradient.
void check_gradient(const std::function<Var(Tape&, Var)>& build, const Vec& input,
                    std::size_t rows, std::size_t cols, double step = 1e-6,
                    double tol = 1e-6) {
  Tape tape;
  Var leaf = (cols == 1) ? tape.leaf(input) : [&] {
    Mat m(rows, cols);
    m.data = input;
    return tape.leaf(m);
  }();
  Var out = build(tape, leaf);
  REQUIRE(tape.value(out).size() == 1);
  tape.backward(out);
  const Vec analytic = tape.grad(leaf);

  for (std::size_t i = 0; i < input.size(); ++i) {
    auto eval = [&](double delta) {
      Vec perturbed = input;
      perturbed[i] += delta;
      Tape t2;
      Var leaf2 = (cols == 1) ? t2.leaf(perturbed) : [&] {
        Mat m(rows, cols);
        m.data = perturbed;
        return t2.leaf(m);
      }();
      return t2.scalar(build(t2, leaf2));
    };
    const double numeric = (eval(step) - eval(-step)) / (2.0 * step);
    CHECK(std::abs(numeric - analytic[i]) <=
          tol * std::max({1.0, std::abs(numeric), std::abs(analytic[i])}));
  }
}

Mat random_mat(std::size_t r, std::size_t c, Rng& rng) {
  Mat m(r, c);
  for (double& x : m.data) x = rng.normal();
  return m;
}

}  // namespace

TEST_SUITE("tape") {

TEST_CASE("forward values match plain evaluation") {
  Tape tape;
  Rng rng(1);
  const Vec l = testsupport::random_logits(5, rng);
  const Var v = tape.leaf(l);
  const Var soft = tape.softmax_temp(v, 1.0);
  const Vec expected = softmax(l);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(tape.value(soft)[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("elementwise and reduction ops differentiate correctly") {
  Rng rng(2);
  const Vec v = testsupport::random_logits(6, rng);
  const Vec c = testsupport::random_logits(6, rng);
  Vec positive(6);
  for (int i = 0; i < 6; ++i) positive[i] = 0.5 + std::abs(v[i]);

  check_gradient([](Tape& t, Var x) { return t.max_all(t.tanh_(x)); }, v, 6, 1);
  check_gradient([&](Tape& t, Var x) { return t.max_all(t.softplus_shift(x, 1e-6)); }, v, 6, 1);
  check_gradient([&](Tape& t, Var x) { return t.max_all(t.log_(x)); }, positive, 6, 1);
  check_gradient([&](Tape& t, Var x) { return t.max_all(t.add_const(t.scale(x, 1.7), c)); }, v,
                 6, 1);
  check_gradient([&](Tape& t, Var x) { return t.max_all(t.softmax_temp(x, 0.6)); }, v, 6, 1);
  Vec numerator(6);
  for (int i = 0; i < 6; ++i) numerator[i] = 0.3 + std::abs(c[i]);
  check_gradient([&](Tape& t, Var x) { return t.max_all(t.const_div(numerator, x)); }, positive,
                 6, 1);
  check_gradient([&](Tape& t, Var x) { return t.max_all(t.div_elem_const(x, positive)); }, v, 6,
                 1);
  check_gradient(
      [&](Tape& t, Var x) {
        const Var s = t.max_all(x);
        return t.max_all(t.one_minus_div_scalar(t.div_scalar(x, s), s));
      },
      positive, 6, 1);
}

TEST_CASE("matrix ops differentiate correctly") {
  Rng rng(3);
  const Mat m = random_mat(3, 4, rng);
  Vec positive = m.data;
  for (double& x : positive) x = 0.4 + std::abs(x);
  const Vec rows3 = testsupport::random_logits(3, rng);
  Vec prior{0.5, 0.3, 0.2};
  Vec target{0.1, 0.2, 0.3, 0.4};
  Mat g = random_mat(4, 4, rng);

  check_gradient([&](Tape& t, Var x) { return t.max_all(t.row_softmax(x)); }, m.data, 3, 4);
  check_gradient([&](Tape& t, Var x) { return t.max_all(t.mul_rows_const(x, rows3)); }, m.data,
                 3, 4);
  check_gradient([&](Tape& t, Var x) { return t.max_all(t.div_rows_const(x, prior)); }, m.data,
                 3, 4);
  check_gradient([&](Tape& t, Var x) { return t.max_all(t.col_sums_(x)); }, m.data, 3, 4);
  check_gradient([&](Tape& t, Var x) { return t.max_all(t.row(x, 1)); }, m.data, 3, 4);
  check_gradient([&](Tape& t, Var x) { return t.max_all(t.row_max(x)); }, m.data, 3, 4);
  check_gradient([&](Tape& t, Var x) { return t.max_all(t.rescale_cols_to(x, target)); },
                 positive, 3, 4);
  check_gradient([&](Tape& t, Var x) { return t.max_all(t.rescale_rows_to(x, prior)); },
                 positive, 3, 4);
  check_gradient(
      [&](Tape& t, Var x) {
        const Var c = t.col_sums_(x);
        return t.max_all(t.rows_dot(x, c));
      },
      positive, 3, 4);
  check_gradient(
      [&](Tape& t, Var x) {
        const Var f = t.softmax_temp(t.row(x, 0), 1.0);
        return t.bilinear_const(f, g, t.softmax_temp(t.row(x, 2), 1.3));
      },
      m.data, 3, 4);
  check_gradient(
      [&](Tape& t, Var x) {
        const Var c = t.col_sums_(x);
        return t.max_all(t.mul_cols(x, c));
      },
      positive, 3, 4);
  check_gradient(
      [&](Tape& t, Var x) { return t.max_all(t.outer_const(t.col_sums_(x), prior)); },
      positive, 3, 4);
}

TEST_CASE("affine layers differentiate with respect to weights, bias and input") {
  Rng rng(4);
  const Mat w = random_mat(3, 4, rng);
  const Vec x = testsupport::random_logits(4, rng);
  const Vec b = testsupport::random_logits(3, rng);

  // d/dW
  check_gradient(
      [&](Tape& t, Var wv) {
        return t.max_all(t.tanh_(t.affine(wv, t.leaf(x), t.leaf(b))));
      },
      w.data, 3, 4);
  // d/dx
  check_gradient(
      [&](Tape& t, Var xv) {
        return t.max_all(t.tanh_(t.affine(t.leaf(w), xv, t.leaf(b))));
      },
      x, 4, 1);
  // d/db
  check_gradient(
      [&](Tape& t, Var bv) {
        return t.max_all(t.tanh_(t.affine(t.leaf(w), t.leaf(x), bv)));
      },
      b, 3, 1);
}

TEST_CASE("mean over scalars distributes the seed gradient") {
  Tape tape;
  const Var a = tape.leaf_scalar(2.0);
  const Var b = tape.leaf_scalar(4.0);
  const Var m = tape.mean_of({a, b});
  CHECK(tape.scalar(m) == doctest::Approx(3.0));
  tape.backward(m);
  CHECK(tape.grad(a)[0] == doctest::Approx(0.5));
  CHECK(tape.grad(b)[0] == doctest::Approx(0.5));
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  Tape tape;
  const Var x = tape.leaf(Vec{1.5, -0.5});
  const Var y = tape.add(x, x);
  const Var z = tape.max_all(y);
  tape.backward(z);
  CHECK(tape.grad(x)[0] == doctest::Approx(2.0));
  CHECK(tape.grad(x)[1] == doctest::Approx(0.0));
}

}  // TEST_SUITE

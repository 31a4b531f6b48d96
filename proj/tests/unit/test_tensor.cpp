#include <doctest.h>

#include <cmath>
#include <memory>

#include "helpers.hpp"
#include "uhgr/tensor.hpp"

using namespace uhgr;
using ad::Tape;
using ad::Var;
using testutil::random_matrix;

namespace {

// Σ (f(params) ∘ R) for a fixed random R, so every output entry matters.
double check_op(std::vector<Parameter*> params, const std::function<Var(Tape&)>& op,
                std::uint64_t seed = 1) {
  Rng rng(seed);
  Matrix weights;
  auto build = [&](Tape& t) {
    Var out = op(t);
    if (weights.size() == 0) weights = random_matrix(out.rows(), out.cols(), rng);
    return ad::sum(ad::hadamard(out, t.constant(weights)));
  };
  return ad::gradient_check(build, params).max_rel_error;
}

}  // namespace

TEST_CASE("matmul values") {
  Tape t;
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  Matrix b(2, 1);
  b << 1, 1;
  Var c = ad::matmul(t.constant(a), t.constant(b));
  CHECK(c.value()(0, 0) == 3.0);
  CHECK(c.value()(1, 0) == 7.0);

  Rng rng(3);
  Matrix m = random_matrix(3, 4, rng);
  Var id = ad::matmul(t.constant(Matrix::Identity(3, 3)), t.constant(m));
  CHECK(testutil::max_abs(id.value() - m) == 0.0);
  CHECK_THROWS_AS(ad::matmul(t.constant(a), t.constant(m)), ShapeError);
}

TEST_CASE("matmul gradient 5x4 by 4x3") {
  Rng rng(11);
  Parameter a("a", random_matrix(5, 4, rng));
  Parameter b("b", random_matrix(4, 3, rng));
  CHECK(check_op({&a, &b}, [&](Tape& t) { return ad::matmul(t.param(a), t.param(b)); }) <= 1e-6);
  CHECK(check_op({&a, &b}, [&](Tape& t) { return ad::matmul_tn(t.param(a), t.param(a)); }) <= 1e-6);
  CHECK(check_op({&a, &b}, [&](Tape& t) { return ad::matmul_nt(t.param(b), t.param(b)); }) <= 1e-6);
}

TEST_CASE("sparse product matches dense and differentiates the dense side") {
  Rng rng(5);
  Matrix dense = random_matrix(6, 6, rng);
  dense = dense.unaryExpr([](double v) { return v > 0.3 ? v : 0.0; });
  auto sp = std::make_shared<const SparseMatrix>(testutil::to_sparse(dense));
  Parameter h("h", random_matrix(6, 3, rng));
  Tape t;
  Var out = ad::spmm(sp, t.param(h));
  CHECK(testutil::max_abs(out.value() - dense * h.value) < 1e-14);
  CHECK(check_op({&h}, [&](Tape& tp) { return ad::spmm(sp, tp.param(h)); }) <= 1e-6);
}

TEST_CASE("row_softmax examples") {
  Tape t;
  Matrix z = Matrix::Zero(1, 3);
  Var u = ad::row_softmax(t.constant(z));
  for (int j = 0; j < 3; ++j) CHECK(u.value()(0, j) == doctest::Approx(1.0 / 3.0));

  Var single = ad::row_softmax(t.constant(Matrix::Constant(1, 1, 42.0)));
  CHECK(single.value()(0, 0) == 1.0);

  Matrix r(1, 3);
  r << 1, 2, 3;
  Var s = ad::row_softmax(t.constant(r));
  const double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(s.value()(0, 0) == doctest::Approx(std::exp(1.0) / denom).epsilon(1e-12));
  CHECK(s.value()(0, 0) == doctest::Approx(0.0900).epsilon(1e-3));
  CHECK(s.value()(0, 1) == doctest::Approx(0.2447).epsilon(1e-3));
  CHECK(s.value()(0, 2) == doctest::Approx(0.6652).epsilon(1e-3));
}

TEST_CASE("masked row_softmax zeroes masked entries and rejects empty rows") {
  Rng rng(2);
  Matrix logits = random_matrix(4, 4, rng, -3, 3);
  Matrix mask(4, 4);
  mask << 1, 1, 0, 0, 0, 1, 1, 0, 1, 0, 1, 1, 0, 0, 0, 1;
  Tape t;
  Var p = ad::row_softmax(t.constant(logits), &mask);
  for (int i = 0; i < 4; ++i) {
    CHECK(p.value().row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int j = 0; j < 4; ++j) {
      if (mask(i, j) == 0.0) CHECK(p.value()(i, j) == 0.0);
    }
  }
  Matrix empty_row = mask;
  empty_row.row(3).setZero();
  CHECK_THROWS(ad::row_softmax(t.constant(logits), &empty_row));

  Parameter w("w", logits);
  CHECK(check_op({&w}, [&](Tape& tp) { return ad::row_softmax(tp.param(w), &mask); }) <= 1e-6);
}

TEST_CASE("prelu examples and slope gradient") {
  Tape t;
  Matrix x(1, 3);
  x << 1.0, 2.0, 3.0;
  Var pos = ad::prelu(t.constant(x), t.constant(Matrix::Constant(1, 1, 0.25)));
  CHECK(testutil::max_abs(pos.value() - x) == 0.0);

  Matrix y(1, 2);
  y << -2.0, 3.0;
  Var relu = ad::prelu(t.constant(y), t.constant(Matrix::Zero(1, 1)));
  CHECK(relu.value()(0, 0) == 0.0);
  CHECK(relu.value()(0, 1) == 3.0);
  Var leak = ad::prelu(t.constant(y), t.constant(Matrix::Constant(1, 1, 0.25)));
  CHECK(leak.value()(0, 0) == -0.5);

  Rng rng(8);
  Parameter m("m", random_matrix(4, 3, rng));
  Parameter slope("slope", Matrix::Constant(1, 1, 0.25));
  CHECK(check_op({&m, &slope}, [&](Tape& tp) { return ad::prelu(tp.param(m), tp.param(slope)); }) <= 1e-6);

  // Slope gradient is the sum of g·x over the negative branch.
  Tape t2;
  Var out = ad::prelu(t2.param(m), t2.param(slope));
  slope.zero_grad();
  m.zero_grad();
  t2.backward(ad::sum(out));
  double neg_sum = 0.0;
  for (Eigen::Index i = 0; i < m.value.size(); ++i) neg_sum += std::min(m.value.data()[i], 0.0);
  CHECK(slope.grad(0, 0) == doctest::Approx(neg_sum).epsilon(1e-12));
}

TEST_CASE("sigmoid values") {
  Tape t;
  Matrix x(1, 4);
  x << 0.0, 50.0, -50.0, 1.0;
  Var s = ad::sigmoid(t.constant(x));
  CHECK(s.value()(0, 0) == 0.5);
  CHECK(std::abs(s.value()(0, 1) - 1.0) < 1e-9);
  CHECK(std::abs(s.value()(0, 2)) < 1e-9);
  CHECK(s.value()(0, 3) == doctest::Approx(0.7311).epsilon(1e-4));
  Matrix big(1, 2);
  big << 1e6, -1e6;
  Var b = ad::sigmoid(t.constant(big));
  CHECK(b.value().allFinite());
}

TEST_CASE("batch norm examples") {
  Matrix rm, rv;
  SUBCASE("standardised column is a fixed point") {
    Matrix x(4, 1);
    const double a = std::sqrt(1.0);
    x << -a, a, -a, a;  // mean 0, biased variance 1
    Tape t;
    Var y = ad::batch_norm(t.constant(x), t.constant(Matrix::Ones(1, 1)), t.constant(Matrix::Zero(1, 1)), rm,
                           rv, ad::Mode::kTrain);
    CHECK(testutil::max_abs(y.value() - x) < 1e-5);
  }
  SUBCASE("gamma zero yields beta") {
    Rng rng(1);
    Tape t;
    Var y = ad::batch_norm(t.constant(random_matrix(5, 3, rng)), t.constant(Matrix::Zero(1, 3)),
                           t.constant(Matrix::Constant(1, 3, 5.0)), rm, rv, ad::Mode::kTrain);
    CHECK(testutil::max_abs(y.value().array() - 5.0) == 0.0);
  }
  SUBCASE("two-row column") {
    Matrix x(2, 1);
    x << 0.0, 2.0;
    Tape t;
    Var y = ad::batch_norm(t.constant(x), t.constant(Matrix::Ones(1, 1)), t.constant(Matrix::Zero(1, 1)), rm,
                           rv, ad::Mode::kTrain);
    const double k = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y.value()(0, 0) == doctest::Approx(-k).epsilon(1e-12));
    CHECK(y.value()(1, 0) == doctest::Approx(k).epsilon(1e-12));
    // Running stats: mean 0.1·1, var 0.9·1 + 0.1·2 (unbiased var of [0,2] is 2).
    CHECK(rm(0, 0) == doctest::Approx(0.1));
    CHECK(rv(0, 0) == doctest::Approx(1.1));
  }
  SUBCASE("single row in train mode is finite") {
    Tape t;
    Var y = ad::batch_norm(t.constant(Matrix::Constant(1, 2, 3.0)), t.constant(Matrix::Ones(1, 2)),
                           t.constant(Matrix::Zero(1, 2)), rm, rv, ad::Mode::kTrain);
    CHECK(y.value().allFinite());
  }
  SUBCASE("eval mode uses running stats") {
    rm = Matrix::Constant(1, 1, 2.0);
    rv = Matrix::Constant(1, 1, 4.0);
    Tape t;
    Var y = ad::batch_norm(t.constant(Matrix::Constant(1, 1, 6.0)), t.constant(Matrix::Ones(1, 1)),
                           t.constant(Matrix::Zero(1, 1)), rm, rv, ad::Mode::kEval);
    CHECK(y.value()(0, 0) == doctest::Approx(4.0 / std::sqrt(4.0 + 1e-5)));
    CHECK(rm(0, 0) == 2.0);
  }
}

TEST_CASE("batch norm gradients in both modes") {
  Rng rng(4);
  Parameter x("x", random_matrix(6, 3, rng));
  Parameter g("g", random_matrix(1, 3, rng, 0.5, 1.5));
  Parameter b("b", random_matrix(1, 3, rng));
  Matrix rm = Matrix::Zero(1, 3), rv = Matrix::Ones(1, 3);
  for (ad::Mode mode : {ad::Mode::kTrain, ad::Mode::kEval}) {
    CHECK(check_op({&x, &g, &b}, [&](Tape& t) {
            return ad::batch_norm(t.param(x), t.param(g), t.param(b), rm, rv, mode, false);
          }) <= 1e-6);
  }
}

TEST_CASE("elementwise and reduction gradients") {
  Rng rng(21);
  Parameter a("a", random_matrix(3, 4, rng));
  Parameter b("b", random_matrix(3, 4, rng));
  Parameter sq("sq", random_matrix(4, 4, rng));
  Parameter col("col", random_matrix(4, 1, rng));
  Parameter col2("col2", random_matrix(4, 1, rng));
  Parameter pos("pos", random_matrix(1, 1, rng, 0.5, 2.0));
  CHECK(check_op({&a, &b}, [&](Tape& t) { return ad::add(t.param(a), t.param(b)); }) <= 1e-6);
  CHECK(check_op({&a, &b}, [&](Tape& t) { return ad::sub(t.param(a), t.param(b)); }) <= 1e-6);
  CHECK(check_op({&a, &b}, [&](Tape& t) { return ad::hadamard(t.param(a), t.param(b)); }) <= 1e-6);
  CHECK(check_op({&a}, [&](Tape& t) { return ad::scale(t.param(a), -2.5); }) <= 1e-6);
  CHECK(check_op({&a}, [&](Tape& t) { return ad::add_scalar(t.param(a), 3.0); }) <= 1e-6);
  CHECK(check_op({&a}, [&](Tape& t) { return ad::transpose(t.param(a)); }) <= 1e-6);
  CHECK(check_op({&a}, [&](Tape& t) { return ad::leaky_relu(t.param(a), 0.2); }) <= 1e-6);
  CHECK(check_op({&a}, [&](Tape& t) { return ad::sigmoid(t.param(a)); }) <= 1e-6);
  CHECK(check_op({&a}, [&](Tape& t) { return ad::column_sum(t.param(a)); }) <= 1e-6);
  CHECK(check_op({&a}, [&](Tape& t) { return ad::sum_squares(t.param(a)); }) <= 1e-6);
  CHECK(check_op({&sq}, [&](Tape& t) { return ad::trace(t.param(sq)); }) <= 1e-6);
  CHECK(check_op({&pos}, [&](Tape& t) { return ad::sqrt(t.param(pos)); }) <= 1e-6);
  CHECK(check_op({&col, &col2}, [&](Tape& t) { return ad::outer_sum(t.param(col), t.param(col2)); }) <= 1e-6);
  CHECK(check_op({&a, &b}, [&](Tape& t) { return ad::hconcat({t.param(a), t.param(b), t.param(a)}); }) <= 1e-6);
  CHECK(check_op({&a}, [&](Tape& t) { return ad::slice_rows(t.param(a), 1, 2); }) <= 1e-6);
  CHECK(check_op({&a}, [&](Tape& t) { return ad::slice_cols(t.param(a), 1, 3); }) <= 1e-6);
}

TEST_CASE("outer_sum and slices have the expected values") {
  Tape t;
  Matrix a(2, 1), b(3, 1);
  a << 1, 2;
  b << 10, 20, 30;
  Var o = ad::outer_sum(t.constant(a), t.constant(b));
  CHECK(o.rows() == 2);
  CHECK(o.cols() == 3);
  CHECK(o.value()(1, 2) == 32.0);
  Matrix m(3, 3);
  m << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  CHECK(ad::slice_rows(t.constant(m), 1, 1).value()(0, 2) == 6.0);
  CHECK(ad::slice_cols(t.constant(m), 2, 1).value()(2, 0) == 9.0);
  CHECK_THROWS_AS(ad::slice_cols(t.constant(m), 2, 2), ShapeError);
  CHECK(ad::trace(t.constant(m)).scalar() == 15.0);
}

TEST_CASE("normalize_with_self_loops matches the oracle and differentiates") {
  Rng rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix a = random_matrix(5, 5, rng, 0.0, 1.0);
    a = (a + a.transpose()).eval();
    a.diagonal().setZero();
    Tape t;
    Var n = ad::normalize_with_self_loops(t.constant(a));
    CHECK(testutil::max_abs(n.value() - testutil::oracle_normalize(a)) < 1e-14);
    Parameter p("a", a);
    CHECK(check_op({&p}, [&](Tape& tp) { return ad::normalize_with_self_loops(tp.param(p)); }) <= 1e-6);
  }
}

TEST_CASE("row entropy mean") {
  Tape t;
  Matrix u = Matrix::Constant(2, 4, 0.25);
  CHECK(ad::row_entropy_mean(t.constant(u)).scalar() == doctest::Approx(std::log(4.0)));
  Matrix onehot = Matrix::Zero(3, 2);
  onehot.col(0).setOnes();
  CHECK(ad::row_entropy_mean(t.constant(onehot)).scalar() == 0.0);
  Rng rng(6);
  Parameter p("p", random_matrix(3, 4, rng, 0.1, 0.9));
  CHECK(check_op({&p}, [&](Tape& tp) { return ad::row_entropy_mean(tp.param(p)); }) <= 1e-6);
}

TEST_CASE("bce on scores and logits") {
  Tape t;
  Matrix half = Matrix::Constant(3, 1, 0.5);
  CHECK(ad::bce_scores(t.constant(half), t.constant(half)).scalar() == doctest::Approx(std::log(2.0)));
  Matrix pos(2, 1), neg(1, 1);
  pos << 0.9, 0.8;
  neg << 0.3;
  const double expect = -(std::log(0.9) + std::log(0.8) + std::log(0.7)) / 3.0;
  CHECK(ad::bce_scores(t.constant(pos), t.constant(neg)).scalar() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(expect == doctest::Approx(0.2284).epsilon(1e-3));
  CHECK(ad::bce_scores(t.constant(Matrix::Ones(2, 1)), t.constant(Matrix::Zero(2, 1))).scalar() < 1e-11);
  CHECK_THROWS_AS(ad::bce_scores(t.constant(Matrix(0, 1)), t.constant(neg)), ShapeError);

  // Logit form equals the score form for moderate logits.
  Rng rng(9);
  Parameter lp("lp", random_matrix(4, 1, rng, -3, 3));
  Parameter ln("ln", random_matrix(3, 1, rng, -3, 3));
  Tape t2;
  const double via_logits = ad::bce_logits(t2.param(lp), t2.param(ln)).scalar();
  const double via_scores =
      ad::bce_scores(ad::sigmoid(t2.param(lp)), ad::sigmoid(t2.param(ln))).scalar();
  CHECK(via_logits == doctest::Approx(via_scores).epsilon(1e-12));
  CHECK(check_op({&lp, &ln}, [&](Tape& tp) { return ad::bce_logits(tp.param(lp), tp.param(ln)); }) <= 1e-6);
  CHECK(check_op({&lp}, [&](Tape& tp) {
          return ad::bce_scores(ad::sigmoid(tp.param(lp)), ad::sigmoid(tp.param(ln)));
        }) <= 1e-6);
}

TEST_CASE("backward semantics") {
  Rng rng(1);
  Parameter w("w", random_matrix(3, 2, rng));
  Parameter unused("unused", random_matrix(2, 2, rng));
  w.zero_grad();
  unused.zero_grad();
  {
    Tape t;
    t.param(unused);
    t.backward(ad::sum(t.param(w)));
    CHECK(testutil::max_abs(w.grad - Matrix::Ones(3, 2)) == 0.0);
    CHECK(testutil::max_abs(unused.grad) == 0.0);
  }
  {
    Tape t;
    w.zero_grad();
    Var c = ad::sum(t.constant(Matrix::Ones(2, 2)));
    t.backward(c);
    CHECK(testutil::max_abs(w.grad) == 0.0);
  }
  {
    Tape t;
    CHECK_THROWS(t.backward(t.param(w)));  // not a scalar
  }
  {
    Tape t;
    Var l = ad::sum(t.param(w));
    t.backward(l);
    CHECK_THROWS(t.backward(l));  // tape traversed once
  }
}

TEST_CASE("gradient_check on a quadratic and against a nondeterministic build") {
  Rng rng(5);
  Parameter w("w", random_matrix(3, 3, rng));
  auto quad = [&](Tape& t) { return ad::sum_squares(t.param(w)); };
  CHECK(ad::gradient_check(quad, {&w}).max_rel_error <= 1e-8);

  int calls = 0;
  auto flaky = [&](Tape& t) {
    ++calls;
    return ad::add_scalar(ad::sum_squares(t.param(w)), calls * 1e-3);
  };
  CHECK_THROWS(ad::gradient_check(flaky, {&w}));
}

TEST_CASE("non-finite values are rejected") {
  Tape t;
  Matrix bad = Matrix::Zero(1, 1);
  bad(0, 0) = std::nan("");
  Var ok = t.constant(Matrix::Ones(1, 1));
  CHECK_THROWS_AS(ad::hadamard(ok, t.constant(bad)), NumericError);
  CHECK_THROWS_AS(ad::sqrt(t.constant(Matrix::Constant(1, 1, -1.0))), NumericError);
}

TEST_CASE("glorot init respects its bound and the seed") {
  Rng a(42), b(42);
  Matrix m = glorot_uniform(30, 20, a);
  Matrix n = glorot_uniform(30, 20, b);
  CHECK(testutil::max_abs(m - n) == 0.0);
  CHECK(testutil::max_abs(m) <= std::sqrt(6.0 / 50.0));
}

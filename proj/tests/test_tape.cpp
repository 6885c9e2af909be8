#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ace/grad_check.hpp"
#include "ace/rng.hpp"
#include "ace/tape.hpp"

using namespace ace;
using ace::ad::Tape;
using ace::ad::Var;

namespace {

Matrix random_matrix(RngStream& stream, Eigen::Index r, Eigen::Index c) {
  return draw(stream, Law::uniform(-1.0, 1.0), r, c);
}

}  // namespace

TEST_CASE("square function has gradient 2w") {
  ParamTree params;
  params.insert("w", Matrix::Constant(1, 1, 3.0));
  Tape tape(true);
  auto bound = ad::bind(tape, params);
  Var out = ad::sum_all(ad::square(bound.at("w")));
  CHECK(tape.value(out)(0, 0) == doctest::Approx(9.0));
  tape.backward(out);
  ParamTree grads = ad::grads_of(tape, bound, params);
  CHECK(grads.at("w")(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("gradient of a constant in w is zero") {
  ParamTree params;
  params.insert("w", Matrix::Constant(1, 1, 3.0));
  Tape tape(true);
  auto bound = ad::bind(tape, params);
  Var c = tape.leaf(Matrix::Constant(1, 1, 5.0));
  Var out = ad::sum_all(ad::square(c));
  tape.backward(out);
  ParamTree grads = ad::grads_of(tape, bound, params);
  CHECK(grads.at("w")(0, 0) == 0.0);
}

TEST_CASE("backward is linear: grad(a f + b g) = a grad f + b grad g") {
  RngStream stream(3, 0);
  ParamTree params;
  params.insert("w", random_matrix(stream, 4, 3));

  auto run = [&](double a, double b) {
    Tape tape(true);
    auto bound = ad::bind(tape, params);
    Var w = bound.at("w");
    Var f = ad::sum_all(ad::square(w));
    Var g = ad::sum_all(ad::mul(w, ad::add_scalar(w, 1.0)));
    Var out = ad::add(ad::scale(f, a), ad::scale(g, b));
    tape.backward(out);
    return ad::grads_of(tape, bound, params);
  };

  ParamTree gf = run(1.0, 0.0);
  ParamTree gg = run(0.0, 1.0);
  ParamTree gmix = run(2.5, -1.25);
  Matrix expect = 2.5 * gf.at("w") + (-1.25) * gg.at("w");
  CHECK((gmix.at("w") - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("vars from different tapes do not mix") {
  Tape t1(true), t2(true);
  Var a = t1.leaf(Matrix::Ones(2, 2));
  Var b = t2.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS((void)ad::add(a, b), Error);
}

TEST_CASE("parameter bound to another tape is a graph error") {
  ParamTree params;
  params.insert("w", Matrix::Ones(1, 1));
  Tape t1(true);
  auto bound = ad::bind(t1, params);
  Tape t2(true);
  Var out = ad::sum_all(t2.leaf(Matrix::Ones(1, 1)));
  t2.backward(out);
  CHECK_THROWS_AS((void)ad::grads_of(t2, bound, params), Error);
}

TEST_CASE("grad_check on a quadratic is at solver precision") {
  RngStream stream(17, 1);
  ParamTree params;
  params.insert("w", random_matrix(stream, 3, 2));
  const double err = grad_check_tape(
      [](Tape& t, const ad::BoundParams& p) { return ad::sum_all(ad::square(p.at("w"))); }, params,
      1e-4);
  CHECK(err < 1e-9);
}

TEST_CASE("grad_check of an empty parameter tree is zero (vacuous max)") {
  ParamTree params;
  const double err = grad_check_tape(
      [](Tape& t, const ad::BoundParams&) { return ad::sum_all(t.leaf(Matrix::Ones(1, 1))); },
      params, 1e-5);
  CHECK(err == 0.0);
}

TEST_CASE("grad_check rejects bad epsilon and non-finite losses") {
  ParamTree params;
  params.insert("w", Matrix::Ones(1, 1));
  auto loss = [](Tape& t, const ad::BoundParams& p) { return ad::sum_all(p.at("w")); };
  CHECK_THROWS_AS((void)grad_check_tape(loss, params, 0.0), Error);
  CHECK_THROWS_AS((void)grad_check_tape(loss, params, 0.5), Error);

  auto bad = [](Tape& t, const ad::BoundParams& p) {
    return ad::sum_all(ad::scale(p.at("w"), std::numeric_limits<double>::quiet_NaN()));
  };
  CHECK_THROWS_AS((void)grad_check_tape(bad, params, 1e-5), Error);
}

// every differentiable primitive, 100 random instances each
TEST_CASE("primitive gradients agree with central differences") {
  RngStream stream(99, 7);

  auto check_many = [&](const char* name, auto builder, int param_rows, int param_cols) {
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
      ParamTree params;
      params.insert("w", random_matrix(stream, param_rows, param_cols));
      Matrix aux = random_matrix(stream, param_rows, param_cols);
      const double err = grad_check_tape(
          [&](Tape& t, const ad::BoundParams& p) { return builder(t, p.at("w"), aux); }, params, 1e-5);
      worst = std::max(worst, err);
    }
    INFO(name, " worst relative error ", worst);
    CHECK(worst < 1e-4);
  };

  check_many("matmul", [](Tape& t, Var w, const Matrix& aux) {
    Var other = t.leaf(aux.transpose());
    return ad::sum_all(ad::square(ad::matmul(w, other)));
  }, 4, 3);

  check_many("softmax_rows", [](Tape& t, Var w, const Matrix& aux) {
    Var s = ad::softmax_rows(ad::scale(w, 3.0));
    return ad::sum_all(ad::mul(s, t.leaf(aux)));
  }, 5, 4);

  check_many("softmax_flat", [](Tape& t, Var w, const Matrix& aux) {
    Var s = ad::softmax_flat(ad::scale(w, 3.0));
    return ad::sum_all(ad::mul(s, t.leaf(aux)));
  }, 6, 1);

  check_many("layer_norm_rows", [](Tape& t, Var w, const Matrix& aux) {
    Var gain = t.leaf(Matrix::Constant(1, 4, 1.25));
    Var offset = t.leaf(Matrix::Constant(1, 4, -0.5));
    Var y = ad::layer_norm_rows(w, gain, offset);
    return ad::sum_all(ad::mul(y, t.leaf(aux)));
  }, 5, 4);

  check_many("leaky_relu", [](Tape& t, Var w, const Matrix& aux) {
    return ad::sum_all(ad::mul(ad::leaky_relu(w, 0.01), t.leaf(aux)));
  }, 4, 4);

  check_many("gelu", [](Tape& t, Var w, const Matrix& aux) {
    return ad::sum_all(ad::mul(ad::gelu(ad::scale(w, 2.0)), t.leaf(aux)));
  }, 4, 4);

  check_many("tanh", [](Tape& t, Var w, const Matrix& aux) {
    return ad::sum_all(ad::mul(ad::tanh_op(w), t.leaf(aux)));
  }, 4, 4);

  check_many("mean_rows", [](Tape& t, Var w, const Matrix& aux) {
    return ad::sum_all(ad::square(ad::mean_rows(w)));
  }, 7, 3);

  check_many("attention pooling", [](Tape& t, Var w, const Matrix& aux) {
    // pooled = softmax(X q)^T X with a fixed query vector
    Var q = t.leaf(Matrix::Constant(3, 1, 0.7));
    Var scores = ad::softmax_flat(ad::matmul(w, q));
    Var pooled = ad::matmul(ad::transpose(scores), w);
    return ad::sum_all(ad::square(pooled));
  }, 6, 3);

  check_many("slice/concat", [](Tape& t, Var w, const Matrix& aux) {
    Var left = ad::slice_cols(w, 0, 2);
    Var right = ad::slice_cols(w, 2, 2);
    Var merged = ad::concat_cols({right, left});
    return ad::sum_all(ad::mul(merged, t.leaf(aux)));
  }, 3, 4);

  check_many("add_rowvec/transpose", [](Tape& t, Var w, const Matrix& aux) {
    Var row = t.leaf(Matrix(aux.row(0)));
    return ad::sum_all(ad::square(ad::transpose(ad::add_rowvec(w, row))));
  }, 4, 5);
}

TEST_CASE("layer norm gain/offset gradients are also exact") {
  RngStream stream(5, 5);
  ParamTree params;
  params.insert("gain", random_matrix(stream, 1, 6));
  params.insert("offset", random_matrix(stream, 1, 6));
  Matrix x = random_matrix(stream, 7, 6);
  Matrix aux = random_matrix(stream, 7, 6);
  const double err = grad_check_tape(
      [&](Tape& t, const ad::BoundParams& p) {
        Var y = ad::layer_norm_rows(t.leaf(x), p.at("gain"), p.at("offset"));
        return ad::sum_all(ad::mul(y, t.leaf(aux)));
      },
      params, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("ParamTree flatten then unflatten is the identity") {
  RngStream stream(21, 0);
  ParamTree params;
  params.insert("layer1/w", random_matrix(stream, 3, 4));
  params.insert("layer1/b", random_matrix(stream, 1, 4));
  params.insert("head/w", random_matrix(stream, 4, 1));
  Eigen::VectorXd flat = params.flatten();
  ParamTree copy = params.zeros_like();
  copy.unflatten(flat);
  for (const auto& [name, m] : params) CHECK(m == copy.at(name));
  CHECK_THROWS_AS(params.insert("head/w", Matrix::Ones(1, 1)), Error);
}

TEST_CASE("backward requires a scalar output") {
  Tape tape(true);
  Var a = tape.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(a), Error);
}

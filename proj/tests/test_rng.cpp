#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ace/rng.hpp"

using namespace ace;

TEST_CASE("uniform(0,1) sample mean stays within the CLT band") {
  RngStream stream(12345, 0);
  const Eigen::Index n = 100000;
  Matrix m = draw(stream, Law::uniform(0.0, 1.0), n, 1);
  CHECK(std::abs(m.mean() - 0.5) < 0.005);  // 3 sigma of the uniform mean is ~0.0027
  CHECK(m.minCoeff() >= 0.0);
  CHECK(m.maxCoeff() < 1.0);
}

TEST_CASE("bernoulli(1.0) is all ones, bernoulli(0.0) all zeros") {
  RngStream stream(7, 3);
  Matrix ones = draw(stream, Law::bernoulli(1.0), 13, 5);
  CHECK(ones.minCoeff() == 1.0);
  CHECK(ones.maxCoeff() == 1.0);
  Matrix zeros = draw(stream, Law::bernoulli(0.0), 13, 5);
  CHECK(zeros.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("same (seed, stream) reproduces identical draws") {
  RngStream a(7, 42);
  RngStream b(7, 42);
  Matrix ma = draw(a, Law::normal(0.0, 1.0), 64, 3);
  Matrix mb = draw(b, Law::normal(0.0, 1.0), 64, 3);
  CHECK(ma == mb);
}

TEST_CASE("distinct stream ids decorrelate under a shared seed") {
  RngStream a(99, 0);
  RngStream b(99, 1);
  const Eigen::Index n = 50000;
  Vector va = draw_vector(a, Law::normal(0.0, 1.0), n);
  Vector vb = draw_vector(b, Law::normal(0.0, 1.0), n);
  CHECK(va != vb);
  const double corr = (va.array() - va.mean()).cwiseProduct(vb.array() - vb.mean()).mean() /
                      (std::sqrt((va.array() - va.mean()).square().mean()) *
                       std::sqrt((vb.array() - vb.mean()).square().mean()));
  CHECK(std::abs(corr) < 0.02);
}

TEST_CASE("counter seek replays the stream exactly") {
  RngStream a(5, 5);
  (void)draw(a, Law::uniform(0.0, 1.0), 10, 1);
  const std::uint64_t mark = a.counter();
  Vector tail1 = draw_vector(a, Law::normal(2.0, 0.5), 8);
  a.set_counter(mark);
  Vector tail2 = draw_vector(a, Law::normal(2.0, 0.5), 8);
  CHECK(tail1 == tail2);
}

TEST_CASE("invalid law parameters are rejected") {
  RngStream stream(1, 1);
  CHECK_THROWS_AS((void)Law::uniform(1.0, 1.0), Error);
  CHECK_THROWS_AS((void)Law::uniform(2.0, -1.0), Error);
  CHECK_THROWS_AS((void)Law::normal(0.0, 0.0), Error);
  CHECK_THROWS_AS((void)Law::normal(0.0, -1.0), Error);
  CHECK_THROWS_AS((void)Law::bernoulli(-0.1), Error);
  CHECK_THROWS_AS((void)Law::bernoulli(1.1), Error);
  CHECK_THROWS_AS(stream.next_uniform(3.0, 3.0), Error);
}

TEST_CASE("normal moments look right at scale") {
  RngStream stream(2024, 9);
  Vector v = draw_vector(stream, Law::normal(1.5, 2.0), 200000);
  CHECK(std::abs(v.mean() - 1.5) < 0.02);
  const double sd = std::sqrt((v.array() - v.mean()).square().mean());
  CHECK(std::abs(sd - 2.0) < 0.02);
}

TEST_CASE("fork produces a reproducible, distinct child stream") {
  RngStream parent(11, 4);
  RngStream c1 = parent.fork(7);
  RngStream c2 = parent.fork(7);
  RngStream c3 = parent.fork(8);
  Vector a = draw_vector(c1, Law::uniform(0.0, 1.0), 16);
  Vector b = draw_vector(c2, Law::uniform(0.0, 1.0), 16);
  Vector c = draw_vector(c3, Law::uniform(0.0, 1.0), 16);
  CHECK(a == b);
  CHECK(a != c);
}

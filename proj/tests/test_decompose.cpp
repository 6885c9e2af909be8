#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ace/decompose.hpp"

using namespace ace;

TEST_CASE("the four terms sum to the training error exactly") {
  for (const ToyFamily& family : {identifiable_toy_family(), confounded_toy_family()}) {
    for (int n : {1, 2, 3, 5}) {
      const ToyPredictor optimal = optimal_toy_predictor(family, n);
      const ToyPredictor prior = prior_mean_predictor(family);
      const ToyPredictor arbitrary = [](const std::vector<int>& counts) {
        return 0.3 * counts[0] - 0.2;
      };
      for (const ToyPredictor* f : {&optimal, &prior, &arbitrary}) {
        DecompositionReport r = exact_decomposition(family, n, *f);
        INFO("n = ", n);
        CHECK(std::abs(r.residual()) < 1e-9);
        CHECK(r.term_a >= 0.0);
        CHECK(r.term_b >= -1e-15);
        CHECK(r.term_c >= 0.0);
        CHECK(r.term_d >= -1e-15);
      }
    }
  }
}

TEST_CASE("identifiable family has zero identification error") {
  DecompositionReport r = exact_decomposition(identifiable_toy_family(), 4,
                                              optimal_toy_predictor(identifiable_toy_family(), 4));
  CHECK(r.term_c == 0.0);
}

TEST_CASE("confounded family pays exactly the within-class prior variance") {
  const ToyFamily family = confounded_toy_family();
  DecompositionReport r = exact_decomposition(family, 3, optimal_toy_predictor(family, 3));
  // the confounded class holds effects -1 and +1 with equal mass (total 1/2),
  // so its within-class variance is 1 and the marginal contribution is 1/2
  CHECK(r.term_c == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.term_c > 0.0);
}

TEST_CASE("optimal predictor has zero model error") {
  const ToyFamily family = confounded_toy_family();
  DecompositionReport r = exact_decomposition(family, 4, optimal_toy_predictor(family, 4));
  CHECK(std::abs(r.term_b) < 1e-15);
}

TEST_CASE("epsilon = 0 kills term A") {
  ToyFamily family = identifiable_toy_family();
  family.epsilon_support = {0.0};
  family.epsilon_probs = {1.0};
  DecompositionReport r = exact_decomposition(family, 2, prior_mean_predictor(family));
  CHECK(r.term_a == 0.0);
  CHECK(r.epsilon_variance == 0.0);
  CHECK(std::abs(r.residual()) < 1e-9);
}

TEST_CASE("finite-sample error of the optimal predictor shrinks with N") {
  const ToyFamily family = identifiable_toy_family();
  double last = std::numeric_limits<double>::infinity();
  for (int n : {1, 2, 4, 8}) {
    DecompositionReport r = exact_decomposition(family, n, optimal_toy_predictor(family, n));
    INFO("n = ", n, " term_d = ", r.term_d);
    CHECK(r.term_d < last);
    last = r.term_d;
  }
}

TEST_CASE("non-enumerable sizes are rejected") {
  ToyFamily family = identifiable_toy_family();
  CHECK_THROWS_AS((void)exact_decomposition(family, 100, prior_mean_predictor(family)), Error);
  ToyScm wide;
  wide.effect = 0.0;
  wide.prior = 1.0;
  wide.emission.assign(40, 1.0 / 40.0);
  ToyFamily big;
  big.scms = {wide};
  CHECK_THROWS_AS((void)exact_decomposition(big, 20, prior_mean_predictor(big)), Error);
}

TEST_CASE("family validation catches malformed specs") {
  ToyFamily bad = identifiable_toy_family();
  bad.scms[0].prior = 0.9;
  CHECK_THROWS_AS(bad.validate(), Error);

  ToyFamily skew = identifiable_toy_family();
  skew.epsilon_support = {0.2, -0.1};
  skew.epsilon_probs = {0.5, 0.5};
  CHECK_THROWS_AS(skew.validate(), Error);  // mean is not zero

  ToyFamily ragged = identifiable_toy_family();
  ragged.scms[1].emission = {1.0};
  CHECK_THROWS_AS(ragged.validate(), Error);
}

TEST_CASE("mc error term vanishes on linear instances") {
  ScmInstance inst;
  inst.structure = Structure::Confounder;
  inst.treatment_kind = TreatmentKind::Continuous;
  inst.gamma_x = Vector::Constant(1, 1.5);
  inst.gamma_t = Vector::Constant(1, 0.5);
  inst.beta_x = Vector::Constant(1, 1.3);
  inst.beta_y = Vector::Constant(1, 0.7);
  inst.beta_t = 0.4;
  inst.surface = LinearSurface{inst.beta_x, inst.beta_t};
  RngStream stream(501, 0);
  CHECK(mc_error_term(inst, 50, 40, stream) == doctest::Approx(0.0).epsilon(1e-18));
  CHECK_THROWS_AS((void)mc_error_term(inst, 50, 10, stream), Error);
}

TEST_CASE("mc error term scales as 1/K on MLP surfaces") {
  RngStream sstream(502, 0);
  ScmInstance inst;
  inst.structure = Structure::Confounder;
  inst.treatment_kind = TreatmentKind::Binary;
  inst.gamma_x = Vector::Constant(1, 1.5);
  inst.gamma_t = Vector::Constant(1, 0.5);
  inst.beta_x = Vector::Constant(1, 1.3);
  inst.beta_y = Vector::Constant(1, 0.7);
  inst.beta_t = 0.0;
  inst.surface = sample_mlp_surface(sstream, 1);

  RngStream s1(503, 0), s2(504, 0);
  const long K = 40;
  const double at_k = mc_error_term(inst, K, 400, s1);
  const double at_4k = mc_error_term(inst, 4 * K, 400, s2);
  const double ratio = at_k / at_4k;
  INFO("variance ratio ", ratio);
  CHECK(ratio > 4.0 * 0.7);
  CHECK(ratio < 4.0 * 1.3);

  RngStream s3(505, 0);
  CHECK(mc_error_term(inst, 1000000, 30, s3) < 1e-4);
}

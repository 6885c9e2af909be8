#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ace/metrics.hpp"
#include "ace/rng.hpp"

using namespace ace;

TEST_CASE("perfect predictions give R2 = 1 and RMSE = 0") {
  Vector truths(4);
  truths << 0.5, -1.0, 2.0, 0.0;
  MetricsReport r = compute_metrics(truths, truths);
  REQUIRE(r.r2.has_value());
  CHECK(*r.r2 == doctest::Approx(1.0));
  CHECK(r.rmse == doctest::Approx(0.0));
}

TEST_CASE("predicting the truth mean gives R2 = 0") {
  Vector truths(5);
  truths << 1.0, 2.0, 3.0, 4.0, 5.0;
  Vector preds = Vector::Constant(5, 3.0);
  MetricsReport r = compute_metrics(preds, truths);
  CHECK(*r.r2 == doctest::Approx(0.0));
}

TEST_CASE("hand-computed case: truths (0,1,2), predictions (0,1,4)") {
  Vector truths(3), preds(3);
  truths << 0.0, 1.0, 2.0;
  preds << 0.0, 1.0, 4.0;
  MetricsReport r = compute_metrics(preds, truths);
  CHECK(r.rmse == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-12));
  CHECK(*r.r2 == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(render_r2(r.r2) == "<= 0");
}

TEST_CASE("constant truths leave R2 undefined but RMSE reported") {
  Vector truths = Vector::Constant(4, 2.0);
  Vector preds(4);
  preds << 2.0, 2.5, 1.5, 2.0;
  MetricsReport r = compute_metrics(preds, truths);
  CHECK_FALSE(r.r2.has_value());
  CHECK(r.rmse == doctest::Approx(std::sqrt(0.5 / 4.0)));
  CHECK(render_r2(r.r2) == "undef");
}

TEST_CASE("filter range drops wild predictions before recomputation") {
  Vector truths(5), preds(5);
  truths << 0.1, -0.2, 0.3, 0.2, -0.1;
  preds << 0.1, -0.2, 0.3, 43.0, -0.1;  // one 2SLS-style blowup
  MetricsReport r = compute_metrics(preds, truths, std::make_pair(-2.0, 2.0));
  CHECK(r.n_total == 5);
  CHECK(r.n_filtered == 4);
  REQUIRE(r.rmse_filtered.has_value());
  CHECK(*r.rmse_filtered == doctest::Approx(0.0));
  CHECK(*r.r2_filtered == doctest::Approx(1.0));
  CHECK(*r.r2 < 0.0);
}

TEST_CASE("metrics are invariant to simultaneous shuffling") {
  RngStream stream(401, 0);
  Vector truths = draw_vector(stream, Law::normal(0.0, 1.0), 50);
  Vector preds = truths + draw_vector(stream, Law::normal(0.0, 0.3), 50);
  MetricsReport base = compute_metrics(preds, truths);

  std::vector<Eigen::Index> perm(50);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(stream.next_u64() % i)]);
  Vector t2(50), p2(50);
  for (Eigen::Index i = 0; i < 50; ++i) {
    t2(i) = truths(perm[static_cast<std::size_t>(i)]);
    p2(i) = preds(perm[static_cast<std::size_t>(i)]);
  }
  MetricsReport shuffled = compute_metrics(p2, t2);
  CHECK(*shuffled.r2 == doctest::Approx(*base.r2).epsilon(1e-12));
  CHECK(shuffled.rmse == doctest::Approx(base.rmse).epsilon(1e-12));
}

TEST_CASE("strength buckets assign gamma_t = 0 to the weakest bin") {
  Vector strengths(3), preds(3), truths(3);
  strengths << analytic_instrument_strength(Vector::Constant(1, 1.5), Vector::Constant(1, 0.0)),
      0.15, 0.5;
  preds << 0.0, 0.1, 0.2;
  truths << 0.0, 0.2, 0.1;
  auto buckets = strength_buckets(strengths, preds, truths);
  REQUIRE(buckets.size() == 5);
  CHECK(strengths(0) == 0.0);
  // [0, 0.1) holds only the degenerate-instrument dataset; a single item
  // cannot carry metrics, so it reports as empty-with-count
  CHECK(buckets[0].count == 1);
  CHECK(buckets[1].count == 1);
  CHECK(buckets[3].count == 1);
  CHECK(buckets[2].empty);
  CHECK(buckets[2].count == 0);
}

TEST_CASE("analytic strength matches the empirical correlation at N=1000") {
  for (double gamma_t : {0.2, 0.6, 0.95}) {
    ScmInstance inst;
    inst.structure = Structure::Instrument;
    inst.treatment_kind = TreatmentKind::Continuous;
    inst.gamma_x = Vector::Constant(1, 1.4);
    inst.gamma_t = Vector::Constant(1, gamma_t);
    inst.beta_x = Vector::Constant(1, 1.2);
    inst.beta_y = Vector::Constant(1, 0.5);
    inst.beta_t = 0.3;
    inst.surface = LinearSurface{inst.beta_x, inst.beta_t};
    RngStream stream(402, static_cast<std::uint64_t>(gamma_t * 100));
    ObservedDataset d = observe(sample_full_dataset(inst, 1000, stream), Structure::Instrument);
    const double analytic = analytic_instrument_strength(inst.gamma_x, inst.gamma_t);
    CHECK(std::abs(instrument_strength(d) - analytic) < 0.03);
  }
}

TEST_CASE("multiple-correlation strength works for d > 1 instruments") {
  ScmInstance inst;
  inst.structure = Structure::Instrument;
  inst.treatment_kind = TreatmentKind::Continuous;
  inst.gamma_x = Vector::Constant(3, 1.2);
  inst.gamma_t = Vector::Constant(3, 0.5);
  inst.beta_x = Vector::Constant(3, 1.2);
  inst.beta_y = Vector::Constant(3, 0.5);
  inst.beta_t = 0.3;
  inst.surface = LinearSurface{inst.beta_x, inst.beta_t};
  RngStream stream(403, 0);
  ObservedDataset d = observe(sample_full_dataset(inst, 2000, stream), Structure::Instrument);
  const double analytic = analytic_instrument_strength(inst.gamma_x, inst.gamma_t);
  CHECK(std::abs(instrument_strength(d) - analytic) < 0.03);
}

TEST_CASE("table rendering applies the display rule and aligns columns") {
  MetricsReport good;
  good.r2 = 0.8853;
  good.rmse = 0.1833;
  good.n_total = good.n_filtered = 100;
  MetricsReport bad;
  bad.r2 = -3.2;
  bad.rmse = 43.7167;
  bad.n_total = bad.n_filtered = 100;

  std::vector<TableEntry> entries;
  entries.push_back(TableEntry{"confounder", "model", {{100, good}}});
  entries.push_back(TableEntry{"instrument", "tsls_lin", {{100, bad}}});
  const std::string table = render_table(entries);
  CHECK(table.find("0.8853") != std::string::npos);
  CHECK(table.find("<= 0") != std::string::npos);
  CHECK(table.find("-3.2") == std::string::npos);
  CHECK(table.find("R2(N=100)") != std::string::npos);
}

TEST_CASE("tables carry R2 and RMSE columns at two dataset sizes") {
  MetricsReport at100;
  at100.r2 = 0.8853;
  at100.rmse = 0.1833;
  MetricsReport at1000;
  at1000.r2 = 0.9570;
  at1000.rmse = 0.1172;
  std::vector<TableEntry> entries;
  entries.push_back(TableEntry{"confounder", "model", {{100, at100}, {1000, at1000}}});
  const std::string table = render_table(entries);
  CHECK(table.find("R2(N=100)") != std::string::npos);
  CHECK(table.find("R2(N=1000)") != std::string::npos);
  CHECK(table.find("RMSE(N=100)") != std::string::npos);
  CHECK(table.find("RMSE(N=1000)") != std::string::npos);
  CHECK(table.find("0.8853") != std::string::npos);
  CHECK(table.find("0.9570") != std::string::npos);
}

TEST_CASE("metrics JSON round-trips") {
  MetricsReport r;
  r.r2 = 0.5;
  r.rmse = 0.25;
  r.r2_filtered = 0.6;
  r.rmse_filtered = 0.2;
  r.n_total = 10;
  r.n_filtered = 9;
  MetricsReport back = metrics_from_json(metrics_to_json(r));
  CHECK(*back.r2 == 0.5);
  CHECK(back.rmse == 0.25);
  CHECK(*back.r2_filtered == 0.6);
  CHECK(back.n_filtered == 9);
}

TEST_CASE("bucket edges must increase and lengths must match") {
  Vector v3 = Vector::Zero(3), v2 = Vector::Zero(2);
  CHECK_THROWS_AS((void)strength_buckets(v3, v3, v2), Error);
  CHECK_THROWS_AS((void)strength_buckets(v3, v3, v3, {0.5, 0.5}), Error);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ace/baselines.hpp"
#include "ace/trainer.hpp"

using namespace ace;

namespace {

ScmFamily linear_confounder() {
  ScmFamily f;
  f.structure = Structure::Confounder;
  f.treatment_kind = TreatmentKind::Continuous;
  f.surface_kind = SurfaceKind::Linear;
  return f;
}

SetModelConfig tiny_model(int input_width) {
  SetModelConfig c;
  c.input_width = input_width;
  c.embed_dim = 16;
  c.num_blocks = 1;
  c.num_heads = 2;
  c.feedforward_width = 32;
  return c;
}

TrainConfig tiny_train(long steps, Eigen::Index n = 20) {
  TrainConfig c;
  c.batch_size = 16;
  c.epochs = 1;
  c.datasets_per_epoch = static_cast<int>(steps) * c.batch_size;
  c.dataset_size = n;
  c.mc_samples = 8;  // exact for linear targets anyway
  c.base_rate = 3e-3;
  c.warmup_steps = 20;
  c.seed = 11;
  c.workers = 2;
  return c;
}

}  // namespace

TEST_CASE("degenerate beta_t prior trains to the constant zero predictor") {
  ScmFamily family = linear_confounder();
  family.priors.beta_t = ScalarPrior::constant(0.0);
  TrainConfig tc = tiny_train(300);
  TrainedModel model = train(family, tiny_model(3), tc);

  RngStream stream(601, 0);
  for (int rep = 0; rep < 20; ++rep) {
    ScmInstance inst = sample_scm(family, stream);
    ObservedDataset d = observe(sample_full_dataset(inst, 20, stream), Structure::Confounder);
    CHECK(std::abs(predict_effect(model, d)) < 0.02);
  }
}

TEST_CASE("identical seeds give bit-identical final parameters") {
  ScmFamily family = linear_confounder();
  TrainConfig tc = tiny_train(30);
  TrainedModel a = train(family, tiny_model(3), tc);
  TrainedModel b = train(family, tiny_model(3), tc);
  CHECK(a.params.flatten() == b.params.flatten());
  CHECK(a.curve == b.curve);
}

TEST_CASE("worker count changes nothing") {
  ScmFamily family = linear_confounder();
  TrainConfig tc = tiny_train(20);
  tc.workers = 1;
  TrainedModel a = train(family, tiny_model(3), tc);
  tc.workers = 2;
  TrainedModel b = train(family, tiny_model(3), tc);
  CHECK(a.params.flatten() == b.params.flatten());
}

TEST_CASE("an interrupted run resumes to the same trajectory") {
  ScmFamily family = linear_confounder();
  TrainConfig tc = tiny_train(40);
  TrainedModel full = train(family, tiny_model(3), tc);

  TrainedModel half = train(family, tiny_model(3), tc, nullptr, 20);
  CHECK(half.completed_steps == 20);
  // round-trip through the checkpoint format, as the CLI would
  TrainedModel resumed = trained_model_from_json(trained_model_to_json(half, true));
  train_continue(resumed);
  CHECK(resumed.completed_steps == 40);
  CHECK(resumed.params.flatten() == full.params.flatten());
  CHECK(resumed.curve == full.curve);
}

TEST_CASE("resume without optimizer state is a contract error") {
  ScmFamily family = linear_confounder();
  TrainedModel half = train(family, tiny_model(3), tiny_train(10), nullptr, 5);
  TrainedModel stripped = trained_model_from_json(trained_model_to_json(half, false));
  CHECK_THROWS_AS(train_continue(stripped), Error);
}

TEST_CASE("training batches carry analytically correct linear targets") {
  ScmFamily family = linear_confounder();
  family.priors.beta_y = ScalarPrior::constant(0.0);  // noiseless outcomes
  TrainConfig tc = tiny_train(2, 60);
  tc.batch_size = 8;
  std::vector<TrainItem> batch = sample_training_batch(family, tc, 0);
  REQUIRE(batch.size() == 8);
  BaselineSpec reg{BaselineKind::RegLin, {}, false};
  for (const TrainItem& item : batch) {
    CHECK_FALSE(item.query.has_value());
    CHECK_FALSE(item.normalizer.has_value());
    CHECK(std::abs(item.target) < 1.0);
    // independent oracle: exact regression on the noiseless dataset
    const double beta_t = estimate_baseline(reg, item.dataset);
    CHECK(item.target == doctest::Approx(beta_t).epsilon(1e-8));
  }
}

TEST_CASE("cate batches carry queries, pate batches do not") {
  ScmFamily family = linear_confounder();
  family.surface_kind = SurfaceKind::InteractionLinear;
  TrainConfig tc = tiny_train(1, 20);
  tc.batch_size = 4;
  tc.estimand = EstimandKind::Cate;
  for (const TrainItem& item : sample_training_batch(family, tc, 0)) {
    CHECK(item.query.has_value());
    CHECK(item.query->size() == 1);
  }
  tc.estimand = EstimandKind::Pate;
  family.surface_kind = SurfaceKind::Linear;
  for (const TrainItem& item : sample_training_batch(family, tc, 0))
    CHECK_FALSE(item.query.has_value());
}

TEST_CASE("nonlinear-surface batches come normalized") {
  ScmFamily family = linear_confounder();
  family.treatment_kind = TreatmentKind::Binary;
  family.surface_kind = SurfaceKind::Mixture;
  TrainConfig tc = tiny_train(1, 40);
  tc.batch_size = 6;
  for (const TrainItem& item : sample_training_batch(family, tc, 0)) {
    CHECK(item.normalizer.has_value());
    CHECK(item.normalizer->gap() > 0.0);
  }
}

TEST_CASE("training loss trends downward on the linear confounder family") {
  ScmFamily family = linear_confounder();
  TrainConfig tc = tiny_train(500, 30);
  TrainedModel model = train(family, tiny_model(3), tc);
  REQUIRE(model.curve.size() == 500);
  auto window_mean = [&](std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += model.curve[i];
    return acc / static_cast<double>(hi - lo);
  };
  CHECK(window_mean(400, 500) < window_mean(0, 100));
}

TEST_CASE("persistently non-finite loss raises divergence with the curve attached") {
  ScmFamily family = linear_confounder();
  TrainConfig tc = tiny_train(60);
  // one update of this size overflows the forward pass for good
  tc.base_rate = 1e200;
  tc.clip_norm = 1e300;
  tc.warmup_steps = 0;
  try {
    (void)train(family, tiny_model(3), tc);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.curve().size() >= 10);
    CHECK(e.code() == ErrorCode::Divergence);
  }
}

TEST_CASE("prediction is invariant to row order and free of refitting") {
  ScmFamily family = linear_confounder();
  TrainedModel model = train(family, tiny_model(3), tiny_train(30));

  RngStream stream(602, 0);
  ScmInstance inst = sample_scm(family, stream);
  ObservedDataset d = observe(sample_full_dataset(inst, 24, stream), Structure::Confounder);
  const double base = predict_effect(model, d);

  ObservedDataset reversed = d;
  reversed.t = d.t.reverse();
  reversed.y = d.y.reverse();
  reversed.x = d.x.colwise().reverse();
  CHECK(std::abs(predict_effect(model, reversed) - base) <= 1e-9 * std::max(1.0, std::abs(base)));

  // batched evaluation: one forward per dataset, outputs align with inputs
  std::vector<ObservedDataset> datasets = {d, reversed, d};
  Vector preds = predict_effects(model, datasets, {}, 2);
  CHECK(preds(0) == preds(2));
}

TEST_CASE("query presence must match the trained estimand") {
  ScmFamily family = linear_confounder();
  TrainedModel model = train(family, tiny_model(3), tiny_train(5));
  RngStream stream(603, 0);
  ScmInstance inst = sample_scm(family, stream);
  ObservedDataset d = observe(sample_full_dataset(inst, 10, stream), Structure::Confounder);
  CHECK_THROWS_AS((void)predict_effect(model, d, Vector::Zero(1)), Error);
}

TEST_CASE("normalized-scale rmse times the mean gap tracks unnormalized rmse") {
  ScmFamily family = linear_confounder();
  family.treatment_kind = TreatmentKind::Binary;
  family.surface_kind = SurfaceKind::RandomMlp;
  TrainConfig tc = tiny_train(1, 50);
  tc.batch_size = 64;
  tc.datasets_per_epoch = 64;
  std::vector<TrainItem> corpus = sample_training_batch(family, tc, 0);

  // constant predictor on the normalized scale
  const double c = 0.1;
  double se_norm = 0.0, se_unnorm = 0.0, gap_sum = 0.0;
  for (const TrainItem& item : corpus) {
    REQUIRE(item.normalizer.has_value());
    const double gap = item.normalizer->gap();
    const double err_norm = c - item.target;
    se_norm += err_norm * err_norm;
    const double err_unnorm = gap * c - gap * item.target;
    se_unnorm += err_unnorm * err_unnorm;
    gap_sum += gap;
  }
  const double rmse_norm = std::sqrt(se_norm / corpus.size());
  const double rmse_unnorm = std::sqrt(se_unnorm / corpus.size());
  const double mean_gap = gap_sum / corpus.size();
  const double ratio = rmse_unnorm / (rmse_norm * mean_gap);
  INFO("round-trip ratio ", ratio);
  CHECK(ratio > 0.9);
  CHECK(ratio < 1.1);
}

TEST_CASE("fixed corpus mode replays the first epoch verbatim") {
  ScmFamily family = linear_confounder();
  TrainConfig tc = tiny_train(0);
  tc.batch_size = 8;
  tc.datasets_per_epoch = 40;  // 5 steps per epoch
  tc.epochs = 2;
  tc.base_rate = 1e-30;  // effectively frozen parameters
  tc.warmup_steps = 0;

  tc.fixed_corpus = true;
  TrainedModel cached = train(family, tiny_model(3), tc);
  REQUIRE(cached.curve.size() == 10);
  for (int k = 0; k < 5; ++k)
    CHECK(cached.curve[static_cast<std::size_t>(k)] == cached.curve[static_cast<std::size_t>(k + 5)]);

  tc.fixed_corpus = false;
  TrainedModel fresh = train(family, tiny_model(3), tc);
  bool any_different = false;
  for (int k = 0; k < 5; ++k)
    any_different |= fresh.curve[static_cast<std::size_t>(k)] != fresh.curve[static_cast<std::size_t>(k + 5)];
  CHECK(any_different);
}

TEST_CASE("model input width must match the family layout") {
  ScmFamily family = linear_confounder();
  CHECK_THROWS_AS((void)train(family, tiny_model(7), tiny_train(5)), Error);
  CHECK(family_input_width(family, EstimandKind::Pate) == 3);
  CHECK(family_input_width(family, EstimandKind::Cate) == 4);
  ScmFamily proxy = family;
  proxy.structure = Structure::Proxy;
  CHECK(family_input_width(proxy, EstimandKind::Pate) == 4);
  ScmFamily both = family;
  both.structure = Structure::ConfounderPlusIv;
  both.covariate_dim = 5;
  CHECK(family_input_width(both, EstimandKind::Pate) == 12);
}

TEST_CASE("d-dimensional families train and predict end to end") {
  ScmFamily family = linear_confounder();
  family.covariate_dim = 2;
  TrainConfig tc = tiny_train(10, 16);
  TrainedModel model = train(family, tiny_model(4), tc);

  RngStream stream(604, 0);
  ScmInstance inst = sample_scm(family, stream);
  ObservedDataset d = observe(sample_full_dataset(inst, 16, stream), Structure::Confounder);
  CHECK(d.feature_count() == 4);
  CHECK(std::isfinite(predict_effect(model, d)));

  // cate path carries a d-vector query through featurization
  tc.estimand = EstimandKind::Cate;
  std::vector<TrainItem> batch = sample_training_batch(family, tc, 0);
  REQUIRE(batch.front().query.has_value());
  CHECK(batch.front().query->size() == 2);
}

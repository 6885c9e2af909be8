#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ace/estimands.hpp"
#include "ace/scm.hpp"
#include "ace/set_model.hpp"

namespace ace {

struct TrainConfig {
  int batch_size = 32;            // m
  int epochs = 1;
  int datasets_per_epoch = 4096;  // steps per epoch = datasets_per_epoch / batch_size
  Eigen::Index dataset_size = 100;
  EstimandKind estimand = EstimandKind::Pate;
  long mc_samples = 10000;  // K for the target estimand

  double base_rate = 1e-4;            // cosine-decayed
  double final_rate_fraction = 0.0;   // decay target as a fraction of base
  int warmup_steps = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;

  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // steps between on-disk states; 0 = final only
  bool fixed_corpus = false; // cache the first epoch and cycle it
  int workers = 1;

  long total_steps() const {
    return static_cast<long>(epochs) * (datasets_per_epoch / batch_size);
  }
  void validate() const;
};

// One supervised pair produced by the simulation pipeline.
struct TrainItem {
  ObservedDataset dataset;
  std::optional<Vector> query;
  double target = 0.0;
  std::optional<EffectNormalizer> normalizer;  // set when targets are normalized
};

// Trained predictor plus everything needed to resume or reproduce the run.
struct TrainedModel {
  SetModelConfig model_config;
  TrainConfig train_config;
  ScmFamily family;
  ParamTree params;
  bool normalized_targets = false;
  std::vector<double> curve;  // per-step mse, length == completed steps
  long completed_steps = 0;
  std::string family_hash;

  // optimizer state (present while resumable)
  ParamTree adam_m;
  ParamTree adam_v;
};

// Draws one batch exactly as training step `step` would see it. Streams are
// derived from (seed, step, item), so results do not depend on worker count.
std::vector<TrainItem> sample_training_batch(const ScmFamily& family, const TrainConfig& config,
                                             long step);

// Algorithm: stream (dataset, target) pairs from the family and minimize MSE
// by adaptive-moment gradient descent. stop_after < 0 runs to the configured
// total step count; otherwise at most that many further steps execute (the
// run can be resumed from the returned state).
TrainedModel train(const ScmFamily& family, const SetModelConfig& model_config,
                   const TrainConfig& train_config,
                   const std::function<void(long, double)>& progress = nullptr,
                   long stop_after = -1);

// Continues a checkpointed run toward its configured total step count.
void train_continue(TrainedModel& state, const std::function<void(long, double)>& progress = nullptr,
                    long stop_after = -1);

double predict_effect(const TrainedModel& model, const ObservedDataset& dataset,
                      const std::optional<Vector>& query = std::nullopt);
// One forward pass per dataset, no refitting. Parallel across datasets.
Vector predict_effects(const TrainedModel& model, const std::vector<ObservedDataset>& datasets,
                       const std::vector<std::optional<Vector>>& queries, int workers = 1);

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json trained_model_to_json(const TrainedModel& model, bool include_optimizer_state = true);
TrainedModel trained_model_from_json(const nlohmann::json& j);
void save_trained_model(const std::string& path, const TrainedModel& model,
                        bool include_optimizer_state = true);
TrainedModel load_trained_model(const std::string& path);

void write_curve_csv(const std::string& path, const std::vector<double>& curve);

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t value);

// Width of the model input implied by a family and estimand choice.
int family_input_width(const ScmFamily& family, EstimandKind estimand);

}  // namespace ace

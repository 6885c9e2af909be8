#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ace/baselines.hpp"
#include "ace/scm.hpp"
#include "ace/trainer.hpp"

namespace ace {

struct EvalSpec {
  int count = 200;
  Eigen::Index dataset_size = 100;
  std::uint64_t seed = 99;
};

// One experiment = family + model + training + evaluation + baselines,
// resolved entirely from a config file (seeds are always explicit).
struct ExperimentConfig {
  std::string name = "experiment";
  ScmFamily family;
  SetModelConfig model;
  TrainConfig train;
  EvalSpec eval;
  std::vector<BaselineKind> baselines;
  MlpHyperparams baseline_mlp;
  bool allow_binary_tsls = false;
  std::string out_dir = "runs/experiment";
  std::optional<std::pair<double, double>> filter_range;
  std::vector<double> bucket_edges;
  int workers = 1;

  void validate() const;
};

ExperimentConfig experiment_from_json(const nlohmann::json& j);
nlohmann::json experiment_to_json(const ExperimentConfig& config);
ExperimentConfig load_experiment(const std::string& path);

// Corpus on disk: dataset CSVs + targets/meta JSON + manifest.
struct CorpusEntry {
  ObservedDataset dataset;
  EffectTarget target;
  Vector gamma_x;
  Vector gamma_t;
  double beta_t = 0.0;
  std::string surface;
};

struct Corpus {
  std::vector<CorpusEntry> entries;
  EstimandKind estimand = EstimandKind::Pate;
};

Corpus simulate_corpus(const ScmFamily& family, EstimandKind estimand, long mc_samples, int count,
                       Eigen::Index dataset_size, std::uint64_t seed, int workers);
void write_corpus(const std::string& dir, const Corpus& corpus, const nlohmann::json& config_echo,
                  std::uint64_t seed);
Corpus load_corpus(const std::string& dir);

std::uint64_t hash_file(const std::string& path);

}  // namespace ace

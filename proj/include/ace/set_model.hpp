#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ace/param_tree.hpp"
#include "ace/rng.hpp"
#include "ace/scm.hpp"
#include "ace/tape.hpp"

namespace ace {

enum class Pooling { Mean, Attention };

struct SetModelConfig {
  int input_width = 3;        // role columns plus any query features
  int embed_dim = 64;         // 256 for the d=5 study
  int num_blocks = 8;         // 12 for d=5
  int num_heads = 4;
  int feedforward_width = 0;  // 0 means 4 * embed_dim
  Pooling pooling = Pooling::Mean;

  int ff_width() const { return feedforward_width > 0 ? feedforward_width : 4 * embed_dim; }
  void validate() const;
};

// Flat row features in the fixed role order, with the query (when present)
// appended to every row.
Matrix featurize(const ObservedDataset& dataset, const std::optional<Vector>& query);

// Fan-in-scaled uniform weights, zero biases, unit normalization gains.
ParamTree init_set_model(const SetModelConfig& config, RngStream& stream);

// Forward pass over an already-featurized row matrix, expressed on a tape so
// the same code path serves training (recording) and inference.
ad::Var set_model_forward(const SetModelConfig& config, ad::Tape& tape, const ad::BoundParams& params,
                          const Matrix& rows);

double forward(const SetModelConfig& config, const ParamTree& params, const ObservedDataset& dataset,
               const std::optional<Vector>& query = std::nullopt);

struct BatchItem {
  ObservedDataset dataset;
  std::optional<Vector> query;
  double target = 0.0;
};

// Mean squared error over the batch plus its gradient tree. Items are
// independent tapes; grads are reduced in item order so the result does not
// depend on the worker count.
std::pair<double, ParamTree> batch_loss(const SetModelConfig& config, const ParamTree& params,
                                        const std::vector<BatchItem>& batch, int workers = 1);

nlohmann::json model_config_to_json(const SetModelConfig& config);
SetModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json params_to_json(const ParamTree& params);
ParamTree params_from_json(const nlohmann::json& j);

}  // namespace ace

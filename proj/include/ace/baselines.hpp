#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ace/scm.hpp"

namespace ace {

enum class BaselineKind { TOnly, RegLin, RegMlp, TslsLin, TslsMlp, Pr2slsLin, Pr2slsMlp, NaiveDiff };

const char* baseline_kind_name(BaselineKind k);
BaselineKind baseline_kind_from_name(const std::string& name);

struct MlpHyperparams {
  std::vector<int> hidden = {64, 64};
  int steps = 2000;
  double rate = 1e-3;
  std::uint64_t seed = 0;
};

struct BaselineSpec {
  BaselineKind kind = BaselineKind::RegLin;
  MlpHyperparams mlp;
  // 2SLS on binary treatment is an extension the reference recipe does not
  // cover; it stays opt-in.
  bool allow_binary_tsls = false;
};

// Per-dataset estimate, fitted independently on this dataset alone.
double estimate_baseline(const BaselineSpec& spec, const ObservedDataset& dataset,
                         const std::optional<Vector>& query = std::nullopt);

// Textbook covariance ratio cov(y, u) / cov(t, u) for a scalar instrument;
// serves as the independent oracle for TslsLin.
double tsls_closed_form(const ObservedDataset& dataset);

// Least squares via column-pivoted QR; throws RankDeficient on singular fits.
Vector ols(const Matrix& design, const Vector& response);

// Small dense MLP fit by full-batch adaptive-moment descent; deterministic
// given (data, hyperparams). Inputs/outputs are standardized internally.
class FittedMlp {
 public:
  FittedMlp(const Matrix& inputs, const Vector& targets, const MlpHyperparams& hp);
  double predict(const Vector& input) const;
  Vector predict_rows(const Matrix& inputs) const;

 private:
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  Vector in_mean_, in_scale_;
  double out_mean_ = 0.0, out_scale_ = 1.0;
};

}  // namespace ace

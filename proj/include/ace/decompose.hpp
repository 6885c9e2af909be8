#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ace/estimands.hpp"
#include "ace/scm.hpp"

namespace ace {

// Four-way split of the training error against noisy targets:
//   A  MC error in the targeted parameter
//   B  model error against the optimal predictor given N samples
//   C  identification error (irreducible even with infinite data)
//   D  finite-sample error of the optimal predictor
// On enumerable families total equals A+B+C+D as an exact identity.
struct DecompositionReport {
  double total = 0.0;
  double term_a = 0.0;
  double term_b = 0.0;
  double term_c = 0.0;
  double term_d = 0.0;
  double epsilon_variance = 0.0;
  double residual() const { return total - (term_a + term_b + term_c + term_d); }
};

nlohmann::json decomposition_to_json(const DecompositionReport& report);

// A finitely parameterized SCM with a finite observation alphabet: effect
// value, prior mass, and per-symbol emission probabilities.
struct ToyScm {
  double effect = 0.0;
  double prior = 0.0;
  std::vector<double> emission;
};

// Enumerable family: priors over finitely many SCMs, datasets of N i.i.d.
// symbols, and a discrete mean-zero target noise epsilon.
struct ToyFamily {
  std::vector<ToyScm> scms;
  std::vector<double> epsilon_support = {0.0};
  std::vector<double> epsilon_probs = {1.0};
  void validate() const;
  std::size_t alphabet_size() const { return scms.empty() ? 0 : scms.front().emission.size(); }
};

// Order statistics suffice for i.i.d. draws, so a dataset is a count vector
// over the alphabet. Predictors are functions of those counts.
using ToyPredictor = std::function<double(const std::vector<int>& counts)>;

// Bayes posterior mean E[effect | counts] under the family.
ToyPredictor optimal_toy_predictor(const ToyFamily& family, int n);
// Ignores the data; predicts the prior mean.
ToyPredictor prior_mean_predictor(const ToyFamily& family);

// All four terms by exhaustive enumeration over (scm, dataset, epsilon).
// The infinite-data limit is the exact emission law, so SCMs sharing an
// emission vector form one identification class.
DecompositionReport exact_decomposition(const ToyFamily& family, int n, const ToyPredictor& predictor);

// Sample variance of the MC estimand across repetitions: a per-instance
// estimate of term A for real (non-enumerable) families.
double mc_error_term(const ScmInstance& instance, long K, int repetitions, RngStream& stream);

// Canonical test families: one where every effect is pinned down by the
// observational law, one where two effects share a law.
ToyFamily identifiable_toy_family();
ToyFamily confounded_toy_family();

}  // namespace ace

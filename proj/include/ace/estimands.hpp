#pragma once

#include <optional>
#include <string>

#include "ace/scm.hpp"

namespace ace {

enum class EstimandKind { Pate, Cate, Sate };

const char* estimand_kind_name(EstimandKind k);
EstimandKind estimand_kind_from_name(const std::string& name);

struct EffectNormalizer {
  double q05 = 0.0;
  double q95 = 1.0;
  double gap() const { return q95 - q05; }
};

// An estimand request/result pair.
struct EffectTarget {
  EstimandKind kind = EstimandKind::Pate;
  long mc_samples = 1;  // K
  std::optional<Vector> query;  // CATE only
  double value = 0.0;
  std::optional<EffectNormalizer> normalizer;

  void validate() const;
};

// Monte-Carlo ground-truth effects from a known instance.
//
// Binary treatment: mean over K draws of the do(t=1) vs do(t=0) outcome
// difference. Continuous treatment: mean one-unit forward difference with t
// drawn from the instance's own observational treatment law.
EffectTarget pate(const ScmInstance& instance, long K, RngStream& stream);
EffectTarget cate(const ScmInstance& instance, const Vector& query_x, long K, RngStream& stream);
// Mean unit-level effect over the rows of a latent table.
EffectTarget sate(const ScmInstance& instance, const FullTable& table, RngStream& stream);

// Empirical quantiles with linear interpolation between order statistics.
double quantile(const Vector& values, double p);

// Divides by the observed outcomes' (q95 - q05) gap and records it.
std::pair<double, EffectNormalizer> normalize_effect(double value, const Vector& observed_outcomes);
double unnormalize_effect(double normalized, const EffectNormalizer& normalizer);

}  // namespace ace

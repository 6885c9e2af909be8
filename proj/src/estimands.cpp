#include "ace/estimands.hpp"

#include <algorithm>
#include <cmath>

namespace ace {

const char* estimand_kind_name(EstimandKind k) {
  switch (k) {
    case EstimandKind::Pate: return "pate";
    case EstimandKind::Cate: return "cate";
    case EstimandKind::Sate: return "sate";
  }
  return "unknown";
}

EstimandKind estimand_kind_from_name(const std::string& name) {
  if (name == "pate") return EstimandKind::Pate;
  if (name == "cate") return EstimandKind::Cate;
  if (name == "sate") return EstimandKind::Sate;
  throw contract_error("unknown estimand kind: " + name);
}

void EffectTarget::validate() const {
  if (mc_samples < 1) throw param_error("effect target: K must be >= 1");
  if (kind == EstimandKind::Cate && !query) throw contract_error("cate target requires a query");
  if (kind != EstimandKind::Cate && query) throw contract_error("only cate targets carry a query");
  if (normalizer && !(normalizer->q95 > normalizer->q05))
    throw contract_error("effect target: normalizer must have q95 > q05");
}

namespace {

// One MC draw of the interventional contrast at covariate x.
double effect_draw(const ScmInstance& instance, const Vector& x, RngStream& stream) {
  const int d = instance.dim();
  Vector u_y(d);
  for (int j = 0; j < d; ++j) u_y(j) = stream.next_normal(0.0, 1.0);

  if (instance.treatment_kind == TreatmentKind::Binary) {
    return intervene_outcome(instance, x, 1.0, u_y) - intervene_outcome(instance, x, 0.0, u_y);
  }
  // continuous: one-unit increase from an observational draw of t
  Vector u_t(d);
  for (int j = 0; j < d; ++j) u_t(j) = stream.next_normal(0.0, 1.0);
  const double t = instance.treatment_score(x, u_t);
  return intervene_outcome(instance, x, t + 1.0, u_y) - intervene_outcome(instance, x, t, u_y);
}

}  // namespace

EffectTarget pate(const ScmInstance& instance, long K, RngStream& stream) {
  if (K < 1) throw param_error("pate: K must be >= 1");
  const int d = instance.dim();
  double acc = 0.0;
  Vector x(d);
  for (long k = 0; k < K; ++k) {
    for (int j = 0; j < d; ++j) x(j) = stream.next_normal(0.0, 1.0);
    acc += effect_draw(instance, x, stream);
  }
  EffectTarget target;
  target.kind = EstimandKind::Pate;
  target.mc_samples = K;
  target.value = acc / static_cast<double>(K);
  return target;
}

EffectTarget cate(const ScmInstance& instance, const Vector& query_x, long K, RngStream& stream) {
  if (K < 1) throw param_error("cate: K must be >= 1");
  if (query_x.size() != instance.dim()) throw param_error("cate: query dimension mismatch");
  double acc = 0.0;
  for (long k = 0; k < K; ++k) acc += effect_draw(instance, query_x, stream);
  EffectTarget target;
  target.kind = EstimandKind::Cate;
  target.mc_samples = K;
  target.query = query_x;
  target.value = acc / static_cast<double>(K);
  return target;
}

EffectTarget sate(const ScmInstance& instance, const FullTable& table, RngStream& stream) {
  (void)stream;  // additive-noise surfaces need no extra draws per unit
  if (table.x.cols() != instance.dim()) throw contract_error("sate: latent covariates missing or mismatched");
  if (table.rows() < 1) throw contract_error("sate: empty table");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const Vector x = table.x.row(i).transpose();
    const Vector u_y = table.u_y.row(i).transpose();
    if (instance.treatment_kind == TreatmentKind::Binary) {
      acc += intervene_outcome(instance, x, 1.0, u_y) - intervene_outcome(instance, x, 0.0, u_y);
    } else {
      const double t = table.t(i);
      acc += intervene_outcome(instance, x, t + 1.0, u_y) - intervene_outcome(instance, x, t, u_y);
    }
  }
  EffectTarget target;
  target.kind = EstimandKind::Sate;
  target.mc_samples = 1;
  target.value = acc / static_cast<double>(table.rows());
  return target;
}

double quantile(const Vector& values, double p) {
  if (values.size() < 1) throw param_error("quantile: empty input");
  if (!(p >= 0.0 && p <= 1.0)) throw param_error("quantile: p must be in [0,1]");
  std::vector<double> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  const double h = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::pair<double, EffectNormalizer> normalize_effect(double value, const Vector& observed_outcomes) {
  EffectNormalizer norm;
  norm.q05 = quantile(observed_outcomes, 0.05);
  norm.q95 = quantile(observed_outcomes, 0.95);
  if (norm.gap() < 1e-12) throw Error(ErrorCode::Degenerate, "normalize_effect: degenerate outcomes (q95 - q05 < 1e-12)");
  return {value / norm.gap(), norm};
}

double unnormalize_effect(double normalized, const EffectNormalizer& normalizer) {
  return normalized * normalizer.gap();
}

}  // namespace ace

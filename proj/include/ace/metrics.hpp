#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ace/scm.hpp"

namespace ace {

// R^2 / RMSE plus the variants with out-of-range predictions dropped
// (Tables compare methods with and without a [-2, 2] prediction filter).
struct MetricsReport {
  std::optional<double> r2;  // absent when the truths are constant
  double rmse = 0.0;
  std::optional<double> r2_filtered;
  std::optional<double> rmse_filtered;
  long n_total = 0;
  long n_filtered = 0;  // pairs kept by the filter
};

MetricsReport compute_metrics(const Vector& predictions, const Vector& truths,
                              std::optional<std::pair<double, double>> filter_range = std::nullopt);

struct BucketReport {
  double lo = 0.0;
  double hi = 0.0;
  bool empty = false;
  long count = 0;
  MetricsReport metrics;
};

inline const std::vector<double>& default_strength_edges() {
  static const std::vector<double> edges = {0.0, 0.1, 0.2, 0.4, 0.7, 1.0};
  return edges;
}

// Buckets IV datasets by instrument strength |rho| and reports metrics per
// bucket. Empty buckets come back flagged rather than silently dropped.
std::vector<BucketReport> strength_buckets(const Vector& strengths, const Vector& predictions,
                                           const Vector& truths,
                                           const std::vector<double>& edges = default_strength_edges());

// Empirical instrument strength: |corr(t, u)| for a scalar instrument, the
// multiple correlation of t on the instrument block otherwise.
double instrument_strength(const ObservedDataset& dataset);
double analytic_instrument_strength(const Vector& gamma_x, const Vector& gamma_t);

// Display convention: non-positive R^2 renders as "<= 0".
std::string render_r2(const std::optional<double>& r2);

nlohmann::json metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& j);
nlohmann::json buckets_to_json(const std::vector<BucketReport>& buckets);

// Aligned text table: one row per (setting, model) with R^2 and RMSE
// columns per dataset size.
struct TableEntry {
  std::string setting;
  std::string model;
  std::map<long, MetricsReport> by_size;
};
std::string render_table(const std::vector<TableEntry>& entries);

}  // namespace ace

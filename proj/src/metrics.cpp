#include "ace/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace ace {

namespace {

MetricsReport basic_metrics(const Vector& predictions, const Vector& truths) {
  MetricsReport r;
  r.n_total = truths.size();
  const double ss_res = (predictions - truths).squaredNorm();
  r.rmse = std::sqrt(ss_res / static_cast<double>(truths.size()));
  const double mean = truths.mean();
  const double ss_tot = (truths.array() - mean).matrix().squaredNorm();
  if (ss_tot > 0.0) r.r2 = 1.0 - ss_res / ss_tot;
  return r;
}

}  // namespace

MetricsReport compute_metrics(const Vector& predictions, const Vector& truths,
                              std::optional<std::pair<double, double>> filter_range) {
  if (predictions.size() != truths.size()) throw param_error("compute_metrics: length mismatch");
  if (truths.size() < 2) throw param_error("compute_metrics: need at least 2 pairs");

  MetricsReport r = basic_metrics(predictions, truths);
  if (filter_range) {
    std::vector<double> keep_p, keep_t;
    for (Eigen::Index i = 0; i < predictions.size(); ++i) {
      if (predictions(i) >= filter_range->first && predictions(i) <= filter_range->second) {
        keep_p.push_back(predictions(i));
        keep_t.push_back(truths(i));
      }
    }
    r.n_filtered = static_cast<long>(keep_p.size());
    if (keep_p.size() >= 2) {
      Vector p = Eigen::Map<Vector>(keep_p.data(), static_cast<Eigen::Index>(keep_p.size()));
      Vector t = Eigen::Map<Vector>(keep_t.data(), static_cast<Eigen::Index>(keep_t.size()));
      MetricsReport f = basic_metrics(p, t);
      r.r2_filtered = f.r2;
      r.rmse_filtered = f.rmse;
    }
  } else {
    r.n_filtered = r.n_total;
  }
  return r;
}

std::vector<BucketReport> strength_buckets(const Vector& strengths, const Vector& predictions,
                                           const Vector& truths, const std::vector<double>& edges) {
  if (strengths.size() != predictions.size() || strengths.size() != truths.size())
    throw param_error("strength_buckets: length mismatch");
  if (edges.size() < 2) throw param_error("strength_buckets: need at least 2 edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw param_error("strength_buckets: edges must increase");

  std::vector<BucketReport> out;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    BucketReport bucket;
    bucket.lo = edges[b];
    bucket.hi = edges[b + 1];
    std::vector<double> p, t;
    for (Eigen::Index i = 0; i < strengths.size(); ++i) {
      const double s = strengths(i);
      const bool last = b + 2 == edges.size();
      if (s >= bucket.lo && (s < bucket.hi || (last && s <= bucket.hi))) {
        p.push_back(predictions(i));
        t.push_back(truths(i));
      }
    }
    bucket.count = static_cast<long>(p.size());
    if (bucket.count < 2) {
      bucket.empty = true;
    } else {
      Vector pv = Eigen::Map<Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
      Vector tv = Eigen::Map<Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
      bucket.metrics = compute_metrics(pv, tv);
    }
    out.push_back(std::move(bucket));
  }
  return out;
}

double instrument_strength(const ObservedDataset& dataset) {
  if (dataset.u_t.cols() == 0) throw contract_error("instrument_strength: dataset has no instrument");
  const Vector t = dataset.t;
  const Vector tc = (t.array() - t.mean()).matrix();
  const double t_var = tc.squaredNorm();
  if (t_var <= 0.0) return 0.0;

  if (dataset.u_t.cols() == 1) {
    const Vector u = dataset.u_t.col(0);
    const Vector uc = (u.array() - u.mean()).matrix();
    const double denom = std::sqrt(t_var * uc.squaredNorm());
    return denom > 0.0 ? std::abs(tc.dot(uc) / denom) : 0.0;
  }
  // multiple correlation via least squares of t on (1, u)
  Matrix design(dataset.rows(), dataset.u_t.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(dataset.u_t.cols()) = dataset.u_t;
  const Vector coef = design.colPivHouseholderQr().solve(t);
  const Vector fitted = design * coef;
  const double ss_fit = (fitted.array() - t.mean()).matrix().squaredNorm();
  return std::sqrt(std::min(1.0, std::max(0.0, ss_fit / t_var)));
}

double analytic_instrument_strength(const Vector& gamma_x, const Vector& gamma_t) {
  const double gt = gamma_t.squaredNorm();
  const double gx = gamma_x.squaredNorm();
  if (gt + gx <= 0.0) return 0.0;
  return std::sqrt(gt / (gt + gx));
}

std::string render_r2(const std::optional<double>& r2) {
  if (!r2) return "undef";
  if (*r2 <= 0.0) return "<= 0";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *r2);
  return buf;
}

namespace {

std::string render_rmse(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

nlohmann::json metrics_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["rmse"] = report.rmse;
  j["n_total"] = report.n_total;
  j["n_filtered"] = report.n_filtered;
  if (report.r2) j["r2"] = *report.r2;
  if (report.r2_filtered) j["r2_filtered"] = *report.r2_filtered;
  if (report.rmse_filtered) j["rmse_filtered"] = *report.rmse_filtered;
  return j;
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.rmse = j.at("rmse").get<double>();
  r.n_total = j.at("n_total").get<long>();
  r.n_filtered = j.at("n_filtered").get<long>();
  if (j.contains("r2")) r.r2 = j.at("r2").get<double>();
  if (j.contains("r2_filtered")) r.r2_filtered = j.at("r2_filtered").get<double>();
  if (j.contains("rmse_filtered")) r.rmse_filtered = j.at("rmse_filtered").get<double>();
  return r;
}

nlohmann::json buckets_to_json(const std::vector<BucketReport>& buckets) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : buckets) {
    nlohmann::json j;
    j["lo"] = b.lo;
    j["hi"] = b.hi;
    j["count"] = b.count;
    j["empty"] = b.empty;
    if (!b.empty) j["metrics"] = metrics_to_json(b.metrics);
    arr.push_back(std::move(j));
  }
  return arr;
}

std::string render_table(const std::vector<TableEntry>& entries) {
  std::set<long> sizes;
  for (const auto& e : entries)
    for (const auto& [n, m] : e.by_size) sizes.insert(n);

  std::size_t setting_w = 7, model_w = 5;
  for (const auto& e : entries) {
    setting_w = std::max(setting_w, e.setting.size());
    model_w = std::max(model_w, e.model.size());
  }

  std::ostringstream os;
  auto pad = [&](const std::string& s, std::size_t w) {
    os << s;
    for (std::size_t i = s.size(); i < w + 2; ++i) os << ' ';
  };
  pad("Setting", setting_w);
  pad("Model", model_w);
  for (long n : sizes) pad("R2(N=" + std::to_string(n) + ")", 10);
  for (long n : sizes) pad("RMSE(N=" + std::to_string(n) + ")", 12);
  os << '\n';

  for (const auto& e : entries) {
    pad(e.setting, setting_w);
    pad(e.model, model_w);
    for (long n : sizes) {
      auto it = e.by_size.find(n);
      pad(it == e.by_size.end() ? "-" : render_r2(it->second.r2), 10);
    }
    for (long n : sizes) {
      auto it = e.by_size.find(n);
      pad(it == e.by_size.end() ? "-" : render_rmse(it->second.rmse), 12);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace ace

#include "ace/data_bridge.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "ace/dataset_io.hpp"

namespace ace {

TableSchema TableSchema::from_json(const nlohmann::json& j) {
  TableSchema s;
  for (auto it = j.at("columns").begin(); it != j.at("columns").end(); ++it) {
    const std::string role = it.value().get<std::string>();
    if (role == "covariate") s.roles[it.key()] = ColumnRole::Covariate;
    else if (role == "treatment") s.roles[it.key()] = ColumnRole::Treatment;
    else if (role == "outcome") s.roles[it.key()] = ColumnRole::Outcome;
    else if (role == "group_flag") s.roles[it.key()] = ColumnRole::GroupFlag;
    else throw contract_error("schema: unknown role " + role);
  }
  return s;
}

nlohmann::json TableSchema::to_json() const {
  nlohmann::json cols = nlohmann::json::object();
  for (const auto& [name, role] : roles) {
    switch (role) {
      case ColumnRole::Covariate: cols[name] = "covariate"; break;
      case ColumnRole::Treatment: cols[name] = "treatment"; break;
      case ColumnRole::Outcome: cols[name] = "outcome"; break;
      case ColumnRole::GroupFlag: cols[name] = "group_flag"; break;
    }
  }
  return {{"columns", cols}};
}

Matrix RealTable::standardized() const { return standardized_with(x_mean, x_sd); }

Matrix RealTable::standardized_with(const Vector& mean, const Vector& sd) const {
  Matrix out = x;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    out.col(j) = (out.col(j).array() - mean(j)) / sd(j);
  return out;
}

RealTable read_table_csv(std::istream& is, const TableSchema& schema) {
  std::string line;
  if (!std::getline(is, line)) throw contract_error("table: missing header");
  std::vector<std::string> names;
  {
    std::stringstream header(line);
    std::string tok;
    while (std::getline(header, tok, ',')) names.push_back(tok);
  }

  std::vector<int> covariate_cols, treatment_cols, outcome_cols, group_cols;
  for (std::size_t j = 0; j < names.size(); ++j) {
    auto it = schema.roles.find(names[j]);
    if (it == schema.roles.end()) continue;  // undeclared columns are ignored
    switch (it->second) {
      case ColumnRole::Covariate: covariate_cols.push_back(static_cast<int>(j)); break;
      case ColumnRole::Treatment: treatment_cols.push_back(static_cast<int>(j)); break;
      case ColumnRole::Outcome: outcome_cols.push_back(static_cast<int>(j)); break;
      case ColumnRole::GroupFlag: group_cols.push_back(static_cast<int>(j)); break;
    }
  }
  for (const auto& [name, role] : schema.roles) {
    if (std::find(names.begin(), names.end(), name) == names.end())
      throw contract_error("table: declared column missing from header: " + name);
  }
  if (treatment_cols.size() != 1) throw contract_error("table: exactly one treatment column required");
  if (outcome_cols.size() != 1) throw contract_error("table: exactly one outcome column required");
  if (covariate_cols.empty()) throw contract_error("table: at least one covariate column required");
  if (group_cols.size() > 1) throw contract_error("table: at most one group flag column");

  std::vector<std::vector<double>> kept;
  long dropped = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string tok;
    std::vector<double> values;
    bool bad = false;
    std::size_t col = 0;
    while (std::getline(row, tok, ',')) {
      if (col++ >= names.size()) {
        bad = true;
        break;
      }
      if (tok.empty()) {
        values.push_back(std::numeric_limits<double>::quiet_NaN());
        bad = true;  // a gap; keep scanning to count columns
        continue;
      }
      try {
        std::size_t used = 0;
        values.push_back(std::stod(tok, &used));
        if (used != tok.size()) bad = true;
      } catch (...) {
        bad = true;
        values.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    if (col != names.size()) bad = true;
    if (bad) {
      ++dropped;
      continue;
    }
    kept.push_back(std::move(values));
  }

  RealTable table;
  table.report.rows_kept = static_cast<long>(kept.size());
  table.report.rows_dropped = dropped;
  const Eigen::Index n = static_cast<Eigen::Index>(kept.size());
  if (n < 2) throw contract_error("table: fewer than 2 usable rows");

  for (int j : covariate_cols) table.covariate_names.push_back(names[static_cast<std::size_t>(j)]);
  table.x.resize(n, static_cast<Eigen::Index>(covariate_cols.size()));
  table.t.resize(n);
  table.y.resize(n);
  if (!group_cols.empty()) table.group.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < covariate_cols.size(); ++j)
      table.x(i, static_cast<Eigen::Index>(j)) = kept[static_cast<std::size_t>(i)][static_cast<std::size_t>(covariate_cols[j])];
    table.t(i) = kept[static_cast<std::size_t>(i)][static_cast<std::size_t>(treatment_cols[0])];
    table.y(i) = kept[static_cast<std::size_t>(i)][static_cast<std::size_t>(outcome_cols[0])];
    if (!group_cols.empty())
      table.group(i) = kept[static_cast<std::size_t>(i)][static_cast<std::size_t>(group_cols[0])];
  }

  for (Eigen::Index i = 0; i < n; ++i)
    if (table.t(i) != 0.0 && table.t(i) != 1.0)
      throw contract_error("table: declared treatment column is not binary");

  table.x_mean = table.x.colwise().mean();
  table.x_sd.resize(table.x.cols());
  for (Eigen::Index j = 0; j < table.x.cols(); ++j) {
    const double sd = std::sqrt((table.x.col(j).array() - table.x_mean(j)).square().mean());
    table.x_sd(j) = sd > 1e-12 ? sd : 1.0;
  }
  return table;
}

RealTable load_table(const std::string& csv_path, const TableSchema& schema) {
  std::ifstream is(csv_path);
  if (!is) throw contract_error("cannot open: " + csv_path);
  return read_table_csv(is, schema);
}

// ---------------------------------------------------------------------------

const char* bridge_surface_kind_name(BridgeSurfaceKind k) {
  switch (k) {
    case BridgeSurfaceKind::Linear: return "linear";
    case BridgeSurfaceKind::RandomMlp: return "random_mlp";
    case BridgeSurfaceKind::SurfaceA: return "surface_a";
    case BridgeSurfaceKind::SurfaceB: return "surface_b";
  }
  return "unknown";
}

BridgeSurfaceKind bridge_surface_kind_from_name(const std::string& name) {
  if (name == "linear") return BridgeSurfaceKind::Linear;
  if (name == "random_mlp") return BridgeSurfaceKind::RandomMlp;
  if (name == "surface_a") return BridgeSurfaceKind::SurfaceA;
  if (name == "surface_b") return BridgeSurfaceKind::SurfaceB;
  throw contract_error("unknown bridge surface kind: " + name);
}

namespace {

double pick_weighted(RngStream& stream, const std::vector<double>& values,
                     const std::vector<double>& weights) {
  const double u = stream.next_unit();
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += weights[i];
    if (u < acc) return values[i];
  }
  return values.back();
}

}  // namespace

BridgeSurface sample_bridge_surface(BridgeSurfaceKind kind, const Matrix& x, const Vector& t,
                                    RngStream& stream) {
  const Eigen::Index d = x.cols();
  switch (kind) {
    case BridgeSurfaceKind::Linear: {
      LinearBridgeSurface s;
      s.beta = draw_vector(stream, Law::uniform(-1.0, 1.0), d);
      s.tau = stream.next_uniform(-1.0, 1.0);
      return s;
    }
    case BridgeSurfaceKind::SurfaceA: {
      SurfaceASurface s;
      s.beta.resize(d);
      for (Eigen::Index j = 0; j < d; ++j)
        s.beta(j) = pick_weighted(stream, {0.0, 1.0, 2.0, 3.0, 4.0}, {0.5, 0.2, 0.15, 0.1, 0.05});
      s.tau = 4.0;
      return s;
    }
    case BridgeSurfaceKind::SurfaceB: {
      SurfaceBSurface s;
      s.beta.resize(d);
      for (Eigen::Index j = 0; j < d; ++j)
        s.beta(j) = pick_weighted(stream, {0.0, 0.1, 0.2, 0.3, 0.4}, {0.6, 0.1, 0.1, 0.1, 0.1});
      // offset chosen so the control-group mean effect equals 4
      double acc = 0.0;
      long controls = 0;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (t(i) > 0.5) continue;
        const double treated = x.row(i).transpose().dot(s.beta);
        const double control = std::exp(((x.row(i).transpose().array() + 0.5) * s.beta.array()).sum());
        acc += treated - control;
        ++controls;
      }
      if (controls == 0) throw contract_error("surface B: no control rows to calibrate against");
      s.omega = acc / static_cast<double>(controls) - 4.0;
      return s;
    }
    case BridgeSurfaceKind::RandomMlp: {
      MlpBridgeSurface s;
      constexpr int hidden = 10;
      s.w1 = draw(stream, Law::uniform(-1.0, 1.0), hidden, d + 1);
      s.b1 = draw_vector(stream, Law::uniform(-1.0, 1.0), hidden);
      s.w2 = draw_vector(stream, Law::uniform(-1.0, 1.0), hidden);
      s.b2 = stream.next_uniform(-1.0, 1.0);
      s.scale = 1.0;
      // calibrate so raw outputs over the source rows have sd ~ 1
      Vector raw(x.rows());
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        raw(i) = evaluate_bridge_surface(s, x.row(i).transpose(), t(i));
      const double sd = std::sqrt((raw.array() - raw.mean()).square().mean());
      s.scale = sd > 1e-9 ? 1.0 / sd : 1.0;
      return s;
    }
  }
  throw param_error("sample_bridge_surface: bad kind");
}

double evaluate_bridge_surface(const BridgeSurface& surface, const Vector& x, double t) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LinearBridgeSurface>) {
          return s.beta.dot(x) + s.tau * t;
        } else if constexpr (std::is_same_v<T, SurfaceASurface>) {
          return s.beta.dot(x) + s.tau * t;
        } else if constexpr (std::is_same_v<T, SurfaceBSurface>) {
          if (t > 0.5) return s.beta.dot(x) - s.omega;
          return std::exp(((x.array() + 0.5) * s.beta.array()).sum());
        } else {
          Vector in(x.size() + 1);
          in.head(x.size()) = x;
          in(x.size()) = t;
          Vector h = s.w1 * in + s.b1;
          for (Eigen::Index i = 0; i < h.size(); ++i)
            if (h(i) < 0.0) h(i) *= 0.01;
          return s.scale * (s.w2.dot(h) + s.b2);
        }
      },
      surface);
}

double bridge_surface_sate(const BridgeSurface& surface, const Matrix& x) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector row = x.row(i).transpose();
    acc += evaluate_bridge_surface(surface, row, 1.0) - evaluate_bridge_surface(surface, row, 0.0);
  }
  return acc / static_cast<double>(x.rows());
}

// ---------------------------------------------------------------------------

ConditionedFamily condition_family(const RealTable& table, BridgeSurfaceKind surface_kind,
                                   double noise_scale, ResampleMode mode, Eigen::Index dataset_size) {
  if (table.dim() < 1) throw contract_error("condition_family: table has no covariates");
  if (noise_scale < 0.0) throw param_error("condition_family: negative noise scale");
  ConditionedFamily family;
  family.source = table;
  family.mode = mode;
  family.surface_kind = surface_kind;
  family.noise_scale = noise_scale;
  family.dataset_size = dataset_size == 0 ? table.rows() : dataset_size;
  if (mode == ResampleMode::RowsAsIs && family.dataset_size > table.rows())
    throw contract_error("condition_family: rows-as-is cannot exceed the source size");
  return family;
}

ConditionedDraw sample_conditioned(const ConditionedFamily& family, RngStream& stream) {
  const RealTable& src = family.source;
  const Eigen::Index n = family.dataset_size;

  Matrix x_std(n, src.dim());
  Vector t(n);
  const Matrix all_std = src.standardized();
  if (family.mode == ResampleMode::RowsAsIs) {
    x_std = all_std.topRows(n);
    t = src.t.head(n);
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index pick = static_cast<Eigen::Index>(stream.next_u64() % static_cast<std::uint64_t>(src.rows()));
      x_std.row(i) = all_std.row(pick);
      t(i) = src.t(pick);
    }
  }

  BridgeSurface surface = sample_bridge_surface(family.surface_kind, x_std, t, stream);

  ConditionedDraw out;
  out.dataset.structure = Structure::Confounder;
  out.dataset.x = x_std;
  out.dataset.t = t;
  out.dataset.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double noise = family.noise_scale > 0.0 ? stream.next_normal(0.0, family.noise_scale) : 0.0;
    out.dataset.y(i) = evaluate_bridge_surface(surface, x_std.row(i).transpose(), t(i)) + noise;
  }
  out.dataset.validate();
  out.sate = bridge_surface_sate(surface, x_std);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Eigen::Index> sample_without_replacement(Eigen::Index count, Eigen::Index pool,
                                                     RngStream& stream) {
  if (count > pool) throw contract_error("sampling without replacement: pool exhausted");
  // partial Fisher-Yates over the index range
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(pool));
  for (Eigen::Index i = 0; i < pool; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::Index j = i + static_cast<Eigen::Index>(stream.next_u64() % static_cast<std::uint64_t>(pool - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

}  // namespace

ComposedSample compose_confounded(const RealTable& randomized, const RealTable& observational_controls,
                                  Eigen::Index n, RngStream& stream) {
  if (randomized.dim() != observational_controls.dim() ||
      randomized.covariate_names != observational_controls.covariate_names)
    throw contract_error("compose: covariate schemas differ");
  if (n < 2 || n > randomized.rows()) throw param_error("compose: bad sample size");

  const std::vector<Eigen::Index> take = sample_without_replacement(n, randomized.rows(), stream);

  // observational pool: control rows only
  std::vector<Eigen::Index> pool;
  for (Eigen::Index i = 0; i < observational_controls.rows(); ++i)
    if (observational_controls.t(i) < 0.5) pool.push_back(i);

  ComposedSample out;
  out.x.resize(n, randomized.dim());
  out.t.resize(n);
  out.y.resize(n);
  out.from_randomized.resize(n);

  Eigen::Index controls_needed = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (randomized.t(take[static_cast<std::size_t>(i)]) < 0.5) ++controls_needed;
  if (controls_needed > static_cast<Eigen::Index>(pool.size()))
    throw contract_error("compose: observational control pool exhausted");

  std::vector<Eigen::Index> replacement =
      sample_without_replacement(controls_needed, static_cast<Eigen::Index>(pool.size()), stream);

  Eigen::Index next_control = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = take[static_cast<std::size_t>(i)];
    if (randomized.t(r) > 0.5) {
      out.x.row(i) = randomized.x.row(r);
      out.t(i) = 1.0;
      out.y(i) = randomized.y(r);
      out.from_randomized(i) = 1.0;
    } else {
      const Eigen::Index o = pool[static_cast<std::size_t>(replacement[static_cast<std::size_t>(next_control++)])];
      out.x.row(i) = observational_controls.x.row(o);
      out.t(i) = 0.0;
      out.y(i) = observational_controls.y(o);
      out.from_randomized(i) = 0.0;
    }
  }
  return out;
}

SemisyntheticCase semisynthetic_case(const RealTable& randomized, const RealTable& observational,
                                     Eigen::Index n, BridgeSurfaceKind kind, double noise_scale,
                                     std::uint64_t seed, std::uint64_t index) {
  // composition and outcome simulation run on separate lanes so the (x, t)
  // block is shared byte-for-byte between the two views
  RngStream compose_stream = RngStream(seed, 0x434f4d50).fork(index);
  RngStream outcome_stream = RngStream(seed, 0x4f555443).fork(index);

  // the randomized sample itself provides the reference
  const std::vector<Eigen::Index> take = sample_without_replacement(n, randomized.rows(), compose_stream);
  double sum1 = 0.0, sum0 = 0.0;
  long n1 = 0, n0 = 0;
  for (Eigen::Index r : take) {
    if (randomized.t(r) > 0.5) {
      sum1 += randomized.y(r);
      ++n1;
    } else {
      sum0 += randomized.y(r);
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0) throw contract_error("semisynthetic: randomized sample lost an arm");

  // rebuild the same composition (same stream state sequence)
  RngStream replay = RngStream(seed, 0x434f4d50).fork(index);
  ComposedSample composed = compose_confounded(randomized, observational, n, replay);

  SemisyntheticCase out;
  out.size = n;
  out.provenance = composed.from_randomized;
  out.reference_sate = sum1 / n1 - sum0 / n0;

  Matrix x_std = composed.x;
  for (Eigen::Index j = 0; j < x_std.cols(); ++j)
    x_std.col(j) = (x_std.col(j).array() - randomized.x_mean(j)) / randomized.x_sd(j);

  out.real.structure = Structure::Confounder;
  out.real.x = x_std;
  out.real.t = composed.t;
  out.real.y = composed.y;
  out.real.validate();

  BridgeSurface surface = sample_bridge_surface(kind, x_std, composed.t, outcome_stream);
  out.simulated.structure = Structure::Confounder;
  out.simulated.x = x_std;
  out.simulated.t = composed.t;
  out.simulated.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double noise = noise_scale > 0.0 ? outcome_stream.next_normal(0.0, noise_scale) : 0.0;
    out.simulated.y(i) = evaluate_bridge_surface(surface, x_std.row(i).transpose(), composed.t(i)) + noise;
  }
  out.simulated.validate();
  out.surface_sate = bridge_surface_sate(surface, x_std);
  return out;
}

SemisyntheticCorpora semisynthetic_train_eval_split(const RealTable& randomized,
                                                    const RealTable& observational,
                                                    const SemisyntheticSpec& spec) {
  SemisyntheticCorpora out;
  std::uint64_t index = 0;
  for (Eigen::Index n : spec.sizes) {
    for (int c = 0; c < spec.cases_per_size; ++c) {
      out.cases.push_back(semisynthetic_case(randomized, observational, n, spec.surface_kind,
                                             spec.noise_scale, spec.seed, index++));
    }
  }
  return out;
}

void write_semisynthetic_corpus(const std::string& dir, const SemisyntheticCorpora& corpora,
                                const SemisyntheticSpec& spec) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  // provenance hash covers every case's flag column in order
  std::string provenance_bytes;
  nlohmann::json sizes = nlohmann::json::array();

  std::map<Eigen::Index, int> counters;
  nlohmann::json files = nlohmann::json::array();
  for (const SemisyntheticCase& c : corpora.cases) {
    const int k = counters[c.size]++;
    const std::string subdir = dir + "/size_" + std::to_string(c.size);
    fs::create_directories(subdir);
    char sim_name[64], real_name[64];
    std::snprintf(sim_name, sizeof(sim_name), "sim_%04d.csv", k);
    std::snprintf(real_name, sizeof(real_name), "real_%04d.csv", k);
    {
      std::ofstream os(subdir + "/" + sim_name);
      write_observed_csv(os, c.simulated);
    }
    {
      std::ofstream os(subdir + "/" + real_name);
      write_observed_csv(os, c.real);
    }
    for (Eigen::Index i = 0; i < c.provenance.size(); ++i)
      provenance_bytes.push_back(c.provenance(i) > 0.5 ? '1' : '0');
    files.push_back({{"size", c.size},
                     {"sim", sim_name},
                     {"real", real_name},
                     {"surface_sate", c.surface_sate},
                     {"reference_sate", c.reference_sate}});
  }
  for (Eigen::Index n : spec.sizes) sizes.push_back(n);

  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : provenance_bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char hash_hex[19];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx", static_cast<unsigned long long>(h));

  nlohmann::json manifest;
  manifest["kind"] = "semisynthetic-corpus";
  manifest["seed"] = spec.seed;
  manifest["rule"] = "randomized-sample-with-observational-controls";
  manifest["surface"] = bridge_surface_kind_name(spec.surface_kind);
  manifest["noise_scale"] = spec.noise_scale;
  manifest["sizes"] = sizes;
  manifest["cases_per_size"] = spec.cases_per_size;
  manifest["provenance_hash"] = hash_hex;
  manifest["files"] = files;
  std::ofstream os(dir + "/manifest.json");
  if (!os) throw contract_error("cannot write semisynthetic manifest");
  os << manifest.dump(2) << '\n';
}

}  // namespace ace

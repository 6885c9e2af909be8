#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ace/rng.hpp"
#include "ace/scm.hpp"

namespace ace {

enum class ColumnRole { Covariate, Treatment, Outcome, GroupFlag };

// Declared mapping from CSV column names to roles (the sidecar schema).
struct TableSchema {
  std::map<std::string, ColumnRole> roles;

  static TableSchema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct IngestReport {
  long rows_kept = 0;
  long rows_dropped = 0;  // rows with gaps or unparsable cells
};

// Ingested real tabular data. Covariates are stored raw alongside their
// standardization stats; standardized() is what models consume.
struct RealTable {
  std::vector<std::string> covariate_names;
  Matrix x;  // raw covariates
  Vector t;  // binary treatment
  Vector y;  // outcome
  Vector group;      // optional flag column; empty when undeclared
  Vector x_mean;     // per covariate column
  Vector x_sd;
  IngestReport report;

  Eigen::Index rows() const { return t.size(); }
  int dim() const { return static_cast<int>(x.cols()); }
  Matrix standardized() const;
  Matrix standardized_with(const Vector& mean, const Vector& sd) const;
};

RealTable load_table(const std::string& csv_path, const TableSchema& schema);
RealTable read_table_csv(std::istream& is, const TableSchema& schema);

// --- simulated outcome surfaces over real covariates -----------------------

enum class BridgeSurfaceKind { Linear, RandomMlp, SurfaceA, SurfaceB };
const char* bridge_surface_kind_name(BridgeSurfaceKind k);
BridgeSurfaceKind bridge_surface_kind_from_name(const std::string& name);

struct LinearBridgeSurface {
  Vector beta;  // d
  double tau = 0.0;
};

// linear response with sparse small-integer loadings and a constant shift
struct SurfaceASurface {
  Vector beta;
  double tau = 4.0;
};

// exponential control response; offset pins the control-group mean effect
struct SurfaceBSurface {
  Vector beta;
  double omega = 0.0;
};

struct MlpBridgeSurface {
  Matrix w1;  // hidden x (d + 1)
  Vector b1;
  Vector w2;
  double b2 = 0.0;
  double scale = 1.0;  // calibrated so outcomes have sd ~ 1 on the source rows
};

using BridgeSurface = std::variant<LinearBridgeSurface, SurfaceASurface, SurfaceBSurface, MlpBridgeSurface>;

// Samples a surface; (x, t) are the standardized conditioning rows, used for
// per-dataset calibration (MLP output scale, surface-B offset).
BridgeSurface sample_bridge_surface(BridgeSurfaceKind kind, const Matrix& x, const Vector& t,
                                    RngStream& stream);
double evaluate_bridge_surface(const BridgeSurface& surface, const Vector& x, double t);
// Mean over rows of the do(t=1) vs do(t=0) contrast.
double bridge_surface_sate(const BridgeSurface& surface, const Matrix& x);

// --- conditioned families ---------------------------------------------------

enum class ResampleMode { RowsAsIs, Bootstrap };

// An SCM family whose (x, t) law is the empirical distribution of a source
// table; only outcomes are simulated.
struct ConditionedFamily {
  RealTable source;
  ResampleMode mode = ResampleMode::RowsAsIs;
  BridgeSurfaceKind surface_kind = BridgeSurfaceKind::RandomMlp;
  double noise_scale = 0.1;
  Eigen::Index dataset_size = 0;  // 0 = all source rows (rows-as-is)
};

struct ConditionedDraw {
  ObservedDataset dataset;  // standardized x, source t, simulated y
  double sate = 0.0;        // surface ground truth for these rows
};

ConditionedDraw sample_conditioned(const ConditionedFamily& family, RngStream& stream);

ConditionedFamily condition_family(const RealTable& table, BridgeSurfaceKind surface_kind,
                                   double noise_scale, ResampleMode mode,
                                   Eigen::Index dataset_size = 0);

// --- randomized/observational composition -----------------------------------

struct ComposedSample {
  Matrix x;  // raw covariates
  Vector t;
  Vector y;  // real outcomes carried from the source rows
  Vector from_randomized;  // provenance flag per row
};

// Sample n units from the randomized table, then replace every control unit
// with a draw (without replacement) from the observational control pool.
ComposedSample compose_confounded(const RealTable& randomized, const RealTable& observational_controls,
                                  Eigen::Index n, RngStream& stream);

// --- semi-synthetic train/eval corpora --------------------------------------

struct SemisyntheticSpec {
  BridgeSurfaceKind surface_kind = BridgeSurfaceKind::RandomMlp;
  double noise_scale = 0.1;
  std::vector<Eigen::Index> sizes = {445, 200, 100};
  int cases_per_size = 10;
  std::uint64_t seed = 0;
};

// One composition rendered twice: simulated outcomes with the surface SATE
// (training view) and real outcomes with the randomized-sample mean
// difference as the reference (evaluation view). (x, t) blocks are shared.
struct SemisyntheticCase {
  Eigen::Index size = 0;
  ObservedDataset simulated;
  double surface_sate = 0.0;
  ObservedDataset real;
  double reference_sate = 0.0;
  Vector provenance;
};

SemisyntheticCase semisynthetic_case(const RealTable& randomized, const RealTable& observational,
                                     Eigen::Index n, BridgeSurfaceKind kind, double noise_scale,
                                     std::uint64_t seed, std::uint64_t index);

struct SemisyntheticCorpora {
  std::vector<SemisyntheticCase> cases;  // grouped by size, spec order
};

SemisyntheticCorpora semisynthetic_train_eval_split(const RealTable& randomized,
                                                    const RealTable& observational,
                                                    const SemisyntheticSpec& spec);

// Directory layout: size_<n>/sim_<k>.csv and real_<k>.csv pairs plus a
// manifest (seed, resampling rule, provenance hash over the flag columns).
void write_semisynthetic_corpus(const std::string& dir, const SemisyntheticCorpora& corpora,
                                const SemisyntheticSpec& spec);

}  // namespace ace

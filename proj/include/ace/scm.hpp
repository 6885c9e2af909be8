#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ace/errors.hpp"
#include "ace/rng.hpp"
#include "ace/surface.hpp"

namespace ace {

enum class Structure { Confounder, Instrument, Proxy, ConfounderPlusIv };
enum class TreatmentKind { Continuous, Binary };

const char* structure_name(Structure s);
Structure structure_from_name(const std::string& name);
const char* treatment_kind_name(TreatmentKind k);
TreatmentKind treatment_kind_from_name(const std::string& name);

// Sampling law for one coefficient symbol (per coordinate when d > 1).
struct ScalarPrior {
  enum class Kind { Uniform, SignedUniform, Constant };
  Kind kind = Kind::Uniform;
  double a = -1.0;  // low / magnitude-low / constant value
  double b = 1.0;   // high / magnitude-high

  static ScalarPrior uniform(double a, double b) { return {Kind::Uniform, a, b}; }
  // U(-b,-a) union U(a,b), equal mass on each sign
  static ScalarPrior signed_uniform(double a, double b) { return {Kind::SignedUniform, a, b}; }
  static ScalarPrior constant(double c) { return {Kind::Constant, c, c}; }

  double sample(RngStream& stream) const;
};

struct CoefficientPriors {
  ScalarPrior gamma_x = ScalarPrior::signed_uniform(1.0, 2.0);
  ScalarPrior gamma_t = ScalarPrior::uniform(-1.0, 1.0);
  ScalarPrior beta_x = ScalarPrior::signed_uniform(1.0, 2.0);
  ScalarPrior beta_t = ScalarPrior::uniform(-1.0, 1.0);
  ScalarPrior beta_y = ScalarPrior::uniform(-1.0, 1.0);
  ScalarPrior delta = ScalarPrior::uniform(0.0, 1.0);  // proxy noise scale (sd)
};

struct MixtureSpec {
  std::vector<SurfaceKind> kinds = {SurfaceKind::RandomMlp, SurfaceKind::RandomSpline, SurfaceKind::RandomTree};
  std::vector<double> weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
};

// A distribution over SCM instances.
struct ScmFamily {
  Structure structure = Structure::Confounder;
  TreatmentKind treatment_kind = TreatmentKind::Continuous;
  SurfaceKind surface_kind = SurfaceKind::Linear;
  int covariate_dim = 1;
  CoefficientPriors priors;
  MixtureSpec mixture;

  void validate() const;
};

// A concrete data-generating process.
struct ScmInstance {
  Structure structure = Structure::Confounder;
  TreatmentKind treatment_kind = TreatmentKind::Continuous;
  Vector gamma_x;  // d
  Vector gamma_t;  // d (multiplies the instrument noise vector)
  Vector beta_x;   // d
  Vector beta_y;   // d (multiplies the outcome noise vector)
  double beta_t = 0.0;
  double delta1 = 0.5;
  double delta2 = 0.5;
  SurfaceFn surface = LinearSurface{};

  int dim() const { return static_cast<int>(gamma_x.size()); }
  double treatment_score(const Vector& x, const Vector& u_t) const {
    return gamma_x.dot(x) + gamma_t.dot(u_t);
  }
};

// Latent table: every column of the generative process, before projection.
struct FullTable {
  Matrix x;    // N x d
  Matrix u_t;  // N x d
  Matrix u_y;  // N x d
  Matrix w1;   // N x d
  Matrix w2;   // N x d
  Vector t;    // N
  Vector y;    // N

  Eigen::Index rows() const { return t.size(); }
  int dim() const { return static_cast<int>(x.cols()); }
};

// Role-tagged observable projection; absent roles have zero columns.
struct ObservedDataset {
  Structure structure = Structure::Confounder;
  Vector t;
  Vector y;
  Matrix x;    // covariates (Confounder, ConfounderPlusIv)
  Matrix u_t;  // instrument (Instrument, ConfounderPlusIv)
  Matrix w1;   // proxies (Proxy)
  Matrix w2;

  Eigen::Index rows() const { return t.size(); }

  bool treatment_is_binary() const {
    for (Eigen::Index i = 0; i < t.size(); ++i)
      if (t(i) != 0.0 && t(i) != 1.0) return false;
    return true;
  }

  // Fixed role order used everywhere a flat row matrix is needed:
  // treatment, outcome, then setting-specific columns.
  Matrix to_matrix() const;
  Eigen::Index feature_count() const;
  void validate() const;
};

ScmInstance sample_scm(const ScmFamily& family, RngStream& stream);
FullTable sample_full_dataset(const ScmInstance& instance, Eigen::Index n, RngStream& stream);
ObservedDataset observe(const FullTable& table, Structure structure);

// Outcome under do(t = t_value): the treatment equation is bypassed.
double intervene_outcome(const ScmInstance& instance, const Vector& x, double t_value, const Vector& u_y);

double sigmoid(double v);

}  // namespace ace

#include "ace/scm.hpp"

#include <cmath>

namespace ace {

const char* structure_name(Structure s) {
  switch (s) {
    case Structure::Confounder: return "confounder";
    case Structure::Instrument: return "instrument";
    case Structure::Proxy: return "proxy";
    case Structure::ConfounderPlusIv: return "confounder_plus_iv";
  }
  return "unknown";
}

Structure structure_from_name(const std::string& name) {
  if (name == "confounder") return Structure::Confounder;
  if (name == "instrument") return Structure::Instrument;
  if (name == "proxy") return Structure::Proxy;
  if (name == "confounder_plus_iv") return Structure::ConfounderPlusIv;
  throw contract_error("unknown structure: " + name);
}

const char* treatment_kind_name(TreatmentKind k) {
  return k == TreatmentKind::Continuous ? "continuous" : "binary";
}

TreatmentKind treatment_kind_from_name(const std::string& name) {
  if (name == "continuous") return TreatmentKind::Continuous;
  if (name == "binary") return TreatmentKind::Binary;
  throw contract_error("unknown treatment kind: " + name);
}

double ScalarPrior::sample(RngStream& stream) const {
  switch (kind) {
    case Kind::Uniform:
      return stream.next_uniform(a, b);
    case Kind::SignedUniform: {
      const double mag = stream.next_uniform(a, b);
      return stream.next_unit() < 0.5 ? -mag : mag;
    }
    case Kind::Constant:
      return a;
  }
  throw param_error("ScalarPrior: bad kind");
}

void ScmFamily::validate() const {
  if (covariate_dim < 1) throw param_error("family: covariate_dim must be >= 1");
  if (surface_is_per_arm(surface_kind) && treatment_kind != TreatmentKind::Binary)
    throw param_error("family: per-arm surfaces (spline/tree) require binary treatment");
  if (surface_kind == SurfaceKind::Mixture) {
    if (mixture.kinds.empty() || mixture.kinds.size() != mixture.weights.size())
      throw param_error("family: mixture kinds/weights mismatch");
    double sum = 0.0;
    for (double w : mixture.weights) {
      if (w < 0.0) throw param_error("family: negative mixture weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw param_error("family: mixture weights must sum to 1");
    for (SurfaceKind k : mixture.kinds) {
      if (k == SurfaceKind::Mixture) throw param_error("family: nested mixture");
      if (surface_is_per_arm(k) && treatment_kind != TreatmentKind::Binary)
        throw param_error("family: per-arm surfaces (spline/tree) require binary treatment");
    }
  }
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

namespace {

Vector sample_coefficient_vector(const ScalarPrior& prior, int dim, RngStream& stream) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = prior.sample(stream);
  return v;
}

SurfaceFn sample_surface(SurfaceKind kind, const ScmFamily& family, const Vector& beta_x,
                         double beta_t, RngStream& stream) {
  switch (kind) {
    case SurfaceKind::Linear:
      return LinearSurface{beta_x, beta_t};
    case SurfaceKind::InteractionLinear:
      return InteractionSurface{beta_x, beta_t, false};
    case SurfaceKind::InteractionAbs:
      return InteractionSurface{beta_x, beta_t, true};
    case SurfaceKind::RandomMlp:
      return sample_mlp_surface(stream, family.covariate_dim);
    case SurfaceKind::RandomSpline:
      return sample_spline_surface(stream, family.covariate_dim);
    case SurfaceKind::RandomTree:
      return sample_tree_surface(stream, family.covariate_dim);
    case SurfaceKind::Mixture:
      break;
  }
  throw param_error("sample_surface: bad kind");
}

}  // namespace

ScmInstance sample_scm(const ScmFamily& family, RngStream& stream) {
  family.validate();
  const int d = family.covariate_dim;

  ScmInstance inst;
  inst.structure = family.structure;
  inst.treatment_kind = family.treatment_kind;
  inst.gamma_x = sample_coefficient_vector(family.priors.gamma_x, d, stream);
  inst.gamma_t = sample_coefficient_vector(family.priors.gamma_t, d, stream);
  inst.beta_x = sample_coefficient_vector(family.priors.beta_x, d, stream);
  inst.beta_y = sample_coefficient_vector(family.priors.beta_y, d, stream);
  inst.beta_t = family.priors.beta_t.sample(stream);
  inst.delta1 = family.priors.delta.sample(stream);
  inst.delta2 = family.priors.delta.sample(stream);

  SurfaceKind kind = family.surface_kind;
  if (kind == SurfaceKind::Mixture) {
    const double u = stream.next_unit();
    double acc = 0.0;
    kind = family.mixture.kinds.back();
    for (std::size_t i = 0; i < family.mixture.kinds.size(); ++i) {
      acc += family.mixture.weights[i];
      if (u < acc) {
        kind = family.mixture.kinds[i];
        break;
      }
    }
  }
  inst.surface = sample_surface(kind, family, inst.beta_x, inst.beta_t, stream);
  return inst;
}

FullTable sample_full_dataset(const ScmInstance& instance, Eigen::Index n, RngStream& stream) {
  if (n < 2) throw param_error("sample_full_dataset: N must be >= 2");
  const int d = instance.dim();
  const Law std_normal = Law::normal(0.0, 1.0);

  FullTable table;
  table.x = draw(stream, std_normal, n, d);
  table.u_t = draw(stream, std_normal, n, d);
  table.u_y = draw(stream, std_normal, n, d);

  table.w1.resize(n, d);
  table.w2.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      table.w1(i, j) = instance.delta1 > 0.0
                           ? stream.next_normal(table.x(i, j), instance.delta1)
                           : table.x(i, j);
      table.w2(i, j) = instance.delta2 > 0.0
                           ? stream.next_normal(table.x(i, j), instance.delta2)
                           : table.x(i, j);
    }
  }

  table.t.resize(n);
  table.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double score =
        instance.treatment_score(table.x.row(i).transpose(), table.u_t.row(i).transpose());
    if (instance.treatment_kind == TreatmentKind::Continuous)
      table.t(i) = score;
    else
      table.t(i) = stream.next_bernoulli(sigmoid(score));
    table.y(i) = evaluate_surface(instance.surface, table.x.row(i).transpose(), table.t(i)) +
                 instance.beta_y.dot(table.u_y.row(i).transpose());
  }
  return table;
}

ObservedDataset observe(const FullTable& table, Structure structure) {
  ObservedDataset out;
  out.structure = structure;
  out.t = table.t;
  out.y = table.y;
  switch (structure) {
    case Structure::Confounder:
      out.x = table.x;
      break;
    case Structure::Instrument:
      out.u_t = table.u_t;
      break;
    case Structure::Proxy:
      out.w1 = table.w1;
      out.w2 = table.w2;
      break;
    case Structure::ConfounderPlusIv:
      out.x = table.x;
      out.u_t = table.u_t;
      break;
    default:
      throw contract_error("observe: unknown structure tag");
  }
  out.validate();
  return out;
}

double intervene_outcome(const ScmInstance& instance, const Vector& x, double t_value, const Vector& u_y) {
  if (x.size() != instance.dim()) throw param_error("intervene_outcome: covariate dimension mismatch");
  return evaluate_surface(instance.surface, x, t_value) + instance.beta_y.dot(u_y);
}

Matrix ObservedDataset::to_matrix() const {
  const Eigen::Index n = rows();
  Matrix m(n, feature_count());
  Eigen::Index at = 0;
  m.col(at++) = t;
  m.col(at++) = y;
  auto append = [&](const Matrix& block) {
    if (block.cols() == 0) return;
    m.middleCols(at, block.cols()) = block;
    at += block.cols();
  };
  append(x);
  append(u_t);
  append(w1);
  append(w2);
  return m;
}

Eigen::Index ObservedDataset::feature_count() const {
  return 2 + x.cols() + u_t.cols() + w1.cols() + w2.cols();
}

void ObservedDataset::validate() const {
  const Eigen::Index n = rows();
  if (n < 2) throw contract_error("dataset: N must be >= 2");
  if (y.size() != n) throw contract_error("dataset: outcome length mismatch");
  auto check_role = [&](const Matrix& block, bool expected, const char* role) {
    if (expected && block.cols() == 0)
      throw contract_error(std::string("dataset: missing required role ") + role);
    if (!expected && block.cols() != 0)
      throw contract_error(std::string("dataset: latent role present: ") + role);
    if (block.cols() != 0 && block.rows() != n)
      throw contract_error(std::string("dataset: row mismatch in role ") + role);
  };
  const bool has_x = structure == Structure::Confounder || structure == Structure::ConfounderPlusIv;
  const bool has_iv = structure == Structure::Instrument || structure == Structure::ConfounderPlusIv;
  const bool has_proxy = structure == Structure::Proxy;
  check_role(x, has_x, "covariate");
  check_role(u_t, has_iv, "instrument");
  check_role(w1, has_proxy, "proxy1");
  check_role(w2, has_proxy, "proxy2");
  if (!t.allFinite() || !y.allFinite() || !x.allFinite() || !u_t.allFinite() ||
      !w1.allFinite() || !w2.allFinite())
    throw contract_error("dataset: non-finite values");
}

}  // namespace ace

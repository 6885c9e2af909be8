#include "ace/baselines.hpp"

#include <cmath>

#include "ace/rng.hpp"

namespace ace {

const char* baseline_kind_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::TOnly: return "t_only";
    case BaselineKind::RegLin: return "reg_lin";
    case BaselineKind::RegMlp: return "reg_mlp";
    case BaselineKind::TslsLin: return "tsls_lin";
    case BaselineKind::TslsMlp: return "tsls_mlp";
    case BaselineKind::Pr2slsLin: return "pr2sls_lin";
    case BaselineKind::Pr2slsMlp: return "pr2sls_mlp";
    case BaselineKind::NaiveDiff: return "naive_diff";
  }
  return "unknown";
}

BaselineKind baseline_kind_from_name(const std::string& name) {
  if (name == "t_only") return BaselineKind::TOnly;
  if (name == "reg_lin") return BaselineKind::RegLin;
  if (name == "reg_mlp") return BaselineKind::RegMlp;
  if (name == "tsls_lin") return BaselineKind::TslsLin;
  if (name == "tsls_mlp") return BaselineKind::TslsMlp;
  if (name == "pr2sls_lin") return BaselineKind::Pr2slsLin;
  if (name == "pr2sls_mlp") return BaselineKind::Pr2slsMlp;
  if (name == "naive_diff") return BaselineKind::NaiveDiff;
  throw contract_error("unknown baseline kind: " + name);
}

Vector ols(const Matrix& design, const Vector& response) {
  if (design.rows() != response.size()) throw param_error("ols: shape mismatch");
  if (design.rows() < design.cols())
    throw contract_error("ols: fewer rows than fitted parameters");
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (qr.rank() < design.cols())
    throw Error(ErrorCode::RankDeficient, "ols: singular normal equations");
  return qr.solve(response);
}

namespace {

double sample_cov(const Vector& a, const Vector& b) {
  return ((a.array() - a.mean()) * (b.array() - b.mean())).sum() /
         static_cast<double>(a.size() - 1);
}

Matrix with_intercept(const std::vector<const Matrix*>& blocks, const std::vector<const Vector*>& columns,
                      Eigen::Index n) {
  Eigen::Index width = 1;
  for (const Matrix* m : blocks) width += m->cols();
  width += static_cast<Eigen::Index>(columns.size());
  Matrix design(n, width);
  design.col(0).setOnes();
  Eigen::Index at = 1;
  for (const Vector* v : columns) design.col(at++) = *v;
  for (const Matrix* m : blocks) {
    design.middleCols(at, m->cols()) = *m;
    at += m->cols();
  }
  return design;
}

double group_mean_difference(const ObservedDataset& d) {
  double sum1 = 0.0, sum0 = 0.0;
  long n1 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    if (d.t(i) > 0.5) {
      sum1 += d.y(i);
      ++n1;
    } else {
      sum0 += d.y(i);
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0)
    throw Error(ErrorCode::Degenerate, "mean difference: a treatment arm is empty");
  return sum1 / n1 - sum0 / n0;
}

double t_only(const ObservedDataset& d) {
  if (d.treatment_is_binary()) return group_mean_difference(d);
  Matrix design = with_intercept({}, {&d.t}, d.rows());
  return ols(design, d.y)(1);
}

// regression adjustment on (x, t); effect is the mean finite difference in t
double regression_adjustment_lin(const ObservedDataset& d, const std::optional<Vector>& query) {
  if (d.x.cols() == 0) throw contract_error("reg baseline: dataset has no covariates");
  Matrix design = with_intercept({&d.x}, {&d.t}, d.rows());
  Vector coef = ols(design, d.y);
  // linear in t, so the unit contrast is the t coefficient at any query
  (void)query;
  return coef(1);
}

double regression_adjustment_mlp(const ObservedDataset& d, const MlpHyperparams& hp,
                                 const std::optional<Vector>& query) {
  if (d.x.cols() == 0) throw contract_error("reg baseline: dataset has no covariates");
  Matrix inputs(d.rows(), d.x.cols() + 1);
  inputs.leftCols(d.x.cols()) = d.x;
  inputs.col(d.x.cols()) = d.t;
  FittedMlp fit(inputs, d.y, hp);

  const bool binary = d.treatment_is_binary();
  auto contrast_at = [&](const Vector& x_row, double t_obs) {
    Vector lo(inputs.cols()), hi(inputs.cols());
    lo.head(d.x.cols()) = x_row;
    hi.head(d.x.cols()) = x_row;
    if (binary) {
      lo(d.x.cols()) = 0.0;
      hi(d.x.cols()) = 1.0;
    } else {
      lo(d.x.cols()) = t_obs;
      hi(d.x.cols()) = t_obs + 1.0;
    }
    return fit.predict(hi) - fit.predict(lo);
  };

  double acc = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    const Vector x_row = query ? *query : Vector(d.x.row(i).transpose());
    acc += contrast_at(x_row, d.t(i));
  }
  return acc / static_cast<double>(d.rows());
}

Vector fitted_first_stage_lin(const ObservedDataset& d) {
  Matrix design = with_intercept({&d.u_t}, {}, d.rows());
  Vector coef = ols(design, d.t);
  return design * coef;
}

double two_stage_ls(const ObservedDataset& d, const BaselineSpec& spec, bool mlp_first_stage) {
  if (d.u_t.cols() == 0) throw contract_error("tsls: dataset has no instrument");
  if (d.treatment_is_binary() && !spec.allow_binary_tsls)
    throw contract_error("tsls: binary treatment requires the binary-tsls extension flag");
  for (Eigen::Index j = 0; j < d.u_t.cols(); ++j) {
    const double var = (d.u_t.col(j).array() - d.u_t.col(j).mean()).square().sum();
    if (var < 1e-12)
      throw Error(ErrorCode::Degenerate, "tsls: instrument column is constant");
  }

  Vector t_hat;
  if (mlp_first_stage) {
    FittedMlp fit(d.u_t, d.t, spec.mlp);
    t_hat = fit.predict_rows(d.u_t);
  } else {
    t_hat = fitted_first_stage_lin(d);
  }

  const double that_var = (t_hat.array() - t_hat.mean()).square().sum() /
                          static_cast<double>(d.rows() - 1);
  const double t_var =
      (d.t.array() - d.t.mean()).square().sum() / static_cast<double>(d.rows() - 1);
  if (that_var < 1e-12 * std::max(1.0, t_var))
    throw Error(ErrorCode::Degenerate, "tsls: fitted first stage is constant (weak instrument)");

  Matrix design = with_intercept({}, {&t_hat}, d.rows());
  return ols(design, d.y)(1);
}

double proxy_two_stage(const ObservedDataset& d, const BaselineSpec& spec, bool mlp_first_stage) {
  if (d.w1.cols() == 0 || d.w2.cols() == 0) throw contract_error("pr2sls: dataset lacks proxies");

  // stage 1: E[w1 | t, w2], one regression per proxy coordinate
  Matrix w1_hat(d.rows(), d.w1.cols());
  if (mlp_first_stage) {
    Matrix inputs(d.rows(), 1 + d.w2.cols());
    inputs.col(0) = d.t;
    inputs.rightCols(d.w2.cols()) = d.w2;
    for (Eigen::Index j = 0; j < d.w1.cols(); ++j) {
      MlpHyperparams hp = spec.mlp;
      hp.seed = spec.mlp.seed + static_cast<std::uint64_t>(j);
      FittedMlp fit(inputs, d.w1.col(j), hp);
      w1_hat.col(j) = fit.predict_rows(inputs);
    }
  } else {
    Matrix design = with_intercept({&d.w2}, {&d.t}, d.rows());
    for (Eigen::Index j = 0; j < d.w1.cols(); ++j) {
      Vector coef = ols(design, d.w1.col(j));
      w1_hat.col(j) = design * coef;
    }
  }

  // stage 2: y on (1, t, w1_hat); effect is the t coefficient
  Matrix design = with_intercept({&w1_hat}, {&d.t}, d.rows());
  return ols(design, d.y)(1);
}

}  // namespace

double estimate_baseline(const BaselineSpec& spec, const ObservedDataset& dataset,
                         const std::optional<Vector>& query) {
  dataset.validate();
  switch (spec.kind) {
    case BaselineKind::TOnly:
    case BaselineKind::NaiveDiff:
      return t_only(dataset);
    case BaselineKind::RegLin:
      return regression_adjustment_lin(dataset, query);
    case BaselineKind::RegMlp:
      return regression_adjustment_mlp(dataset, spec.mlp, query);
    case BaselineKind::TslsLin:
      return two_stage_ls(dataset, spec, false);
    case BaselineKind::TslsMlp:
      return two_stage_ls(dataset, spec, true);
    case BaselineKind::Pr2slsLin:
      return proxy_two_stage(dataset, spec, false);
    case BaselineKind::Pr2slsMlp:
      return proxy_two_stage(dataset, spec, true);
  }
  throw param_error("estimate_baseline: bad kind");
}

double tsls_closed_form(const ObservedDataset& dataset) {
  if (dataset.u_t.cols() != 1) throw contract_error("tsls_closed_form: needs a scalar instrument");
  const Vector u = dataset.u_t.col(0);
  const double c_tu = sample_cov(dataset.t, u);
  if (std::abs(c_tu) < 1e-12)
    throw Error(ErrorCode::Degenerate, "tsls_closed_form: cov(t, u) is numerically zero");
  return sample_cov(dataset.y, u) / c_tu;
}

// ---------------------------------------------------------------------------

FittedMlp::FittedMlp(const Matrix& inputs, const Vector& targets, const MlpHyperparams& hp) {
  if (inputs.rows() != targets.size() || inputs.rows() < 2)
    throw param_error("FittedMlp: bad training data");
  if (hp.hidden.empty() || hp.steps < 1 || hp.rate <= 0.0)
    throw param_error("FittedMlp: bad hyperparameters");

  const Eigen::Index n = inputs.rows();
  const Eigen::Index in_dim = inputs.cols();

  in_mean_ = inputs.colwise().mean();
  in_scale_.resize(in_dim);
  for (Eigen::Index j = 0; j < in_dim; ++j) {
    const double sd = std::sqrt((inputs.col(j).array() - in_mean_(j)).square().mean());
    in_scale_(j) = sd > 1e-12 ? sd : 1.0;
  }
  out_mean_ = targets.mean();
  {
    const double sd = std::sqrt((targets.array() - out_mean_).square().mean());
    out_scale_ = sd > 1e-12 ? sd : 1.0;
  }

  Matrix X = (inputs.rowwise() - in_mean_.transpose());
  for (Eigen::Index j = 0; j < in_dim; ++j) X.col(j) /= in_scale_(j);
  Vector y = (targets.array() - out_mean_) / out_scale_;

  // layer sizes: in -> hidden... -> 1
  std::vector<Eigen::Index> sizes;
  sizes.push_back(in_dim);
  for (int h : hp.hidden) sizes.push_back(h);
  sizes.push_back(1);

  RngStream stream(hp.seed, 0x6d6c70);  // fixed stream per fit
  weights_.clear();
  biases_.clear();
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    weights_.push_back(draw(stream, Law::uniform(-bound, bound), sizes[l], sizes[l + 1]));
    biases_.push_back(Vector::Zero(sizes[l + 1]));
  }

  // adam state
  std::vector<Matrix> mw, vw;
  std::vector<Vector> mb, vb;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    mw.push_back(Matrix::Zero(weights_[l].rows(), weights_[l].cols()));
    vw.push_back(Matrix::Zero(weights_[l].rows(), weights_[l].cols()));
    mb.push_back(Vector::Zero(biases_[l].size()));
    vb.push_back(Vector::Zero(biases_[l].size()));
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  const std::size_t layers = weights_.size();
  std::vector<Matrix> acts(layers + 1);
  for (int step = 1; step <= hp.steps; ++step) {
    // forward, tanh on hidden layers
    acts[0] = X;
    for (std::size_t l = 0; l < layers; ++l) {
      Matrix z = (acts[l] * weights_[l]).rowwise() + biases_[l].transpose();
      acts[l + 1] = (l + 1 < layers) ? Matrix(z.array().tanh()) : z;
    }
    Vector err = acts[layers].col(0) - y;

    // backward
    Matrix delta = (2.0 / static_cast<double>(n)) * err;
    for (std::size_t l = layers; l-- > 0;) {
      Matrix gw = acts[l].transpose() * delta;
      Vector gb = delta.colwise().sum();
      if (l > 0) {
        Matrix back = delta * weights_[l].transpose();
        delta = back.cwiseProduct((1.0 - acts[l].array().square()).matrix());
      }
      // adam update
      const double corr1 = 1.0 - std::pow(b1, step);
      const double corr2 = 1.0 - std::pow(b2, step);
      mw[l] = b1 * mw[l] + (1.0 - b1) * gw;
      vw[l] = b2 * vw[l] + (1.0 - b2) * gw.cwiseProduct(gw);
      weights_[l] -= (hp.rate / corr1) * (mw[l].array() / ((vw[l].array() / corr2).sqrt() + eps)).matrix();
      mb[l] = b1 * mb[l] + (1.0 - b1) * gb;
      vb[l] = b2 * vb[l] + (1.0 - b2) * gb.cwiseProduct(gb);
      biases_[l] -= (hp.rate / corr1) * (mb[l].array() / ((vb[l].array() / corr2).sqrt() + eps)).matrix();
    }
  }
}

Vector FittedMlp::predict_rows(const Matrix& inputs) const {
  Matrix X = (inputs.rowwise() - in_mean_.transpose());
  for (Eigen::Index j = 0; j < X.cols(); ++j) X.col(j) /= in_scale_(j);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = (X * weights_[l]).rowwise() + biases_[l].transpose();
    X = (l + 1 < weights_.size()) ? Matrix(z.array().tanh()) : z;
  }
  return (X.col(0).array() * out_scale_ + out_mean_).matrix();
}

double FittedMlp::predict(const Vector& input) const {
  return predict_rows(input.transpose())(0);
}

}  // namespace ace

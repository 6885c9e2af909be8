#include "ace/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

namespace ace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

struct NamedColumn {
  std::string role;
  std::string name;
  std::vector<double> values;
};

std::vector<NamedColumn> parse_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw contract_error("csv: missing header");
  std::vector<NamedColumn> cols;
  {
    std::stringstream header(line);
    std::string tok;
    while (std::getline(header, tok, ',')) {
      const auto sep = tok.find(':');
      if (sep == std::string::npos) throw contract_error("csv: header token lacks role tag: " + tok);
      cols.push_back(NamedColumn{tok.substr(0, sep), tok.substr(sep + 1), {}});
    }
  }
  if (cols.empty()) throw contract_error("csv: empty header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string tok;
    std::size_t i = 0;
    while (std::getline(row, tok, ',')) {
      if (i >= cols.size()) throw contract_error("csv: row wider than header");
      cols[i++].values.push_back(std::stod(tok));
    }
    if (i != cols.size()) throw contract_error("csv: row narrower than header");
  }
  return cols;
}

Matrix gather(const std::vector<NamedColumn>& cols, const std::string& role,
              const std::string& name_prefix) {
  std::vector<const NamedColumn*> hits;
  for (const auto& c : cols)
    if (c.role == role && c.name.rfind(name_prefix, 0) == 0) hits.push_back(&c);
  if (hits.empty()) return Matrix(0, 0);
  const Eigen::Index n = static_cast<Eigen::Index>(hits.front()->values.size());
  Matrix m(n, static_cast<Eigen::Index>(hits.size()));
  for (std::size_t j = 0; j < hits.size(); ++j)
    for (Eigen::Index i = 0; i < n; ++i) m(i, static_cast<Eigen::Index>(j)) = hits[j]->values[static_cast<std::size_t>(i)];
  return m;
}

Vector gather_single(const std::vector<NamedColumn>& cols, const std::string& role) {
  Matrix m = gather(cols, role, "");
  if (m.cols() != 1) throw contract_error("csv: expected exactly one " + role + " column");
  return m.col(0);
}

void write_header_group(std::ostream& os, bool& first, const Matrix& block,
                        const std::string& role, const std::string& prefix) {
  for (Eigen::Index j = 0; j < block.cols(); ++j) {
    os << (first ? "" : ",") << role << ':' << prefix << j;
    first = false;
  }
}

void write_row_group(std::ostream& os, bool& first, const Matrix& block, Eigen::Index i) {
  for (Eigen::Index j = 0; j < block.cols(); ++j) {
    os << (first ? "" : ",") << format_double(block(i, j));
    first = false;
  }
}

}  // namespace

void write_observed_csv(std::ostream& os, const ObservedDataset& dataset) {
  dataset.validate();
  bool first = true;
  os << "treatment:t,outcome:y";
  first = false;
  write_header_group(os, first, dataset.x, "covariate", "x");
  write_header_group(os, first, dataset.u_t, "instrument", "u");
  write_header_group(os, first, dataset.w1, "proxy", "w1_");
  write_header_group(os, first, dataset.w2, "proxy", "w2_");
  os << '\n';
  for (Eigen::Index i = 0; i < dataset.rows(); ++i) {
    first = true;
    os << format_double(dataset.t(i)) << ',' << format_double(dataset.y(i));
    first = false;
    write_row_group(os, first, dataset.x, i);
    write_row_group(os, first, dataset.u_t, i);
    write_row_group(os, first, dataset.w1, i);
    write_row_group(os, first, dataset.w2, i);
    os << '\n';
  }
}

ObservedDataset read_observed_csv(std::istream& is) {
  const auto cols = parse_csv(is);
  ObservedDataset d;
  d.t = gather_single(cols, "treatment");
  d.y = gather_single(cols, "outcome");
  d.x = gather(cols, "covariate", "");
  d.u_t = gather(cols, "instrument", "");
  d.w1 = gather(cols, "proxy", "w1_");
  d.w2 = gather(cols, "proxy", "w2_");

  const bool has_x = d.x.cols() > 0, has_iv = d.u_t.cols() > 0, has_w = d.w1.cols() > 0;
  if (has_x && has_iv)
    d.structure = Structure::ConfounderPlusIv;
  else if (has_x)
    d.structure = Structure::Confounder;
  else if (has_iv)
    d.structure = Structure::Instrument;
  else if (has_w)
    d.structure = Structure::Proxy;
  else
    throw contract_error("csv: no setting-specific columns found");
  d.validate();
  return d;
}

void write_full_csv(std::ostream& os, const FullTable& table) {
  bool first = true;
  write_header_group(os, first, table.x, "covariate", "x");
  write_header_group(os, first, table.u_t, "instrument", "u");
  write_header_group(os, first, table.u_y, "noise", "uy");
  write_header_group(os, first, table.w1, "proxy", "w1_");
  write_header_group(os, first, table.w2, "proxy", "w2_");
  os << (first ? "" : ",") << "treatment:t,outcome:y\n";
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    first = true;
    write_row_group(os, first, table.x, i);
    write_row_group(os, first, table.u_t, i);
    write_row_group(os, first, table.u_y, i);
    write_row_group(os, first, table.w1, i);
    write_row_group(os, first, table.w2, i);
    os << (first ? "" : ",") << format_double(table.t(i)) << ',' << format_double(table.y(i)) << '\n';
  }
}

FullTable read_full_csv(std::istream& is) {
  const auto cols = parse_csv(is);
  FullTable t;
  t.x = gather(cols, "covariate", "");
  t.u_t = gather(cols, "instrument", "");
  t.u_y = gather(cols, "noise", "");
  t.w1 = gather(cols, "proxy", "w1_");
  t.w2 = gather(cols, "proxy", "w2_");
  t.t = gather_single(cols, "treatment");
  t.y = gather_single(cols, "outcome");
  return t;
}

void save_observed_csv(const std::string& path, const ObservedDataset& dataset) {
  std::ofstream os(path);
  if (!os) throw contract_error("cannot open for writing: " + path);
  write_observed_csv(os, dataset);
}

ObservedDataset load_observed_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw contract_error("cannot open: " + path);
  return read_observed_csv(is);
}

namespace {

nlohmann::json prior_to_json(const ScalarPrior& p) {
  switch (p.kind) {
    case ScalarPrior::Kind::Uniform: return {{"kind", "uniform"}, {"a", p.a}, {"b", p.b}};
    case ScalarPrior::Kind::SignedUniform: return {{"kind", "signed_uniform"}, {"a", p.a}, {"b", p.b}};
    case ScalarPrior::Kind::Constant: return {{"kind", "constant"}, {"value", p.a}};
  }
  throw param_error("prior_to_json: bad kind");
}

ScalarPrior prior_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "uniform") return ScalarPrior::uniform(j.at("a").get<double>(), j.at("b").get<double>());
  if (kind == "signed_uniform")
    return ScalarPrior::signed_uniform(j.at("a").get<double>(), j.at("b").get<double>());
  if (kind == "constant") return ScalarPrior::constant(j.at("value").get<double>());
  throw contract_error("unknown prior kind: " + kind);
}

}  // namespace

nlohmann::json family_to_json(const ScmFamily& family) {
  nlohmann::json j;
  j["structure"] = structure_name(family.structure);
  j["treatment"] = treatment_kind_name(family.treatment_kind);
  j["surface"] = surface_kind_name(family.surface_kind);
  j["covariate_dim"] = family.covariate_dim;
  j["priors"] = {
      {"gamma_x", prior_to_json(family.priors.gamma_x)}, {"gamma_t", prior_to_json(family.priors.gamma_t)},
      {"beta_x", prior_to_json(family.priors.beta_x)},   {"beta_t", prior_to_json(family.priors.beta_t)},
      {"beta_y", prior_to_json(family.priors.beta_y)},   {"delta", prior_to_json(family.priors.delta)},
  };
  if (family.surface_kind == SurfaceKind::Mixture) {
    nlohmann::json kinds = nlohmann::json::array();
    for (SurfaceKind k : family.mixture.kinds) kinds.push_back(surface_kind_name(k));
    j["mixture"] = {{"kinds", kinds}, {"weights", family.mixture.weights}};
  }
  return j;
}

ScmFamily family_from_json(const nlohmann::json& j) {
  ScmFamily f;
  f.structure = structure_from_name(j.at("structure").get<std::string>());
  f.treatment_kind = treatment_kind_from_name(j.at("treatment").get<std::string>());
  f.surface_kind = surface_kind_from_name(j.at("surface").get<std::string>());
  if (j.contains("covariate_dim")) f.covariate_dim = j.at("covariate_dim").get<int>();
  if (j.contains("priors")) {
    const auto& p = j.at("priors");
    if (p.contains("gamma_x")) f.priors.gamma_x = prior_from_json(p.at("gamma_x"));
    if (p.contains("gamma_t")) f.priors.gamma_t = prior_from_json(p.at("gamma_t"));
    if (p.contains("beta_x")) f.priors.beta_x = prior_from_json(p.at("beta_x"));
    if (p.contains("beta_t")) f.priors.beta_t = prior_from_json(p.at("beta_t"));
    if (p.contains("beta_y")) f.priors.beta_y = prior_from_json(p.at("beta_y"));
    if (p.contains("delta")) f.priors.delta = prior_from_json(p.at("delta"));
  }
  if (j.contains("mixture")) {
    f.mixture.kinds.clear();
    for (const auto& k : j.at("mixture").at("kinds"))
      f.mixture.kinds.push_back(surface_kind_from_name(k.get<std::string>()));
    f.mixture.weights = j.at("mixture").at("weights").get<std::vector<double>>();
  }
  f.validate();
  return f;
}

nlohmann::json effect_target_to_json(const EffectTarget& target) {
  nlohmann::json j;
  j["kind"] = estimand_kind_name(target.kind);
  j["K"] = target.mc_samples;
  j["value"] = target.value;
  if (target.query) {
    std::vector<double> q(target.query->data(), target.query->data() + target.query->size());
    j["query"] = q;
  }
  if (target.normalizer) j["normalizer"] = {{"q05", target.normalizer->q05}, {"q95", target.normalizer->q95}};
  return j;
}

EffectTarget effect_target_from_json(const nlohmann::json& j) {
  EffectTarget t;
  t.kind = estimand_kind_from_name(j.at("kind").get<std::string>());
  t.mc_samples = j.at("K").get<long>();
  t.value = j.at("value").get<double>();
  if (j.contains("query")) {
    const auto q = j.at("query").get<std::vector<double>>();
    Vector v(static_cast<Eigen::Index>(q.size()));
    for (std::size_t i = 0; i < q.size(); ++i) v(static_cast<Eigen::Index>(i)) = q[i];
    t.query = v;
  }
  if (j.contains("normalizer")) {
    EffectNormalizer n;
    n.q05 = j.at("normalizer").at("q05").get<double>();
    n.q95 = j.at("normalizer").at("q95").get<double>();
    t.normalizer = n;
  }
  t.validate();
  return t;
}

}  // namespace ace

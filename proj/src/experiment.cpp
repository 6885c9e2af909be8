#include "ace/experiment.hpp"

#include <filesystem>
#include <fstream>

#include "ace/dataset_io.hpp"
#include "ace/parallel.hpp"

namespace fs = std::filesystem;

namespace ace {

void ExperimentConfig::validate() const {
  family.validate();
  model.validate();
  train.validate();
  if (eval.count < 1 || eval.dataset_size < 2) throw param_error("experiment: bad eval spec");
  if (out_dir.empty()) throw param_error("experiment: out dir required");
  if (workers < 1) throw param_error("experiment: workers must be >= 1");
  if (filter_range && !(filter_range->first < filter_range->second))
    throw param_error("experiment: bad filter range");
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("name")) c.name = j.at("name").get<std::string>();
  c.family = family_from_json(j.at("family"));
  c.train = j.contains("train") ? train_config_from_json(j.at("train")) : TrainConfig{};

  nlohmann::json model = j.contains("model") ? j.at("model") : nlohmann::json::object();
  if (!model.contains("input_width") || model.at("input_width").get<int>() == 0)
    model["input_width"] = family_input_width(c.family, c.train.estimand);
  c.model = model_config_from_json(model);

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    if (e.contains("count")) c.eval.count = e.at("count").get<int>();
    if (e.contains("dataset_size")) c.eval.dataset_size = e.at("dataset_size").get<Eigen::Index>();
    if (e.contains("seed")) c.eval.seed = e.at("seed").get<std::uint64_t>();
  }
  if (j.contains("baselines"))
    for (const auto& b : j.at("baselines"))
      c.baselines.push_back(baseline_kind_from_name(b.get<std::string>()));
  if (j.contains("baseline_mlp")) {
    const auto& m = j.at("baseline_mlp");
    if (m.contains("hidden")) c.baseline_mlp.hidden = m.at("hidden").get<std::vector<int>>();
    if (m.contains("steps")) c.baseline_mlp.steps = m.at("steps").get<int>();
    if (m.contains("rate")) c.baseline_mlp.rate = m.at("rate").get<double>();
    if (m.contains("seed")) c.baseline_mlp.seed = m.at("seed").get<std::uint64_t>();
  }
  if (j.contains("allow_binary_tsls")) c.allow_binary_tsls = j.at("allow_binary_tsls").get<bool>();
  if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
  if (j.contains("filter_range")) {
    const auto r = j.at("filter_range").get<std::vector<double>>();
    if (r.size() != 2) throw param_error("experiment: filter_range needs [lo, hi]");
    c.filter_range = std::make_pair(r[0], r[1]);
  }
  if (j.contains("buckets")) c.bucket_edges = j.at("buckets").get<std::vector<double>>();
  if (j.contains("workers")) c.workers = j.at("workers").get<int>();
  c.validate();
  return c;
}

nlohmann::json experiment_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["family"] = family_to_json(c.family);
  j["model"] = model_config_to_json(c.model);
  j["train"] = train_config_to_json(c.train);
  j["eval"] = {{"count", c.eval.count}, {"dataset_size", c.eval.dataset_size}, {"seed", c.eval.seed}};
  nlohmann::json baselines = nlohmann::json::array();
  for (BaselineKind b : c.baselines) baselines.push_back(baseline_kind_name(b));
  j["baselines"] = baselines;
  j["baseline_mlp"] = {{"hidden", c.baseline_mlp.hidden},
                       {"steps", c.baseline_mlp.steps},
                       {"rate", c.baseline_mlp.rate},
                       {"seed", c.baseline_mlp.seed}};
  j["allow_binary_tsls"] = c.allow_binary_tsls;
  j["out"] = c.out_dir;
  if (c.filter_range) j["filter_range"] = {c.filter_range->first, c.filter_range->second};
  if (!c.bucket_edges.empty()) j["buckets"] = c.bucket_edges;
  j["workers"] = c.workers;
  return j;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw param_error("cannot open config: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw param_error(std::string("config parse error: ") + e.what());
  }
  return experiment_from_json(j);
}

Corpus simulate_corpus(const ScmFamily& family, EstimandKind estimand, long mc_samples, int count,
                       Eigen::Index dataset_size, std::uint64_t seed, int workers) {
  family.validate();
  Corpus corpus;
  corpus.estimand = estimand;
  corpus.entries.resize(static_cast<std::size_t>(count));
  const bool normalize = surface_needs_normalization(family.surface_kind);

  parallel_for(corpus.entries.size(), workers, [&](std::size_t i) {
    RngStream stream = RngStream(seed, 0x434f5250).fork(i);  // corpus lane
    CorpusEntry& entry = corpus.entries[i];
    for (int attempt = 0; attempt < 100; ++attempt) {
      ScmInstance inst = sample_scm(family, stream);
      FullTable full = sample_full_dataset(inst, dataset_size, stream);
      entry.dataset = observe(full, family.structure);
      entry.gamma_x = inst.gamma_x;
      entry.gamma_t = inst.gamma_t;
      entry.beta_t = inst.beta_t;
      entry.surface = surface_kind_name(surface_kind_of(inst.surface));
      switch (estimand) {
        case EstimandKind::Pate:
          entry.target = pate(inst, mc_samples, stream);
          break;
        case EstimandKind::Cate: {
          Vector query(family.covariate_dim);
          for (int j = 0; j < family.covariate_dim; ++j) query(j) = stream.next_normal(0.0, 1.0);
          entry.target = cate(inst, query, mc_samples, stream);
          break;
        }
        case EstimandKind::Sate:
          entry.target = sate(inst, full, stream);
          break;
      }
      if (!normalize) return;
      try {
        auto [value, norm] = normalize_effect(entry.target.value, entry.dataset.y);
        entry.target.normalizer = norm;  // value stays on the natural scale
        return;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Degenerate) throw;
      }
    }
    throw numeric_error("simulate: degenerate outcomes persisted across redraws");
  });
  return corpus;
}

namespace {

std::string dataset_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "dataset_%05zu.csv", index);
  return buf;
}

std::vector<double> to_std(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector from_std(const std::vector<double>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

}  // namespace

std::uint64_t hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw contract_error("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes);
}

void write_corpus(const std::string& dir, const Corpus& corpus, const nlohmann::json& config_echo,
                  std::uint64_t seed) {
  fs::create_directories(dir);

  nlohmann::json targets = nlohmann::json::array();
  nlohmann::json meta = nlohmann::json::array();
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
    const CorpusEntry& e = corpus.entries[i];
    const std::string name = dataset_filename(i);
    save_observed_csv(dir + "/" + name, e.dataset);
    targets.push_back(effect_target_to_json(e.target));
    meta.push_back({{"gamma_x", to_std(e.gamma_x)},
                    {"gamma_t", to_std(e.gamma_t)},
                    {"beta_t", e.beta_t},
                    {"surface", e.surface}});
    files.push_back({{"name", name}, {"hash", hex64(hash_file(dir + "/" + name))}});
  }

  {
    std::ofstream os(dir + "/targets.json");
    if (!os) throw contract_error("cannot write targets.json");
    nlohmann::json j;
    j["estimand"] = estimand_kind_name(corpus.estimand);
    j["targets"] = targets;
    j["meta"] = meta;
    os << j.dump(2) << '\n';
  }

  nlohmann::json manifest;
  manifest["kind"] = "corpus-manifest";
  manifest["config"] = config_echo;
  manifest["seed"] = seed;
  manifest["count"] = corpus.entries.size();
  manifest["files"] = files;
  manifest["targets_hash"] = hex64(hash_file(dir + "/targets.json"));
  std::ofstream os(dir + "/manifest.json");
  if (!os) throw contract_error("cannot write manifest.json");
  os << manifest.dump(2) << '\n';
}

Corpus load_corpus(const std::string& dir) {
  std::ifstream ts(dir + "/targets.json");
  if (!ts) throw contract_error("corpus: missing targets.json in " + dir);
  nlohmann::json j;
  ts >> j;

  Corpus corpus;
  corpus.estimand = estimand_kind_from_name(j.at("estimand").get<std::string>());
  const auto& targets = j.at("targets");
  const auto& meta = j.at("meta");
  corpus.entries.resize(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    CorpusEntry& e = corpus.entries[i];
    e.target = effect_target_from_json(targets[i]);
    e.gamma_x = from_std(meta[i].at("gamma_x").get<std::vector<double>>());
    e.gamma_t = from_std(meta[i].at("gamma_t").get<std::vector<double>>());
    e.beta_t = meta[i].at("beta_t").get<double>();
    e.surface = meta[i].at("surface").get<std::string>();
    e.dataset = load_observed_csv(dir + "/" + dataset_filename(i));
  }
  return corpus;
}

}  // namespace ace

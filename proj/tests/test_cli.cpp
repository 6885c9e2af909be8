#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ace/cli.hpp"
#include "ace/dataset_io.hpp"
#include "ace/experiment.hpp"
#include "ace/metrics.hpp"

using namespace ace;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& child = "") const {
    return child.empty() ? path.string() : (path / child).string();
  }
};

nlohmann::json tiny_experiment(const std::string& out_dir) {
  return {
      {"name", "cli_smoke"},
      {"family",
       {{"structure", "confounder"}, {"treatment", "continuous"}, {"surface", "linear"}, {"covariate_dim", 1}}},
      {"model",
       {{"input_width", 0}, {"embed_dim", 16}, {"num_blocks", 1}, {"num_heads", 2}, {"feedforward_width", 32}, {"pooling", "mean"}}},
      {"train",
       {{"batch_size", 8},
        {"epochs", 1},
        {"datasets_per_epoch", 64},
        {"dataset_size", 12},
        {"estimand", "pate"},
        {"mc_samples", 4},
        {"base_rate", 0.002},
        {"warmup_steps", 2},
        {"seed", 5},
        {"checkpoint_every", 3},
        {"workers", 2}}},
      {"eval", {{"count", 10}, {"dataset_size", 12}, {"seed", 33}}},
      {"baselines", {"t_only", "reg_lin"}},
      {"out", out_dir},
      {"workers", 2},
  };
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  os << j.dump(2) << '\n';
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("simulate writes datasets, targets, and a deterministic manifest") {
  TempDir tmp("ace_cli_simulate");
  write_json(tmp.str("config.json"), tiny_experiment(tmp.str("corpus")));

  CHECK(run_cli({"simulate", "--config", tmp.str("config.json")}) == 0);
  CHECK(fs::exists(tmp.str("corpus/dataset_00000.csv")));
  CHECK(fs::exists(tmp.str("corpus/dataset_00009.csv")));
  CHECK(fs::exists(tmp.str("corpus/targets.json")));
  const std::string manifest1 = slurp(tmp.str("corpus/manifest.json"));

  // rerun lands byte-identical
  fs::remove_all(tmp.str("corpus"));
  CHECK(run_cli({"simulate", "--config", tmp.str("config.json")}) == 0);
  CHECK(slurp(tmp.str("corpus/manifest.json")) == manifest1);

  // linear-family targets stay inside the open prior interval
  Corpus corpus = load_corpus(tmp.str("corpus"));
  for (const CorpusEntry& e : corpus.entries) {
    CHECK(e.target.value > -1.0);
    CHECK(e.target.value < 1.0);
  }
}

TEST_CASE("train writes a checkpoint and a curve with one row per step") {
  TempDir tmp("ace_cli_train");
  write_json(tmp.str("config.json"), tiny_experiment(tmp.str("run")));
  CHECK(run_cli({"train", "--config", tmp.str("config.json")}) == 0);
  CHECK(fs::exists(tmp.str("run/checkpoint.json")));

  const std::string curve = slurp(tmp.str("run/curve.csv"));
  long rows = -1;  // header
  for (char c : curve)
    if (c == '\n') ++rows;
  CHECK(rows == 8);  // 64 datasets / batch 8

  TrainedModel model = load_trained_model(tmp.str("run/checkpoint.json"));
  CHECK(model.completed_steps == 8);
  CHECK(model.curve.size() == 8);
}

TEST_CASE("an interrupted training run resumes to the same final checkpoint") {
  TempDir tmp("ace_cli_resume");
  nlohmann::json config = tiny_experiment(tmp.str("run"));
  write_json(tmp.str("config.json"), config);
  CHECK(run_cli({"train", "--config", tmp.str("config.json")}) == 0);
  TrainedModel full = load_trained_model(tmp.str("run/checkpoint.json"));

  // simulate an interruption: keep a mid-run state as the on-disk checkpoint
  TrainedModel partial = train(full.family, full.model_config, full.train_config, nullptr, 4);
  save_trained_model(tmp.str("run/checkpoint.json"), partial, true);
  CHECK(run_cli({"train", "--config", tmp.str("config.json")}) == 0);

  TrainedModel resumed = load_trained_model(tmp.str("run/checkpoint.json"));
  CHECK(resumed.completed_steps == full.completed_steps);
  CHECK(resumed.params.flatten() == full.params.flatten());
  CHECK(resumed.curve == full.curve);
}

TEST_CASE("evaluate with the oracle predictor reports R2 = 1") {
  TempDir tmp("ace_cli_eval");
  nlohmann::json config = tiny_experiment(tmp.str("run"));
  write_json(tmp.str("config.json"), config);
  CHECK(run_cli({"simulate", "--config", tmp.str("config.json"), "--out", tmp.str("corpus")}) == 0);
  CHECK(run_cli({"evaluate", "--config", tmp.str("config.json"), "--corpus", tmp.str("corpus"),
                 "--oracle"}) == 0);

  MetricsReport report = metrics_from_json(nlohmann::json::parse(slurp(tmp.str("run/metrics_oracle.json"))));
  REQUIRE(report.r2.has_value());
  CHECK(*report.r2 == doctest::Approx(1.0));
  CHECK(report.rmse == doctest::Approx(0.0));

  // per-method prediction rows: one per dataset
  const std::string preds = slurp(tmp.str("run/predictions_t_only.csv"));
  long rows = -1;
  for (char c : preds)
    if (c == '\n') ++rows;
  CHECK(rows == 10);
  CHECK(fs::exists(tmp.str("run/metrics_reg_lin.json")));
  CHECK(fs::exists(tmp.str("run/table.txt")));
}

TEST_CASE("trained model evaluates end to end") {
  TempDir tmp("ace_cli_e2e");
  write_json(tmp.str("config.json"), tiny_experiment(tmp.str("run")));
  CHECK(run_cli({"simulate", "--config", tmp.str("config.json"), "--out", tmp.str("corpus")}) == 0);
  CHECK(run_cli({"train", "--config", tmp.str("config.json")}) == 0);
  CHECK(run_cli({"evaluate", "--config", tmp.str("config.json"), "--corpus", tmp.str("corpus"),
                 "--checkpoint", tmp.str("run/checkpoint.json")}) == 0);
  CHECK(fs::exists(tmp.str("run/metrics_model.json")));
}

TEST_CASE("baselines subcommand emits a status CSV over the corpus") {
  TempDir tmp("ace_cli_baselines");
  write_json(tmp.str("config.json"), tiny_experiment(tmp.str("corpus")));
  CHECK(run_cli({"simulate", "--config", tmp.str("config.json")}) == 0);
  CHECK(run_cli({"baselines", "--corpus", tmp.str("corpus"), "--kinds", "t_only,tsls_lin", "--out",
                 tmp.str("estimates.csv"), "--workers", "2"}) == 0);
  const std::string csv = slurp(tmp.str("estimates.csv"));
  CHECK(csv.find("dataset_id,kind,estimate,status") == 0);
  // the confounder corpus has no instrument: tsls rows carry error statuses
  CHECK(csv.find("tsls_lin,,error:contract") != std::string::npos);
  CHECK(csv.find("t_only") != std::string::npos);
}

TEST_CASE("decompose subcommand writes the exact identity report") {
  TempDir tmp("ace_cli_decompose");
  write_json(tmp.str("toys.json"),
             {{"toys",
               {{{"builtin", "identifiable"}, {"n", 3}, {"predictor", "optimal"}},
                {{"builtin", "confounded"}, {"n", 3}, {"predictor", "optimal"}}}}});
  CHECK(run_cli({"decompose", "--config", tmp.str("toys.json"), "--out", tmp.str("decomp.json")}) == 0);
  nlohmann::json out = nlohmann::json::parse(slurp(tmp.str("decomp.json")));
  REQUIRE(out.size() == 2);
  CHECK(std::abs(out[0].at("residual").get<double>()) < 1e-9);
  CHECK(out[0].at("term_c").get<double>() == 0.0);
  CHECK(out[1].at("term_c").get<double>() > 0.0);
}

TEST_CASE("report subcommand renders merged tables") {
  TempDir tmp("ace_cli_report");
  MetricsReport r;
  r.r2 = 0.91;
  r.rmse = 0.12;
  r.n_total = r.n_filtered = 50;
  nlohmann::json j = metrics_to_json(r);
  j["setting"] = "confounder";
  j["model"] = "model";
  write_json(tmp.str("m.json"), j);
  CHECK(run_cli({"report", "--inputs", tmp.str("m.json"), "--out", tmp.str("table.txt")}) == 0);
  const std::string table = slurp(tmp.str("table.txt"));
  CHECK(table.find("confounder") != std::string::npos);
  CHECK(table.find("0.9100") != std::string::npos);
}

TEST_CASE("simulate in bridge mode writes composed corpora with a manifest") {
  TempDir tmp("ace_cli_bridge");

  // synthetic stand-in study tables
  auto write_table = [&](const std::string& name, std::uint64_t seed, int n, double frac) {
    std::ofstream os(tmp.str(name));
    os << "c0,c1,treat,outcome\n";
    RngStream stream(seed, 3);
    for (int i = 0; i < n; ++i) {
      const double t = stream.next_unit() < frac ? 1.0 : 0.0;
      os << format_double(stream.next_normal(0.0, 1.0)) << ','
         << format_double(stream.next_normal(1.0, 2.0)) << ',' << t << ','
         << format_double(stream.next_normal(0.5 * t, 1.0)) << '\n';
    }
  };
  write_table("randomized.csv", 51, 200, 0.5);
  write_table("observational.csv", 52, 600, 0.0);

  // schema as a sidecar file
  write_json(tmp.str("schema.json"),
             {{"columns",
               {{"c0", "covariate"}, {"c1", "covariate"}, {"treat", "treatment"}, {"outcome", "outcome"}}}});
  nlohmann::json config = {
      {"name", "bridge_smoke"},
      {"bridge",
       {{"randomized_csv", tmp.str("randomized.csv")},
        {"observational_csv", tmp.str("observational.csv")},
        {"schema_file", tmp.str("schema.json")},
        {"sizes", {80, 40}},
        {"cases_per_size", 2},
        {"surface", "random_mlp"},
        {"noise_scale", 0.1},
        {"seed", 5}}},
      {"out", tmp.str("semi")},
  };
  write_json(tmp.str("config.json"), config);
  CHECK(run_cli({"simulate", "--config", tmp.str("config.json")}) == 0);

  CHECK(fs::exists(tmp.str("semi/size_80/sim_0000.csv")));
  CHECK(fs::exists(tmp.str("semi/size_80/real_0001.csv")));
  CHECK(fs::exists(tmp.str("semi/size_40/sim_0001.csv")));
  nlohmann::json manifest = nlohmann::json::parse(slurp(tmp.str("semi/manifest.json")));
  CHECK(manifest.at("seed") == 5);
  CHECK(manifest.at("rule").get<std::string>().find("observational-controls") != std::string::npos);
  CHECK(manifest.at("provenance_hash").get<std::string>().size() == 16);
  CHECK(manifest.at("files").size() == 4);

  // the paired views parse back with identical (x, t) blocks
  ObservedDataset sim = load_observed_csv(tmp.str("semi/size_80/sim_0000.csv"));
  ObservedDataset real = load_observed_csv(tmp.str("semi/size_80/real_0000.csv"));
  CHECK(sim.x == real.x);
  CHECK(sim.t == real.t);
  CHECK(sim.y != real.y);
}

TEST_CASE("config errors exit with code 2") {
  TempDir tmp("ace_cli_errors");
  CHECK(run_cli({"train", "--config", tmp.str("missing.json")}) == 2);

  std::ofstream(tmp.str("broken.json")) << "{ not json";
  CHECK(run_cli({"simulate", "--config", tmp.str("broken.json")}) == 2);

  nlohmann::json bad = tiny_experiment(tmp.str("run"));
  bad["train"]["batch_size"] = 0;
  write_json(tmp.str("bad.json"), bad);
  CHECK(run_cli({"train", "--config", tmp.str("bad.json")}) == 2);

  CHECK(run_cli({"nonsense"}) == 2);
}

TEST_CASE("data-contract failures exit with code 4") {
  TempDir tmp("ace_cli_contract");
  nlohmann::json config = tiny_experiment(tmp.str("run"));
  write_json(tmp.str("config.json"), config);
  // evaluate against a corpus directory that does not exist
  CHECK(run_cli({"evaluate", "--config", tmp.str("config.json"), "--corpus", tmp.str("nowhere"),
                 "--oracle"}) == 4);
}

TEST_CASE("numeric divergence exits with code 3") {
  TempDir tmp("ace_cli_diverge");
  nlohmann::json config = tiny_experiment(tmp.str("run"));
  config["train"]["base_rate"] = 1e200;
  config["train"]["clip_norm"] = 1e300;
  config["train"]["warmup_steps"] = 0;
  config["train"]["datasets_per_epoch"] = 160;  // 20 steps; the streak spans checkpoints
  write_json(tmp.str("config.json"), config);
  CHECK(run_cli({"train", "--config", tmp.str("config.json")}) == 3);
}

TEST_CASE("seed and out overrides change the run inputs") {
  TempDir tmp("ace_cli_overrides");
  write_json(tmp.str("config.json"), tiny_experiment(tmp.str("runA")));
  CHECK(run_cli({"train", "--config", tmp.str("config.json"), "--out", tmp.str("runB"), "--seed",
                 "99"}) == 0);
  CHECK(!fs::exists(tmp.str("runA/checkpoint.json")));
  TrainedModel model = load_trained_model(tmp.str("runB/checkpoint.json"));
  CHECK(model.train_config.seed == 99);
}

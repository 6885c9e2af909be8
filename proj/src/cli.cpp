#include "ace/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "ace/data_bridge.hpp"
#include "ace/dataset_io.hpp"
#include "ace/decompose.hpp"
#include "ace/experiment.hpp"
#include "ace/metrics.hpp"
#include "ace/parallel.hpp"

namespace fs = std::filesystem;

namespace ace {

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_override;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> workers_override;
};

ExperimentConfig load_with_overrides(const CommonFlags& flags) {
  ExperimentConfig config = load_experiment(flags.config_path);
  if (!flags.out_override.empty()) config.out_dir = flags.out_override;
  if (flags.seed_override) config.train.seed = *flags.seed_override;
  if (flags.workers_override) {
    config.workers = *flags.workers_override;
    config.train.workers = *flags.workers_override;
  }
  config.validate();
  return config;
}

std::vector<double> parse_edge_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  return out;
}

// semi-synthetic flow: real tables in, composed corpora out
int cmd_simulate_bridge(const nlohmann::json& j, const CommonFlags& flags) {
  const nlohmann::json& b = j.at("bridge");
  nlohmann::json schema_json;
  if (b.contains("schema_file")) {
    std::ifstream sf(b.at("schema_file").get<std::string>());
    if (!sf) throw param_error("cannot open schema sidecar: " + b.at("schema_file").get<std::string>());
    sf >> schema_json;
  } else {
    schema_json = b.at("schema");
  }
  TableSchema schema = TableSchema::from_json(schema_json);
  RealTable randomized = load_table(b.at("randomized_csv").get<std::string>(), schema);
  RealTable observational = load_table(b.at("observational_csv").get<std::string>(), schema);

  SemisyntheticSpec spec;
  if (b.contains("surface"))
    spec.surface_kind = bridge_surface_kind_from_name(b.at("surface").get<std::string>());
  if (b.contains("noise_scale")) spec.noise_scale = b.at("noise_scale").get<double>();
  if (b.contains("sizes")) {
    spec.sizes.clear();
    for (const auto& s : b.at("sizes")) spec.sizes.push_back(s.get<Eigen::Index>());
  }
  if (b.contains("cases_per_size")) spec.cases_per_size = b.at("cases_per_size").get<int>();
  spec.seed = b.at("seed").get<std::uint64_t>();
  if (flags.seed_override) spec.seed = *flags.seed_override;

  std::string out_dir = j.at("out").get<std::string>();
  if (!flags.out_override.empty()) out_dir = flags.out_override;

  SemisyntheticCorpora corpora = semisynthetic_train_eval_split(randomized, observational, spec);
  write_semisynthetic_corpus(out_dir, corpora, spec);
  std::cerr << "simulate: wrote " << corpora.cases.size() << " composed cases to " << out_dir << "\n";
  return 0;
}

int cmd_simulate(const CommonFlags& flags) {
  {
    std::ifstream is(flags.config_path);
    if (!is) throw param_error("cannot open config: " + flags.config_path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw param_error(std::string("config parse error: ") + e.what());
    }
    if (j.contains("bridge")) return cmd_simulate_bridge(j, flags);
  }
  ExperimentConfig config = load_with_overrides(flags);
  Corpus corpus = simulate_corpus(config.family, config.train.estimand, config.train.mc_samples,
                                  config.eval.count, config.eval.dataset_size, config.eval.seed,
                                  config.workers);
  nlohmann::json echo = experiment_to_json(config);
  write_corpus(config.out_dir, corpus, echo, config.eval.seed);
  std::cerr << "simulate: wrote " << corpus.entries.size() << " datasets to " << config.out_dir
            << "\n";
  return 0;
}

int cmd_train(const CommonFlags& flags) {
  ExperimentConfig config = load_with_overrides(flags);
  fs::create_directories(config.out_dir);
  const std::string checkpoint_path = config.out_dir + "/checkpoint.json";

  auto progress = [&](long step, double mse) {
    std::cerr << "train: step " << step << "/" << config.train.total_steps() << " mse " << mse
              << "\n";
  };

  TrainedModel model;
  bool resumed = false;
  if (fs::exists(checkpoint_path)) {
    TrainedModel state = load_trained_model(checkpoint_path);
    if (state.completed_steps < state.train_config.total_steps() && !state.adam_m.empty()) {
      std::cerr << "train: resuming from step " << state.completed_steps << "\n";
      const int every = state.train_config.checkpoint_every;
      while (state.completed_steps < state.train_config.total_steps()) {
        train_continue(state, progress, every > 0 ? every : -1);
        save_trained_model(checkpoint_path, state, true);
      }
      model = std::move(state);
      resumed = true;
    }
  }
  if (!resumed) {
    TrainedModel state;
    bool started = false;
    const int every = config.train.checkpoint_every;
    long remaining = config.train.total_steps();
    while (remaining > 0) {
      const long chunk = every > 0 ? std::min<long>(every, remaining) : remaining;
      if (!started) {
        state = train(config.family, config.model, config.train, progress, chunk);
        started = true;
      } else {
        train_continue(state, progress, chunk);
      }
      save_trained_model(checkpoint_path, state, true);
      remaining = config.train.total_steps() - state.completed_steps;
    }
    model = std::move(state);
  }

  write_curve_csv(config.out_dir + "/curve.csv", model.curve);
  std::cerr << "train: checkpoint at " << checkpoint_path << " (" << model.completed_steps
            << " steps)\n";
  return 0;
}

Vector oracle_predictions(const Corpus& corpus) {
  Vector out(static_cast<Eigen::Index>(corpus.entries.size()));
  for (std::size_t i = 0; i < corpus.entries.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = corpus.entries[i].target.value;
  return out;
}

void write_predictions_csv(const std::string& path, const Vector& predictions,
                           const std::vector<std::string>& status) {
  std::ofstream os(path);
  if (!os) throw contract_error("cannot write " + path);
  os << "dataset_id,prediction,status\n";
  for (Eigen::Index i = 0; i < predictions.size(); ++i) {
    const std::string& st = status[static_cast<std::size_t>(i)];
    os << i << ',' << (st == "ok" ? format_double(predictions(i)) : "") << ',' << st << '\n';
  }
}

int cmd_evaluate(const CommonFlags& flags, const std::string& corpus_dir,
                 const std::string& checkpoint_path, bool use_oracle,
                 const std::string& filter_spec, const std::string& bucket_spec) {
  ExperimentConfig config = load_with_overrides(flags);
  const std::string dir = corpus_dir.empty() ? config.out_dir + "/corpus" : corpus_dir;
  Corpus corpus = load_corpus(dir);
  fs::create_directories(config.out_dir);

  std::optional<std::pair<double, double>> filter = config.filter_range;
  if (!filter_spec.empty()) {
    const auto edges = parse_edge_list(filter_spec);
    if (edges.size() != 2) throw param_error("--filter-range needs lo,hi");
    filter = std::make_pair(edges[0], edges[1]);
  }
  std::vector<double> bucket_edges = config.bucket_edges;
  if (!bucket_spec.empty()) bucket_edges = parse_edge_list(bucket_spec);

  Vector truths(static_cast<Eigen::Index>(corpus.entries.size()));
  for (std::size_t i = 0; i < corpus.entries.size(); ++i)
    truths(static_cast<Eigen::Index>(i)) = corpus.entries[i].target.value;

  struct MethodRun {
    std::string name;
    Vector predictions;
    std::vector<std::string> status;
  };
  std::vector<MethodRun> runs;

  if (use_oracle) {
    MethodRun run;
    run.name = "oracle";
    run.predictions = oracle_predictions(corpus);
    run.status.assign(corpus.entries.size(), "ok");
    runs.push_back(std::move(run));
  } else {
    TrainedModel model = load_trained_model(checkpoint_path.empty()
                                                ? config.out_dir + "/checkpoint.json"
                                                : checkpoint_path);
    MethodRun run;
    run.name = "model";
    run.predictions.resize(static_cast<Eigen::Index>(corpus.entries.size()));
    run.status.assign(corpus.entries.size(), "ok");
    parallel_for(corpus.entries.size(), config.workers, [&](std::size_t i) {
      const CorpusEntry& e = corpus.entries[i];
      run.predictions(static_cast<Eigen::Index>(i)) = predict_effect(model, e.dataset, e.target.query);
    });
    runs.push_back(std::move(run));
  }

  for (BaselineKind kind : config.baselines) {
    MethodRun run;
    run.name = baseline_kind_name(kind);
    run.predictions = Vector::Zero(static_cast<Eigen::Index>(corpus.entries.size()));
    run.status.assign(corpus.entries.size(), "ok");
    BaselineSpec spec{kind, config.baseline_mlp, config.allow_binary_tsls};
    parallel_for(corpus.entries.size(), config.workers, [&](std::size_t i) {
      const CorpusEntry& e = corpus.entries[i];
      try {
        run.predictions(static_cast<Eigen::Index>(i)) =
            estimate_baseline(spec, e.dataset, e.target.query);
      } catch (const Error& err) {
        run.status[i] = std::string("error:") + error_code_name(err.code());
        run.predictions(static_cast<Eigen::Index>(i)) = std::numeric_limits<double>::quiet_NaN();
      }
    });
    runs.push_back(std::move(run));
  }

  std::vector<TableEntry> table_entries;
  for (const MethodRun& run : runs) {
    // failed fits drop out of the metrics; their status rows record why
    std::vector<double> p, t;
    for (Eigen::Index i = 0; i < run.predictions.size(); ++i) {
      if (run.status[static_cast<std::size_t>(i)] == "ok") {
        p.push_back(run.predictions(i));
        t.push_back(truths(i));
      }
    }
    if (p.size() < 2) throw contract_error("evaluate: too few successful fits for " + run.name);
    Vector pv = Eigen::Map<Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
    Vector tv = Eigen::Map<Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
    MetricsReport report = compute_metrics(pv, tv, filter);

    write_predictions_csv(config.out_dir + "/predictions_" + run.name + ".csv", run.predictions,
                          run.status);
    {
      std::ofstream os(config.out_dir + "/metrics_" + run.name + ".json");
      os << metrics_to_json(report).dump(2) << '\n';
    }
    TableEntry entry;
    entry.setting = structure_name(config.family.structure);
    entry.model = run.name;
    entry.by_size[static_cast<long>(config.eval.dataset_size)] = report;
    table_entries.push_back(std::move(entry));

    if (!bucket_edges.empty() && corpus.entries.front().dataset.u_t.cols() > 0) {
      Vector strengths(static_cast<Eigen::Index>(corpus.entries.size()));
      for (std::size_t i = 0; i < corpus.entries.size(); ++i)
        strengths(static_cast<Eigen::Index>(i)) =
            analytic_instrument_strength(corpus.entries[i].gamma_x, corpus.entries[i].gamma_t);
      auto buckets = strength_buckets(strengths, run.predictions, truths, bucket_edges);
      std::ofstream os(config.out_dir + "/buckets_" + run.name + ".json");
      os << buckets_to_json(buckets).dump(2) << '\n';
    }
  }

  std::ofstream table_os(config.out_dir + "/table.txt");
  table_os << render_table(table_entries);
  std::cerr << "evaluate: wrote reports for " << runs.size() << " methods to " << config.out_dir
            << "\n";
  return 0;
}

int cmd_baselines(const std::string& corpus_dir, const std::string& kinds_csv,
                  const std::string& out_path, int workers, bool allow_binary_tsls) {
  Corpus corpus = load_corpus(corpus_dir);
  std::vector<BaselineKind> kinds;
  {
    std::stringstream ss(kinds_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) kinds.push_back(baseline_kind_from_name(tok));
  }
  if (kinds.empty()) throw param_error("baselines: no kinds given");

  std::ofstream os(out_path);
  if (!os) throw contract_error("cannot write " + out_path);
  os << "dataset_id,kind,estimate,status\n";
  for (BaselineKind kind : kinds) {
    BaselineSpec spec{kind, {}, allow_binary_tsls};
    std::vector<std::string> status(corpus.entries.size(), "ok");
    std::vector<double> estimates(corpus.entries.size(), 0.0);
    parallel_for(corpus.entries.size(), workers, [&](std::size_t i) {
      try {
        estimates[i] = estimate_baseline(spec, corpus.entries[i].dataset, corpus.entries[i].target.query);
      } catch (const Error& err) {
        status[i] = std::string("error:") + error_code_name(err.code());
      }
    });
    for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
      os << i << ',' << baseline_kind_name(kind) << ','
         << (status[i] == "ok" ? format_double(estimates[i]) : "") << ',' << status[i] << '\n';
    }
  }
  return 0;
}

ToyFamily toy_from_json(const nlohmann::json& j) {
  ToyFamily f;
  f.scms.clear();
  for (const auto& s : j.at("scms")) {
    ToyScm scm;
    scm.effect = s.at("effect").get<double>();
    scm.prior = s.at("prior").get<double>();
    scm.emission = s.at("emission").get<std::vector<double>>();
    f.scms.push_back(std::move(scm));
  }
  if (j.contains("epsilon")) {
    f.epsilon_support = j.at("epsilon").at("support").get<std::vector<double>>();
    f.epsilon_probs = j.at("epsilon").at("probs").get<std::vector<double>>();
  }
  f.validate();
  return f;
}

int cmd_decompose(const std::string& config_path, const std::string& out_path) {
  std::ifstream is(config_path);
  if (!is) throw param_error("cannot open config: " + config_path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw param_error(std::string("config parse error: ") + e.what());
  }

  nlohmann::json out = nlohmann::json::array();
  for (const auto& item : j.at("toys")) {
    ToyFamily family = item.contains("builtin")
                           ? (item.at("builtin").get<std::string>() == "identifiable"
                                  ? identifiable_toy_family()
                                  : confounded_toy_family())
                           : toy_from_json(item.at("family"));
    const int n = item.at("n").get<int>();
    const std::string predictor_name =
        item.contains("predictor") ? item.at("predictor").get<std::string>() : "optimal";
    ToyPredictor predictor = predictor_name == "prior_mean" ? prior_mean_predictor(family)
                                                            : optimal_toy_predictor(family, n);
    DecompositionReport report = exact_decomposition(family, n, predictor);
    nlohmann::json rj = decomposition_to_json(report);
    rj["n"] = n;
    rj["predictor"] = predictor_name;
    out.push_back(std::move(rj));
  }

  std::ofstream os(out_path);
  if (!os) throw contract_error("cannot write " + out_path);
  os << out.dump(2) << '\n';
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path) {
  std::vector<TableEntry> entries;
  for (const std::string& path : inputs) {
    std::ifstream is(path);
    if (!is) throw param_error("cannot open metrics file: " + path);
    nlohmann::json j;
    is >> j;
    TableEntry entry;
    entry.setting = j.contains("setting") ? j.at("setting").get<std::string>() : "-";
    entry.model = j.contains("model") ? j.at("model").get<std::string>() : fs::path(path).stem().string();
    if (j.contains("by_size")) {
      for (auto it = j.at("by_size").begin(); it != j.at("by_size").end(); ++it)
        entry.by_size[std::stol(it.key())] = metrics_from_json(it.value());
    } else {
      entry.by_size[0] = metrics_from_json(j);
    }
    entries.push_back(std::move(entry));
  }
  std::ofstream os(out_path);
  if (!os) throw contract_error("cannot write " + out_path);
  os << render_table(entries);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"amortized causal effect estimation workbench"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string corpus_dir, checkpoint_path, filter_spec, bucket_spec;
  std::string kinds_csv, out_path;
  std::vector<std::string> report_inputs;
  bool use_oracle = false;
  bool allow_binary_tsls = false;
  int workers = 1;

  auto add_common = [&](CLI::App* cmd, bool config_required = true) {
    cmd->add_option("--config", flags.config_path, "experiment config JSON")->required(config_required);
    cmd->add_option("--out", flags.out_override, "output directory override");
    cmd->add_option("--seed", flags.seed_override, "train seed override");
    cmd->add_option("--workers", flags.workers_override, "worker threads");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "materialize an evaluation corpus");
  add_common(simulate);

  CLI::App* train_cmd = app.add_subcommand("train", "train the set regressor");
  add_common(train_cmd);

  CLI::App* evaluate = app.add_subcommand("evaluate", "score model and baselines on a corpus");
  add_common(evaluate);
  evaluate->add_option("--corpus", corpus_dir, "corpus directory");
  evaluate->add_option("--checkpoint", checkpoint_path, "model checkpoint path");
  evaluate->add_flag("--oracle", use_oracle, "score the perfect-oracle predictor instead of a model");
  evaluate->add_option("--filter-range", filter_spec, "lo,hi prediction filter");
  evaluate->add_option("--buckets", bucket_spec, "instrument-strength bucket edges");

  CLI::App* baselines = app.add_subcommand("baselines", "batch per-dataset estimates: corpus in, CSV out");
  baselines->add_option("--corpus", corpus_dir, "corpus directory")->required();
  baselines->add_option("--kinds", kinds_csv, "comma-separated baseline kinds")->required();
  baselines->add_option("--out", out_path, "output CSV path")->required();
  baselines->add_option("--workers", workers, "worker threads");
  baselines->add_flag("--allow-binary-tsls", allow_binary_tsls, "enable the binary-treatment 2SLS extension");

  CLI::App* decompose = app.add_subcommand("decompose", "exact error decomposition on toy families");
  decompose->add_option("--config", flags.config_path, "decomposition config JSON")->required();
  decompose->add_option("--out", out_path, "output JSON path")->required();

  CLI::App* report = app.add_subcommand("report", "merge metrics JSON files into a text table");
  report->add_option("--inputs", report_inputs, "metrics JSON files")->required();
  report->add_option("--out", out_path, "output table path")->required();

  try {
    std::vector<const char*> argv;
    argv.push_back("ace");
    for (const std::string& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(flags);
    if (train_cmd->parsed()) return cmd_train(flags);
    if (evaluate->parsed())
      return cmd_evaluate(flags, corpus_dir, checkpoint_path, use_oracle, filter_spec, bucket_spec);
    if (baselines->parsed())
      return cmd_baselines(corpus_dir, kinds_csv, out_path, workers, allow_binary_tsls);
    if (decompose->parsed()) return cmd_decompose(flags.config_path, out_path);
    if (report->parsed()) return cmd_report(report_inputs, out_path);
  } catch (const Error& e) {
    std::cerr << "error (" << error_code_name(e.code()) << "): " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::Param: return 2;
      case ErrorCode::Numeric:
      case ErrorCode::Divergence: return 3;
      default: return 4;
    }
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace ace

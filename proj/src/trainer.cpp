#include "ace/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "ace/dataset_io.hpp"
#include "ace/parallel.hpp"

namespace ace {

void TrainConfig::validate() const {
  if (batch_size < 1) throw param_error("train: batch_size must be >= 1");
  if (epochs < 1 || datasets_per_epoch < batch_size)
    throw param_error("train: epochs >= 1 and datasets_per_epoch >= batch_size required");
  if (dataset_size < 2) throw param_error("train: dataset_size must be >= 2");
  if (mc_samples < 1) throw param_error("train: mc_samples must be >= 1");
  if (base_rate <= 0.0 || clip_norm <= 0.0) throw param_error("train: rates must be positive");
  if (workers < 1) throw param_error("train: workers must be >= 1");
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

int family_input_width(const ScmFamily& family, EstimandKind estimand) {
  const int d = family.covariate_dim;
  int width = 2;  // treatment, outcome
  switch (family.structure) {
    case Structure::Confounder: width += d; break;
    case Structure::Instrument: width += d; break;
    case Structure::Proxy: width += 2 * d; break;
    case Structure::ConfounderPlusIv: width += 2 * d; break;
  }
  if (estimand == EstimandKind::Cate) width += d;
  return width;
}

namespace {

RngStream item_stream(const TrainConfig& config, long step, int item) {
  RngStream root(config.seed, 0x545249);  // training lane
  return root.fork(static_cast<std::uint64_t>(step)).fork(static_cast<std::uint64_t>(item));
}

TrainItem make_item(const ScmFamily& family, const TrainConfig& config, RngStream& stream) {
  const bool normalize = surface_needs_normalization(family.surface_kind);
  for (int attempt = 0; attempt < 100; ++attempt) {
    ScmInstance instance = sample_scm(family, stream);
    FullTable full = sample_full_dataset(instance, config.dataset_size, stream);

    TrainItem item;
    item.dataset = observe(full, family.structure);
    EffectTarget target;
    switch (config.estimand) {
      case EstimandKind::Pate:
        target = pate(instance, config.mc_samples, stream);
        break;
      case EstimandKind::Cate: {
        Vector query(family.covariate_dim);
        for (int j = 0; j < family.covariate_dim; ++j) query(j) = stream.next_normal(0.0, 1.0);
        target = cate(instance, query, config.mc_samples, stream);
        item.query = query;
        break;
      }
      case EstimandKind::Sate:
        target = sate(instance, full, stream);
        break;
    }
    if (!normalize) {
      item.target = target.value;
      return item;
    }
    try {
      auto [normalized, norm] = normalize_effect(target.value, item.dataset.y);
      item.target = normalized;
      item.normalizer = norm;
      return item;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Degenerate) throw;
      // constant outcomes happen for the odd tree surface; redraw
    }
  }
  throw numeric_error("training item: degenerate outcomes persisted across 100 redraws");
}

double schedule_rate(const TrainConfig& config, long step) {
  const long total = config.total_steps();
  if (config.warmup_steps > 0 && step < config.warmup_steps)
    return config.base_rate * static_cast<double>(step + 1) / config.warmup_steps;
  const long decayed = std::max(1L, total - config.warmup_steps);
  const double progress = std::min(1.0, static_cast<double>(step - config.warmup_steps) / decayed);
  const double floor = config.base_rate * config.final_rate_fraction;
  return floor + 0.5 * (config.base_rate - floor) * (1.0 + std::cos(3.14159265358979323846 * progress));
}

std::vector<TrainItem> batch_for_step(const ScmFamily& family, const TrainConfig& config, long step,
                                      std::vector<TrainItem>* corpus_cache) {
  const long steps_per_epoch = config.datasets_per_epoch / config.batch_size;
  const long epoch_step = step % steps_per_epoch;

  if (config.fixed_corpus && corpus_cache != nullptr) {
    const std::size_t base = static_cast<std::size_t>(epoch_step) * config.batch_size;
    if (base + config.batch_size <= corpus_cache->size()) {
      return std::vector<TrainItem>(corpus_cache->begin() + static_cast<long>(base),
                                    corpus_cache->begin() + static_cast<long>(base) + config.batch_size);
    }
  }

  std::vector<TrainItem> batch(static_cast<std::size_t>(config.batch_size));
  const long stream_step = config.fixed_corpus ? epoch_step : step;
  parallel_for(batch.size(), config.workers, [&](std::size_t i) {
    RngStream stream = item_stream(config, stream_step, static_cast<int>(i));
    batch[i] = make_item(family, config, stream);
  });

  if (config.fixed_corpus && corpus_cache != nullptr) {
    const std::size_t base = static_cast<std::size_t>(epoch_step) * config.batch_size;
    if (corpus_cache->size() < base + config.batch_size)
      corpus_cache->resize(base + config.batch_size);
    for (int i = 0; i < config.batch_size; ++i)
      (*corpus_cache)[base + static_cast<std::size_t>(i)] = batch[static_cast<std::size_t>(i)];
  }
  return batch;
}

std::vector<BatchItem> to_batch_items(const std::vector<TrainItem>& items) {
  std::vector<BatchItem> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(BatchItem{it.dataset, it.query, it.target});
  return out;
}

void run_steps(TrainedModel& state, const std::function<void(long, double)>& progress,
               long stop_after) {
  const TrainConfig& config = state.train_config;
  long total = config.total_steps();
  if (stop_after >= 0) total = std::min(total, state.completed_steps + stop_after);
  std::vector<TrainItem> corpus_cache;

  // survives checkpoint chunking: the curve tail carries the bad-step streak
  int consecutive_bad = 0;
  for (auto it = state.curve.rbegin(); it != state.curve.rend() && !std::isfinite(*it); ++it)
    ++consecutive_bad;
  for (long step = state.completed_steps; step < total; ++step) {
    std::vector<TrainItem> items = batch_for_step(state.family, config, step, &corpus_cache);

    double mse = std::numeric_limits<double>::quiet_NaN();
    ParamTree grads;
    bool ok = true;
    try {
      auto [loss, g] = batch_loss(state.model_config, state.params, to_batch_items(items), config.workers);
      mse = loss;
      grads = std::move(g);
      ok = std::isfinite(mse) && grads.all_finite();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Numeric) throw;
      ok = false;
    }

    state.curve.push_back(mse);
    state.completed_steps = step + 1;

    if (!ok) {
      if (++consecutive_bad >= 10)
        throw DivergenceError("training diverged: non-finite loss for 10 consecutive steps",
                              state.curve);
      continue;
    }
    consecutive_bad = 0;

    // global-norm clip
    const double gnorm = std::sqrt(grads.squared_norm());
    if (gnorm > config.clip_norm) {
      ParamTree clipped = grads.zeros_like();
      clipped.add_scaled(grads, config.clip_norm / gnorm);
      grads = std::move(clipped);
    }

    // adam
    const double rate = schedule_rate(config, step);
    const double corr1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step + 1));
    const double corr2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step + 1));
    auto m_it = state.adam_m.begin();
    auto v_it = state.adam_v.begin();
    auto g_it = grads.begin();
    for (auto p_it = state.params.begin(); p_it != state.params.end(); ++p_it, ++m_it, ++v_it, ++g_it) {
      m_it->second = config.adam_beta1 * m_it->second + (1.0 - config.adam_beta1) * g_it->second;
      v_it->second = config.adam_beta2 * v_it->second +
                     (1.0 - config.adam_beta2) * g_it->second.cwiseProduct(g_it->second);
      p_it->second -= (rate / corr1) *
                      (m_it->second.array() / ((v_it->second.array() / corr2).sqrt() + config.adam_eps))
                          .matrix();
    }

    if (progress && (step % 100 == 0 || step + 1 == total)) progress(step + 1, mse);
  }
}

}  // namespace

std::vector<TrainItem> sample_training_batch(const ScmFamily& family, const TrainConfig& config,
                                             long step) {
  family.validate();
  config.validate();
  std::vector<TrainItem> batch(static_cast<std::size_t>(config.batch_size));
  parallel_for(batch.size(), config.workers, [&](std::size_t i) {
    RngStream stream = item_stream(config, step, static_cast<int>(i));
    batch[i] = make_item(family, config, stream);
  });
  return batch;
}

TrainedModel train(const ScmFamily& family, const SetModelConfig& model_config,
                   const TrainConfig& train_config,
                   const std::function<void(long, double)>& progress, long stop_after) {
  family.validate();
  model_config.validate();
  train_config.validate();
  if (model_config.input_width != family_input_width(family, train_config.estimand))
    throw contract_error("train: model input_width does not match family layout");

  TrainedModel state;
  state.model_config = model_config;
  state.train_config = train_config;
  state.family = family;
  state.family_hash = hex64(fnv1a64(family_to_json(family).dump()));
  RngStream init_stream(train_config.seed, 0x494e4954);  // init lane
  state.params = init_set_model(model_config, init_stream);
  state.normalized_targets = surface_needs_normalization(family.surface_kind);
  state.adam_m = state.params.zeros_like();
  state.adam_v = state.params.zeros_like();
  run_steps(state, progress, stop_after);
  return state;
}

void train_continue(TrainedModel& state, const std::function<void(long, double)>& progress,
                    long stop_after) {
  if (state.adam_m.empty() || state.adam_v.empty())
    throw contract_error("train_continue: checkpoint lacks optimizer state");
  run_steps(state, progress, stop_after);
}

double predict_effect(const TrainedModel& model, const ObservedDataset& dataset,
                      const std::optional<Vector>& query) {
  if ((model.train_config.estimand == EstimandKind::Cate) != query.has_value())
    throw contract_error("predict_effect: query presence must match the trained estimand");
  const double raw = forward(model.model_config, model.params, dataset, query);
  if (!model.normalized_targets) return raw;
  auto [ignored, norm] = normalize_effect(0.0, dataset.y);
  (void)ignored;
  return unnormalize_effect(raw, norm);
}

Vector predict_effects(const TrainedModel& model, const std::vector<ObservedDataset>& datasets,
                       const std::vector<std::optional<Vector>>& queries, int workers) {
  if (!queries.empty() && queries.size() != datasets.size())
    throw param_error("predict_effects: queries length mismatch");
  Vector out(static_cast<Eigen::Index>(datasets.size()));
  parallel_for(datasets.size(), workers, [&](std::size_t i) {
    const std::optional<Vector>& q = queries.empty() ? std::nullopt : queries[i];
    out(static_cast<Eigen::Index>(i)) = predict_effect(model, datasets[i], q);
  });
  return out;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"datasets_per_epoch", c.datasets_per_epoch},
      {"dataset_size", c.dataset_size},
      {"estimand", estimand_kind_name(c.estimand)},
      {"mc_samples", c.mc_samples},
      {"base_rate", c.base_rate},
      {"final_rate_fraction", c.final_rate_fraction},
      {"warmup_steps", c.warmup_steps},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"adam_eps", c.adam_eps},
      {"clip_norm", c.clip_norm},
      {"seed", c.seed},
      {"checkpoint_every", c.checkpoint_every},
      {"fixed_corpus", c.fixed_corpus},
      {"workers", c.workers},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("datasets_per_epoch")) c.datasets_per_epoch = j.at("datasets_per_epoch").get<int>();
  if (j.contains("dataset_size")) c.dataset_size = j.at("dataset_size").get<Eigen::Index>();
  if (j.contains("estimand")) c.estimand = estimand_kind_from_name(j.at("estimand").get<std::string>());
  if (j.contains("mc_samples")) c.mc_samples = j.at("mc_samples").get<long>();
  if (j.contains("base_rate")) c.base_rate = j.at("base_rate").get<double>();
  if (j.contains("final_rate_fraction")) c.final_rate_fraction = j.at("final_rate_fraction").get<double>();
  if (j.contains("warmup_steps")) c.warmup_steps = j.at("warmup_steps").get<int>();
  if (j.contains("adam_beta1")) c.adam_beta1 = j.at("adam_beta1").get<double>();
  if (j.contains("adam_beta2")) c.adam_beta2 = j.at("adam_beta2").get<double>();
  if (j.contains("adam_eps")) c.adam_eps = j.at("adam_eps").get<double>();
  if (j.contains("clip_norm")) c.clip_norm = j.at("clip_norm").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("checkpoint_every")) c.checkpoint_every = j.at("checkpoint_every").get<int>();
  if (j.contains("fixed_corpus")) c.fixed_corpus = j.at("fixed_corpus").get<bool>();
  if (j.contains("workers")) c.workers = j.at("workers").get<int>();
  c.validate();
  return c;
}

nlohmann::json trained_model_to_json(const TrainedModel& model, bool include_optimizer_state) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["kind"] = "set-regressor-checkpoint";
  j["model"] = model_config_to_json(model.model_config);
  j["train"] = train_config_to_json(model.train_config);
  j["family"] = family_to_json(model.family);
  j["params"] = params_to_json(model.params);
  j["normalized_targets"] = model.normalized_targets;
  j["completed_steps"] = model.completed_steps;
  j["curve"] = model.curve;
  j["provenance"] = {{"family_hash", model.family_hash}, {"seed", model.train_config.seed}};
  if (include_optimizer_state && !model.adam_m.empty()) {
    j["optimizer"] = {{"m", params_to_json(model.adam_m)}, {"v", params_to_json(model.adam_v)}};
  }
  return j;
}

TrainedModel trained_model_from_json(const nlohmann::json& j) {
  if (!j.contains("format_version") || j.at("format_version").get<int>() != 1)
    throw contract_error("checkpoint: unsupported format version");
  TrainedModel m;
  m.model_config = model_config_from_json(j.at("model"));
  m.train_config = train_config_from_json(j.at("train"));
  m.family = family_from_json(j.at("family"));
  m.params = params_from_json(j.at("params"));
  m.normalized_targets = j.at("normalized_targets").get<bool>();
  m.completed_steps = j.at("completed_steps").get<long>();
  m.curve = j.at("curve").get<std::vector<double>>();
  if (j.contains("provenance")) m.family_hash = j.at("provenance").at("family_hash").get<std::string>();
  if (j.contains("optimizer")) {
    m.adam_m = params_from_json(j.at("optimizer").at("m"));
    m.adam_v = params_from_json(j.at("optimizer").at("v"));
  }
  return m;
}

void save_trained_model(const std::string& path, const TrainedModel& model,
                        bool include_optimizer_state) {
  std::ofstream os(path);
  if (!os) throw contract_error("cannot open for writing: " + path);
  os << trained_model_to_json(model, include_optimizer_state).dump(2) << '\n';
}

TrainedModel load_trained_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw contract_error("cannot open: " + path);
  nlohmann::json j;
  is >> j;
  return trained_model_from_json(j);
}

void write_curve_csv(const std::string& path, const std::vector<double>& curve) {
  std::ofstream os(path);
  if (!os) throw contract_error("cannot open for writing: " + path);
  os << "step,mse\n";
  for (std::size_t i = 0; i < curve.size(); ++i)
    os << i << ',' << format_double(curve[i]) << '\n';
}

}  // namespace ace

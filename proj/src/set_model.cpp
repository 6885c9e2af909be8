#include "ace/set_model.hpp"

#include <cmath>

#include "ace/parallel.hpp"

namespace ace {

void SetModelConfig::validate() const {
  if (input_width < 2) throw param_error("model: input_width must be >= 2");
  if (embed_dim < 1 || num_blocks < 0 || num_heads < 1 || ff_width() < 1)
    throw param_error("model: extents must be positive");
  if (embed_dim % num_heads != 0) throw param_error("model: embed_dim must divide by num_heads");
}

Matrix featurize(const ObservedDataset& dataset, const std::optional<Vector>& query) {
  Matrix rows = dataset.to_matrix();
  if (!query) return rows;
  Matrix out(rows.rows(), rows.cols() + query->size());
  out.leftCols(rows.cols()) = rows;
  for (Eigen::Index j = 0; j < query->size(); ++j)
    out.col(rows.cols() + j).setConstant((*query)(j));
  return out;
}

namespace {

std::string block_key(int k, const char* suffix) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "block%02d/%s", k, suffix);
  return buf;
}

Matrix fan_in_uniform(RngStream& stream, Eigen::Index rows, Eigen::Index cols) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  return draw(stream, Law::uniform(-bound, bound), rows, cols);
}

}  // namespace

ParamTree init_set_model(const SetModelConfig& config, RngStream& stream) {
  config.validate();
  const int e = config.embed_dim;
  const int f = config.ff_width();

  ParamTree p;
  p.insert("embed/w1", fan_in_uniform(stream, config.input_width, e));
  p.insert("embed/b1", Matrix::Zero(1, e));
  p.insert("embed/w2", fan_in_uniform(stream, e, e));
  p.insert("embed/b2", Matrix::Zero(1, e));
  for (int k = 0; k < config.num_blocks; ++k) {
    p.insert(block_key(k, "attn_norm/gain"), Matrix::Ones(1, e));
    p.insert(block_key(k, "attn_norm/offset"), Matrix::Zero(1, e));
    p.insert(block_key(k, "attn/wq"), fan_in_uniform(stream, e, e));
    p.insert(block_key(k, "attn/wk"), fan_in_uniform(stream, e, e));
    p.insert(block_key(k, "attn/wv"), fan_in_uniform(stream, e, e));
    p.insert(block_key(k, "attn/wo"), fan_in_uniform(stream, e, e));
    p.insert(block_key(k, "attn/bo"), Matrix::Zero(1, e));
    p.insert(block_key(k, "ff_norm/gain"), Matrix::Ones(1, e));
    p.insert(block_key(k, "ff_norm/offset"), Matrix::Zero(1, e));
    p.insert(block_key(k, "ff/w1"), fan_in_uniform(stream, e, f));
    p.insert(block_key(k, "ff/b1"), Matrix::Zero(1, f));
    p.insert(block_key(k, "ff/w2"), fan_in_uniform(stream, f, e));
    p.insert(block_key(k, "ff/b2"), Matrix::Zero(1, e));
  }
  p.insert("final_norm/gain", Matrix::Ones(1, e));
  p.insert("final_norm/offset", Matrix::Zero(1, e));
  if (config.pooling == Pooling::Attention) p.insert("pool/q", fan_in_uniform(stream, e, 1));
  p.insert("head/w1", fan_in_uniform(stream, e, e));
  p.insert("head/b1", Matrix::Zero(1, e));
  p.insert("head/w2", fan_in_uniform(stream, e, 1));
  p.insert("head/b2", Matrix::Zero(1, 1));
  return p;
}

namespace {

using ad::Var;

Var multi_head_attention(const SetModelConfig& config, ad::Tape& tape, const ad::BoundParams& p,
                         int block, Var x) {
  const int heads = config.num_heads;
  const int dh = config.embed_dim / heads;
  Var q = ad::matmul(x, p.at(block_key(block, "attn/wq")));
  Var k = ad::matmul(x, p.at(block_key(block, "attn/wk")));
  Var v = ad::matmul(x, p.at(block_key(block, "attn/wv")));
  std::vector<Var> merged;
  merged.reserve(static_cast<std::size_t>(heads));
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    Var qh = ad::slice_cols(q, h * dh, dh);
    Var kh = ad::slice_cols(k, h * dh, dh);
    Var vh = ad::slice_cols(v, h * dh, dh);
    Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_scale);
    Var weights = ad::softmax_rows(scores);
    merged.push_back(ad::matmul(weights, vh));
  }
  Var cat = ad::concat_cols(merged);
  return ad::add_rowvec(ad::matmul(cat, p.at(block_key(block, "attn/wo"))),
                        p.at(block_key(block, "attn/bo")));
}

}  // namespace

ad::Var set_model_forward(const SetModelConfig& config, ad::Tape& tape, const ad::BoundParams& p,
                          const Matrix& rows) {
  config.validate();
  if (rows.cols() != config.input_width)
    throw contract_error("set model: dataset width " + std::to_string(rows.cols()) +
                         " does not match configured input width " + std::to_string(config.input_width));
  if (!rows.allFinite()) throw numeric_error("set model: non-finite input rows");

  Var x = tape.leaf(rows);
  // per-row embedding, 2 layers
  Var h = ad::gelu(ad::add_rowvec(ad::matmul(x, p.at("embed/w1")), p.at("embed/b1")));
  x = ad::add_rowvec(ad::matmul(h, p.at("embed/w2")), p.at("embed/b2"));

  // pre-normalization residual blocks
  for (int k = 0; k < config.num_blocks; ++k) {
    Var normed = ad::layer_norm_rows(x, p.at(block_key(k, "attn_norm/gain")),
                                     p.at(block_key(k, "attn_norm/offset")));
    x = ad::add(x, multi_head_attention(config, tape, p, k, normed));
    Var ff_in = ad::layer_norm_rows(x, p.at(block_key(k, "ff_norm/gain")),
                                    p.at(block_key(k, "ff_norm/offset")));
    Var ff = ad::gelu(ad::add_rowvec(ad::matmul(ff_in, p.at(block_key(k, "ff/w1"))),
                                      p.at(block_key(k, "ff/b1"))));
    ff = ad::add_rowvec(ad::matmul(ff, p.at(block_key(k, "ff/w2"))), p.at(block_key(k, "ff/b2")));
    x = ad::add(x, ff);
  }

  x = ad::layer_norm_rows(x, p.at("final_norm/gain"), p.at("final_norm/offset"));

  Var pooled{};
  if (config.pooling == Pooling::Mean) {
    pooled = ad::mean_rows(x);
  } else {
    Var scores = ad::softmax_flat(ad::matmul(x, p.at("pool/q")));
    pooled = ad::matmul(ad::transpose(scores), x);
  }

  Var head = ad::gelu(ad::add_rowvec(ad::matmul(pooled, p.at("head/w1")), p.at("head/b1")));
  return ad::add_rowvec(ad::matmul(head, p.at("head/w2")), p.at("head/b2"));
}

double forward(const SetModelConfig& config, const ParamTree& params, const ObservedDataset& dataset,
               const std::optional<Vector>& query) {
  ad::Tape tape(false);
  ad::BoundParams bound = ad::bind(tape, params);
  ad::Var out = set_model_forward(config, tape, bound, featurize(dataset, query));
  return tape.value(out)(0, 0);
}

std::pair<double, ParamTree> batch_loss(const SetModelConfig& config, const ParamTree& params,
                                        const std::vector<BatchItem>& batch, int workers) {
  if (batch.empty()) throw param_error("batch_loss: empty batch");
  const double inv_m = 1.0 / static_cast<double>(batch.size());

  std::vector<double> losses(batch.size(), 0.0);
  std::vector<ParamTree> grads(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    const BatchItem& item = batch[i];
    ad::Tape tape(true);
    ad::BoundParams bound = ad::bind(tape, params);
    ad::Var pred = set_model_forward(config, tape, bound, featurize(item.dataset, item.query));
    const double value = tape.value(pred)(0, 0);
    if (!std::isfinite(value))
      throw numeric_error("batch_loss: non-finite forward at batch index " + std::to_string(i));
    ad::Var err = ad::add_scalar(pred, -item.target);
    ad::Var loss = ad::square(err);
    losses[i] = tape.value(loss)(0, 0);
    tape.backward(loss);
    grads[i] = ad::grads_of(tape, bound, params);
  });

  double mse = 0.0;
  ParamTree total = params.zeros_like();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    mse += losses[i] * inv_m;
    total.add_scaled(grads[i], inv_m);
  }
  return {mse, total};
}

nlohmann::json model_config_to_json(const SetModelConfig& config) {
  return {
      {"input_width", config.input_width},
      {"embed_dim", config.embed_dim},
      {"num_blocks", config.num_blocks},
      {"num_heads", config.num_heads},
      {"feedforward_width", config.feedforward_width},
      {"pooling", config.pooling == Pooling::Mean ? "mean" : "attention"},
  };
}

SetModelConfig model_config_from_json(const nlohmann::json& j) {
  SetModelConfig c;
  c.input_width = j.at("input_width").get<int>();
  if (j.contains("embed_dim")) c.embed_dim = j.at("embed_dim").get<int>();
  if (j.contains("num_blocks")) c.num_blocks = j.at("num_blocks").get<int>();
  if (j.contains("num_heads")) c.num_heads = j.at("num_heads").get<int>();
  if (j.contains("feedforward_width")) c.feedforward_width = j.at("feedforward_width").get<int>();
  if (j.contains("pooling")) {
    const std::string p = j.at("pooling").get<std::string>();
    if (p == "mean") c.pooling = Pooling::Mean;
    else if (p == "attention") c.pooling = Pooling::Attention;
    else throw contract_error("unknown pooling: " + p);
  }
  c.validate();
  return c;
}

nlohmann::json params_to_json(const ParamTree& params) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, m] : params) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(i, c));
    j[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
  }
  return j;
}

ParamTree params_from_json(const nlohmann::json& j) {
  ParamTree p;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const Eigen::Index rows = it.value().at("rows").get<Eigen::Index>();
    const Eigen::Index cols = it.value().at("cols").get<Eigen::Index>();
    const auto data = it.value().at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw contract_error("params_from_json: length mismatch for " + it.key());
    Matrix m(rows, cols);
    std::size_t at = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[at++];
    p.insert(it.key(), std::move(m));
  }
  return p;
}

}  // namespace ace

#include "dapt/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace dapt {

namespace {

constexpr double kLayerNormEps = 1e-5;

Matrix zero_matrix(Eigen::Index r, Eigen::Index c) { return Matrix::Zero(r, c); }

Parameters zero_parameters(const ModelConfig& c) {
  const int h = c.hidden_dim;
  Parameters p;
  p.token_embedding = zero_matrix(c.vocab_size, h);
  p.position_embedding = zero_matrix(c.max_positions, h);
  p.layers.resize(static_cast<std::size_t>(c.num_layers));
  for (auto& l : p.layers) {
    l.ln1_gain = Matrix::Ones(1, h);
    l.ln1_bias = zero_matrix(1, h);
    l.w_query = zero_matrix(h, h);
    l.b_query = zero_matrix(1, h);
    l.w_key = zero_matrix(h, h);
    l.b_key = zero_matrix(1, h);
    l.w_value = zero_matrix(h, h);
    l.b_value = zero_matrix(1, h);
    l.w_out = zero_matrix(h, h);
    l.b_out = zero_matrix(1, h);
    l.ln2_gain = Matrix::Ones(1, h);
    l.ln2_bias = zero_matrix(1, h);
    l.w_ff1 = zero_matrix(h, c.ff_dim);
    l.b_ff1 = zero_matrix(1, c.ff_dim);
    l.w_ff2 = zero_matrix(c.ff_dim, h);
    l.b_ff2 = zero_matrix(1, h);
  }
  p.final_ln_gain = Matrix::Ones(1, h);
  p.final_ln_bias = zero_matrix(1, h);
  if (!c.tie_mlm_weights) p.mlm_weight = zero_matrix(h, c.vocab_size);
  p.mlm_bias = zero_matrix(1, c.vocab_size);
  if (c.cls_pooler) {
    p.pooler_weight = zero_matrix(h, h);
    p.pooler_bias = zero_matrix(1, h);
  }
  p.cls_weight = zero_matrix(h, c.num_classes);
  p.cls_bias = zero_matrix(1, c.num_classes);
  return p;
}

void fill_normal(Matrix& m, double std, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

struct LayerNormResult {
  Matrix out, norm, rstd;
};

LayerNormResult layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias) {
  LayerNormResult r;
  const auto n = static_cast<double>(x.cols());
  Eigen::VectorXd mean = x.rowwise().sum() / n;
  r.norm = x.colwise() - mean;
  Eigen::VectorXd var = r.norm.rowwise().squaredNorm() / n;
  r.rstd = (var.array() + kLayerNormEps).rsqrt().matrix();
  r.norm = r.norm.array().colwise() * r.rstd.col(0).array();
  r.out = (r.norm.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  return r;
}

Matrix layer_norm_backward(const Matrix& d_out, const Matrix& norm, const Matrix& rstd,
                           const Matrix& gain, Matrix& d_gain, Matrix& d_bias) {
  d_gain += (norm.array() * d_out.array()).colwise().sum().matrix();
  d_bias += d_out.colwise().sum();
  Matrix d_norm = d_out.array().rowwise() * gain.row(0).array();
  const auto n = static_cast<double>(d_out.cols());
  Eigen::VectorXd mean_d = d_norm.rowwise().sum() / n;
  Eigen::VectorXd mean_dn = (d_norm.array() * norm.array()).rowwise().sum() / n;
  Matrix dx = (d_norm.colwise() - mean_d) - (norm.array().colwise() * mean_dn.array()).matrix();
  return dx.array().colwise() * rstd.col(0).array();
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return {};
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix m(rows, cols);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(*rng) ? scale : 0.0;
  return m;
}

void apply_mask(Matrix& x, const Matrix& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

Matrix add_bias(const Matrix& x, const Matrix& bias) { return x.rowwise() + bias.row(0); }

void check_positions(const EncoderOutput& out, const std::vector<int>& positions) {
  for (int p : positions) {
    if (p < 0 || p >= out.hidden_states.rows()) {
      throw ValidationError("masked position " + std::to_string(p) + " outside sequence of length " +
                            std::to_string(out.hidden_states.rows()));
    }
  }
}

Matrix gather_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ValidationError(std::string("model config: ") + name + " must be positive");
  };
  positive(num_layers, "num_layers");
  positive(num_heads, "num_heads");
  positive(hidden_dim, "hidden_dim");
  positive(ff_dim, "ff_dim");
  positive(max_positions, "max_positions");
  positive(vocab_size, "vocab_size");
  positive(num_classes, "num_classes");
  if (hidden_dim % num_heads != 0) {
    throw ValidationError("model config: hidden_dim must be divisible by num_heads");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ValidationError("model config: dropout_rate must lie in [0, 1)");
  }
  if (!(init_std > 0.0)) throw ValidationError("model config: init_std must be positive");
}

Parameters Parameters::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Parameters p = zero_parameters(config);
  Rng rng(derive_seed(seed, 0x1417));
  const double s = config.init_std;
  fill_normal(p.token_embedding, s, rng);
  fill_normal(p.position_embedding, s, rng);
  for (auto& l : p.layers) {
    for (Matrix* w : {&l.w_query, &l.w_key, &l.w_value, &l.w_out, &l.w_ff1, &l.w_ff2}) {
      fill_normal(*w, s, rng);
    }
  }
  if (!config.tie_mlm_weights) fill_normal(p.mlm_weight, s, rng);
  p.reset_classifier(config, seed);
  return p;
}

void Parameters::reset_classifier(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xc1a55));
  const int h = config.hidden_dim;
  if (config.cls_pooler) {
    pooler_weight = zero_matrix(h, h);
    fill_normal(pooler_weight, config.init_std, rng);
    pooler_bias = zero_matrix(1, h);
  } else {
    pooler_weight.resize(0, 0);
    pooler_bias.resize(0, 0);
  }
  cls_weight = zero_matrix(h, config.num_classes);
  fill_normal(cls_weight, config.init_std, rng);
  cls_bias = zero_matrix(1, config.num_classes);
}

Parameters Parameters::zeros(const ModelConfig& config) {
  config.validate();
  return zero_parameters(config);
}

Parameters Parameters::zeros_like(const Parameters& other) {
  Parameters p = other;
  p.set_zero();
  return p;
}

void Parameters::for_each(const std::function<void(const std::string&, Matrix&)>& fn) {
  auto visit = [&](const std::string& name, Matrix& m) {
    if (m.size() != 0) fn(name, m);
  };
  visit("embeddings.token", token_embedding);
  visit("embeddings.position", position_embedding);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string pre = "layers." + std::to_string(i) + ".";
    visit(pre + "ln1.gain", l.ln1_gain);
    visit(pre + "ln1.bias", l.ln1_bias);
    visit(pre + "attn.query.weight", l.w_query);
    visit(pre + "attn.query.bias", l.b_query);
    visit(pre + "attn.key.weight", l.w_key);
    visit(pre + "attn.key.bias", l.b_key);
    visit(pre + "attn.value.weight", l.w_value);
    visit(pre + "attn.value.bias", l.b_value);
    visit(pre + "attn.out.weight", l.w_out);
    visit(pre + "attn.out.bias", l.b_out);
    visit(pre + "ln2.gain", l.ln2_gain);
    visit(pre + "ln2.bias", l.ln2_bias);
    visit(pre + "ff1.weight", l.w_ff1);
    visit(pre + "ff1.bias", l.b_ff1);
    visit(pre + "ff2.weight", l.w_ff2);
    visit(pre + "ff2.bias", l.b_ff2);
  }
  visit("final_ln.gain", final_ln_gain);
  visit("final_ln.bias", final_ln_bias);
  visit("mlm.weight", mlm_weight);
  visit("mlm.bias", mlm_bias);
  visit("pooler.weight", pooler_weight);
  visit("pooler.bias", pooler_bias);
  visit("classifier.weight", cls_weight);
  visit("classifier.bias", cls_bias);
}

void Parameters::for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<Parameters*>(this)->for_each(
      [&](const std::string& name, Matrix& m) { fn(name, static_cast<const Matrix&>(m)); });
}

void Parameters::set_zero() {
  for_each([](const std::string&, Matrix& m) { m.setZero(); });
}

void Parameters::add_scaled(const Parameters& other, double scale) {
  std::vector<const Matrix*> src;
  other.for_each([&](const std::string&, const Matrix& m) { src.push_back(&m); });
  std::size_t i = 0;
  for_each([&](const std::string& name, Matrix& m) {
    if (i >= src.size() || src[i]->rows() != m.rows() || src[i]->cols() != m.cols()) {
      throw ValidationError("parameter layout mismatch at " + name);
    }
    m += scale * *src[i++];
  });
}

bool Parameters::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

void Parameters::check_shapes(const ModelConfig& config) const {
  config.validate();
  const Parameters expected = zero_parameters(config);
  std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> want, have;
  expected.for_each([&](const std::string& n, const Matrix& m) { want.push_back({n, {m.rows(), m.cols()}}); });
  for_each([&](const std::string& n, const Matrix& m) { have.push_back({n, {m.rows(), m.cols()}}); });
  if (want.size() != have.size()) {
    throw ValidationError("parameter set has " + std::to_string(have.size()) + " tensors, config expects " +
                          std::to_string(want.size()));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (want[i] != have[i]) {
      throw ValidationError("tensor " + have[i].first + " has shape " +
                            std::to_string(have[i].second.first) + "x" +
                            std::to_string(have[i].second.second) + ", config expects " +
                            want[i].first + " " + std::to_string(want[i].second.first) + "x" +
                            std::to_string(want[i].second.second));
    }
  }
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    if (mx == -std::numeric_limits<double>::infinity()) {
      out.row(r).setZero();
      continue;
    }
    out.row(r) = (logits.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

EncoderOutput forward_encoder(const std::vector<TokenId>& ids, const Parameters& params,
                              const ModelConfig& config, ForwardTape* tape, Rng* dropout_rng,
                              int valid_length) {
  const auto len = static_cast<Eigen::Index>(ids.size());
  if (len == 0) throw ValidationError("cannot encode an empty sequence");
  if (len > config.max_positions) {
    throw ValidationError("sequence length " + std::to_string(len) + " exceeds max_positions " +
                          std::to_string(config.max_positions));
  }
  if (valid_length < 0 || valid_length > len) valid_length = static_cast<int>(len);
  if (valid_length == 0) throw ValidationError("valid_length must be at least 1");
  const int h = config.hidden_dim;
  const int heads = config.num_heads;
  const int dh = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double rate = config.dropout_rate;

  Matrix x(len, h);
  for (Eigen::Index i = 0; i < len; ++i) {
    const TokenId id = ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= config.vocab_size) {
      throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(config.vocab_size));
    }
    x.row(i) = params.token_embedding.row(id) + params.position_embedding.row(i);
  }
  Matrix embed_drop = dropout_mask(len, h, rate, dropout_rng);
  apply_mask(x, embed_drop);

  if (tape != nullptr) {
    tape->ids = ids;
    tape->valid_length = valid_length;
    tape->embed_drop = std::move(embed_drop);
    tape->layers.assign(params.layers.size(), LayerCache{});
    tape->recorded = false;
  }

  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& lp = params.layers[li];
    LayerCache local;
    LayerCache& c = tape != nullptr ? tape->layers[li] : local;
    c.input = x;
    auto ln1 = layer_norm(x, lp.ln1_gain, lp.ln1_bias);
    c.query = add_bias(ln1.out * lp.w_query, lp.b_query);
    c.key = add_bias(ln1.out * lp.w_key, lp.b_key);
    c.value = add_bias(ln1.out * lp.w_value, lp.b_value);
    c.context = Matrix::Zero(len, h);
    c.probs.resize(static_cast<std::size_t>(heads));
    for (int hd = 0; hd < heads; ++hd) {
      Matrix scores = c.query.middleCols(hd * dh, dh) * c.key.middleCols(hd * dh, dh).transpose();
      scores *= scale;
      if (valid_length < len) {
        scores.rightCols(len - valid_length).setConstant(-std::numeric_limits<double>::infinity());
      }
      c.probs[static_cast<std::size_t>(hd)] = softmax_rows(scores);
      c.context.middleCols(hd * dh, dh) =
          c.probs[static_cast<std::size_t>(hd)] * c.value.middleCols(hd * dh, dh);
    }
    Matrix attn = add_bias(c.context * lp.w_out, lp.b_out);
    c.attn_drop = dropout_mask(len, h, rate, dropout_rng);
    apply_mask(attn, c.attn_drop);
    c.mid = x + attn;

    auto ln2 = layer_norm(c.mid, lp.ln2_gain, lp.ln2_bias);
    c.ff_pre = add_bias(ln2.out * lp.w_ff1, lp.b_ff1);
    c.ff_act = c.ff_pre.unaryExpr([](double v) { return gelu(v); });
    Matrix ff = add_bias(c.ff_act * lp.w_ff2, lp.b_ff2);
    c.ff_drop = dropout_mask(len, h, rate, dropout_rng);
    apply_mask(ff, c.ff_drop);
    x = c.mid + ff;

    c.ln1_norm = std::move(ln1.norm);
    c.ln1_rstd = std::move(ln1.rstd);
    c.ln1_out = std::move(ln1.out);
    c.ln2_norm = std::move(ln2.norm);
    c.ln2_rstd = std::move(ln2.rstd);
    c.ln2_out = std::move(ln2.out);
  }

  auto fin = layer_norm(x, params.final_ln_gain, params.final_ln_bias);
  if (tape != nullptr) {
    tape->final_input = x;
    tape->final_norm = std::move(fin.norm);
    tape->final_rstd = std::move(fin.rstd);
    tape->recorded = true;
  }
  return EncoderOutput{std::move(fin.out)};
}

std::vector<std::vector<Matrix>> attention_maps(const std::vector<TokenId>& ids,
                                                const Parameters& params,
                                                const ModelConfig& config, int valid_length) {
  ForwardTape tape;
  forward_encoder(ids, params, config, &tape, nullptr, valid_length);
  std::vector<std::vector<Matrix>> maps;
  for (auto& l : tape.layers) maps.push_back(std::move(l.probs));
  return maps;
}

Matrix mlm_logits(const EncoderOutput& output, const std::vector<int>& positions,
                  const Parameters& params, const ModelConfig& config) {
  check_positions(output, positions);
  Matrix selected = gather_rows(output.hidden_states, positions);
  Matrix logits = config.tie_mlm_weights ? Matrix(selected * params.token_embedding.transpose())
                                         : Matrix(selected * params.mlm_weight);
  return add_bias(logits, params.mlm_bias);
}

RowVector cls_logits(const EncoderOutput& output, const Parameters& params,
                     const ModelConfig& config) {
  if (params.cls_weight.cols() != config.num_classes || params.cls_bias.cols() != config.num_classes ||
      params.cls_weight.rows() != config.hidden_dim) {
    throw ValidationError("classifier head has " + std::to_string(params.cls_weight.cols()) +
                          " outputs, config expects " + std::to_string(config.num_classes));
  }
  if (config.cls_pooler != (params.pooler_weight.size() != 0)) {
    throw ValidationError("classifier pooler presence disagrees with config");
  }
  RowVector v = output.cls_vector();
  if (config.cls_pooler) {
    v = (v * params.pooler_weight + params.pooler_bias.row(0)).array().tanh().matrix();
  }
  return v * params.cls_weight + params.cls_bias.row(0);
}

Matrix mlm_backward(const EncoderOutput& output, const std::vector<int>& positions,
                    const Matrix& d_logits, const Parameters& params, const ModelConfig& config,
                    Gradients& grads) {
  check_positions(output, positions);
  Matrix selected = gather_rows(output.hidden_states, positions);
  grads.mlm_bias += d_logits.colwise().sum();
  Matrix d_selected;
  if (config.tie_mlm_weights) {
    grads.token_embedding.noalias() += d_logits.transpose() * selected;
    d_selected = d_logits * params.token_embedding;
  } else {
    grads.mlm_weight.noalias() += selected.transpose() * d_logits;
    d_selected = d_logits * params.mlm_weight.transpose();
  }
  Matrix d_hidden = Matrix::Zero(output.hidden_states.rows(), output.hidden_states.cols());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    d_hidden.row(positions[i]) += d_selected.row(static_cast<Eigen::Index>(i));
  }
  return d_hidden;
}

Matrix cls_backward(const EncoderOutput& output, const RowVector& d_logits,
                    const Parameters& params, const ModelConfig& config, Gradients& grads) {
  RowVector v = output.cls_vector();
  RowVector pooled = v;
  if (config.cls_pooler) {
    pooled = (v * params.pooler_weight + params.pooler_bias.row(0)).array().tanh().matrix();
  }
  grads.cls_weight.noalias() += pooled.transpose() * d_logits;
  grads.cls_bias.row(0) += d_logits;
  RowVector d_v = d_logits * params.cls_weight.transpose();
  if (config.cls_pooler) {
    RowVector d_z = d_v.array() * (1.0 - pooled.array().square());
    grads.pooler_weight.noalias() += v.transpose() * d_z;
    grads.pooler_bias.row(0) += d_z;
    d_v = d_z * params.pooler_weight.transpose();
  }
  Matrix d_hidden = Matrix::Zero(output.hidden_states.rows(), output.hidden_states.cols());
  d_hidden.row(0) = d_v;
  return d_hidden;
}

void backward(const ForwardTape& tape, const Matrix& d_hidden, const Parameters& params,
              const ModelConfig& config, Gradients& grads) {
  if (!tape.recorded) throw ValidationError("backward called before a recorded forward pass");
  const int heads = config.num_heads;
  const int dh = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dx = layer_norm_backward(d_hidden, tape.final_norm, tape.final_rstd, params.final_ln_gain,
                                  grads.final_ln_gain, grads.final_ln_bias);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& lp = params.layers[li];
    const auto& c = tape.layers[li];
    auto& g = grads.layers[li];

    // Feed-forward branch.
    Matrix d_ff = dx;
    apply_mask(d_ff, c.ff_drop);
    g.b_ff2 += d_ff.colwise().sum();
    g.w_ff2.noalias() += c.ff_act.transpose() * d_ff;
    Matrix d_act = d_ff * lp.w_ff2.transpose();
    Matrix d_pre = d_act.array() * c.ff_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    g.b_ff1 += d_pre.colwise().sum();
    g.w_ff1.noalias() += c.ln2_out.transpose() * d_pre;
    Matrix d_ln2 = d_pre * lp.w_ff1.transpose();
    Matrix d_mid = dx + layer_norm_backward(d_ln2, c.ln2_norm, c.ln2_rstd, lp.ln2_gain, g.ln2_gain,
                                            g.ln2_bias);

    // Attention branch.
    Matrix d_attn = d_mid;
    apply_mask(d_attn, c.attn_drop);
    g.b_out += d_attn.colwise().sum();
    g.w_out.noalias() += c.context.transpose() * d_attn;
    Matrix d_context = d_attn * lp.w_out.transpose();
    Matrix d_query = Matrix::Zero(d_context.rows(), d_context.cols());
    Matrix d_key = d_query;
    Matrix d_value = d_query;
    for (int hd = 0; hd < heads; ++hd) {
      const Matrix& p = c.probs[static_cast<std::size_t>(hd)];
      Matrix d_ctx_h = d_context.middleCols(hd * dh, dh);
      Matrix d_p = d_ctx_h * c.value.middleCols(hd * dh, dh).transpose();
      d_value.middleCols(hd * dh, dh).noalias() += p.transpose() * d_ctx_h;
      Eigen::VectorXd row_dot = (d_p.array() * p.array()).rowwise().sum();
      Matrix d_s = p.array() * (d_p.colwise() - row_dot).array();
      d_s *= scale;
      d_query.middleCols(hd * dh, dh).noalias() += d_s * c.key.middleCols(hd * dh, dh);
      d_key.middleCols(hd * dh, dh).noalias() += d_s.transpose() * c.query.middleCols(hd * dh, dh);
    }
    g.b_query += d_query.colwise().sum();
    g.b_key += d_key.colwise().sum();
    g.b_value += d_value.colwise().sum();
    g.w_query.noalias() += c.ln1_out.transpose() * d_query;
    g.w_key.noalias() += c.ln1_out.transpose() * d_key;
    g.w_value.noalias() += c.ln1_out.transpose() * d_value;
    Matrix d_ln1 = d_query * lp.w_query.transpose() + d_key * lp.w_key.transpose() +
                   d_value * lp.w_value.transpose();
    dx = d_mid + layer_norm_backward(d_ln1, c.ln1_norm, c.ln1_rstd, lp.ln1_gain, g.ln1_gain,
                                     g.ln1_bias);
  }

  apply_mask(dx, tape.embed_drop);
  for (Eigen::Index i = 0; i < dx.rows(); ++i) {
    grads.token_embedding.row(tape.ids[static_cast<std::size_t>(i)]) += dx.row(i);
    grads.position_embedding.row(i) += dx.row(i);
  }
}

double cross_entropy_with_grad(const Matrix& logits, const std::vector<TokenId>& targets,
                               double scale, Matrix* d_logits) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
    throw ValidationError("cross-entropy needs one target per logit row");
  }
  double loss = 0.0;
  if (d_logits != nullptr) d_logits->resize(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const TokenId t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= logits.cols()) throw ValidationError("target id out of range");
    const double mx = logits.row(r).maxCoeff();
    RowVector e = (logits.row(r).array() - mx).exp();
    const double z = e.sum();
    loss += std::log(z) + mx - logits(r, t);
    if (d_logits != nullptr) {
      d_logits->row(r) = e / z * scale;
      (*d_logits)(r, t) -= scale;
    }
  }
  return loss;
}

}  // namespace dapt

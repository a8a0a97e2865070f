#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dapt/common.hpp"
#include "dapt/tokenizer.hpp"

namespace dapt {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

struct ModelConfig {
  int num_layers = 2;
  int num_heads = 2;
  int hidden_dim = 32;
  int ff_dim = 64;
  int max_positions = 512;
  int vocab_size = 0;
  int num_classes = 2;
  double dropout_rate = 0.0;
  double init_std = 0.02;
  /// MLM output projection shares the token-embedding matrix.
  bool tie_mlm_weights = true;
  /// Inserts tanh(W x + b) between the [CLS] vector and the classifier.
  bool cls_pooler = false;

  int head_dim() const { return hidden_dim / num_heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  Matrix ln1_gain, ln1_bias;
  Matrix w_query, b_query, w_key, b_key, w_value, b_value, w_out, b_out;
  Matrix ln2_gain, ln2_bias;
  Matrix w_ff1, b_ff1, w_ff2, b_ff2;
};

/// All trainable tensors. Biases and gains are 1 x n matrices so every
/// tensor can be visited uniformly. Gradients use the same type.
struct Parameters {
  Matrix token_embedding;     // vocab x hidden
  Matrix position_embedding;  // max_positions x hidden
  std::vector<LayerParams> layers;
  Matrix final_ln_gain, final_ln_bias;
  Matrix mlm_weight;  // hidden x vocab; empty when tied
  Matrix mlm_bias;    // 1 x vocab
  Matrix pooler_weight, pooler_bias;  // empty unless cls_pooler
  Matrix cls_weight;  // hidden x classes
  Matrix cls_bias;    // 1 x classes

  /// normal(0, init_std) for projections and embeddings, zeros for biases,
  /// ones for layer-norm gains.
  static Parameters initialize(const ModelConfig& config, std::uint64_t seed);
  static Parameters zeros(const ModelConfig& config);
  static Parameters zeros_like(const Parameters& other);

  /// Visits every tensor with a stable dotted name, in a fixed order.
  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;

  /// Fresh classifier head (and pooler) for `num_classes`, leaving the
  /// encoder untouched.
  void reset_classifier(const ModelConfig& config, std::uint64_t seed);

  void set_zero();
  void add_scaled(const Parameters& other, double scale);
  bool all_finite() const;
  std::size_t count() const;
  /// Throws ValidationError if any tensor shape disagrees with config.
  void check_shapes(const ModelConfig& config) const;
};

using Gradients = Parameters;

/// Final-layer states of one sequence. cls_vector is row 0.
struct EncoderOutput {
  Matrix hidden_states;  // length x hidden
  RowVector cls_vector() const { return hidden_states.row(0); }
};

struct LayerCache {
  Matrix input, ln1_norm, ln1_rstd, ln1_out;
  Matrix query, key, value;
  std::vector<Matrix> probs;  // per head, length x length
  Matrix context, attn_drop;
  Matrix mid, ln2_norm, ln2_rstd, ln2_out;
  Matrix ff_pre, ff_act, ff_drop;
};

/// Activations recorded by forward_encoder for the backward pass.
struct ForwardTape {
  std::vector<TokenId> ids;
  int valid_length = 0;
  Matrix embed_drop;
  std::vector<LayerCache> layers;
  Matrix final_input, final_norm, final_rstd;
  bool recorded = false;
};

/// Dropout is active only when `dropout_rng` is non-null and the rate is > 0.
/// Keys at positions >= valid_length are masked out of attention
/// (valid_length < 0 means the whole sequence).
EncoderOutput forward_encoder(const std::vector<TokenId>& ids, const Parameters& params,
                              const ModelConfig& config, ForwardTape* tape = nullptr,
                              Rng* dropout_rng = nullptr, int valid_length = -1);

/// Attention probabilities of every layer/head for inspection (no dropout).
std::vector<std::vector<Matrix>> attention_maps(const std::vector<TokenId>& ids,
                                                const Parameters& params,
                                                const ModelConfig& config, int valid_length = -1);

/// One row of vocabulary logits per requested position.
Matrix mlm_logits(const EncoderOutput& output, const std::vector<int>& positions,
                  const Parameters& params, const ModelConfig& config);

RowVector cls_logits(const EncoderOutput& output, const Parameters& params,
                     const ModelConfig& config);

/// Backpropagates d_logits of mlm_logits into grads; returns dL/d hidden_states.
Matrix mlm_backward(const EncoderOutput& output, const std::vector<int>& positions,
                    const Matrix& d_logits, const Parameters& params, const ModelConfig& config,
                    Gradients& grads);

/// Backpropagates d_logits of cls_logits into grads; returns dL/d hidden_states.
Matrix cls_backward(const EncoderOutput& output, const RowVector& d_logits,
                    const Parameters& params, const ModelConfig& config, Gradients& grads);

/// Accumulates encoder gradients given dL/d hidden_states. Throws if the tape
/// was never recorded by a forward pass.
void backward(const ForwardTape& tape, const Matrix& d_hidden, const Parameters& params,
              const ModelConfig& config, Gradients& grads);

/// Row-wise numerically stable softmax.
Matrix softmax_rows(const Matrix& logits);

/// Summed cross-entropy of the rows of `logits` against `targets`, and its
/// gradient with respect to the logits scaled by `scale`.
double cross_entropy_with_grad(const Matrix& logits, const std::vector<TokenId>& targets,
                               double scale, Matrix* d_logits);

}  // namespace dapt

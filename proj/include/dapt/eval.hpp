#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dapt/checkpoint.hpp"
#include "dapt/metrics.hpp"
#include "dapt/training.hpp"

namespace dapt {

struct ClassifierOutputs {
  Matrix probabilities;  // examples x classes
  std::vector<int> predictions;
  std::vector<int> labels;
  double mean_loss = 0.0;
};

/// Dropout-free forward over every example. Examples are processed in
/// order in chunks of batch_size; the result does not depend on batch_size.
ClassifierOutputs predict_classes(const Parameters& params, const ModelConfig& config,
                                  const std::vector<ClassificationExample>& examples,
                                  int batch_size = 64);

MetricsReport evaluate_classifier(const Parameters& params, const ModelConfig& config,
                                  const std::vector<ClassificationExample>& examples,
                                  AverageMode mode, int batch_size = 64);

/// Checks the tokenizer hash before evaluating a checkpoint on `docs`.
MetricsReport evaluate_checkpoint(const Checkpoint& checkpoint, const Tokenizer& tokenizer,
                                  const std::vector<Document>& docs, const ClassMap& classes,
                                  int batch_size = 64);

/// Mean masked-token cross-entropy with masks fixed by (seed, segment index),
/// so repeated calls score the same corrupted inputs.
double evaluate_mlm(const Parameters& params, const ModelConfig& config,
                    const std::vector<Segment>& segments, const MaskingPolicy& policy,
                    std::uint64_t seed);

/// The literal mask token marks the position to fill.
inline constexpr std::string_view kMaskSentinel = "[MASK]";

struct TokenScore {
  TokenId id = 0;
  std::string token;  // decoded text of the token
  double score = 0.0;
};

/// Fills the single [MASK] in `text`: softmax over the whole vocabulary at
/// that position, best k first (ties: smaller id). A single space right
/// before the sentinel belongs to the masked word, as in the training data.
std::vector<TokenScore> predict_top_k(const std::string& text, int k, const Parameters& params,
                                      const ModelConfig& config, const Tokenizer& tokenizer);

struct ScalingPoint {
  double fraction = 0.0;
  std::size_t train_size = 0;
  double holdout_log_loss = 0.0;
  std::string checkpoint_ref;
};

struct ScalingStudyResult {
  std::string init_name;
  std::vector<ScalingPoint> points;
};

struct NamedInit {
  std::string name;
  Parameters params;
};

/// Fine-tunes every init on nested subsets of `train_docs` under one protocol
/// and records mean cross-entropy on `holdout`. checkpoint_ref names the
/// selected checkpoint as "<init>/<fraction>/step-<n>".
std::vector<ScalingStudyResult> scaling_study(
    const std::vector<double>& fractions, const TrainingConfig& config,
    const ModelConfig& model_config, const std::vector<NamedInit>& inits,
    const std::vector<Document>& train_docs, const std::vector<ClassificationExample>& validation,
    const std::vector<ClassificationExample>& holdout, const Tokenizer& tokenizer,
    const ClassMap& classes, std::uint64_t subset_seed);

/// CSV with header init_name,fraction,train_size,log_loss.
std::string scaling_csv(const std::vector<ScalingStudyResult>& results);

}  // namespace dapt

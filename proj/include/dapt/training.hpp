#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dapt/corpus.hpp"
#include "dapt/metrics.hpp"
#include "dapt/model.hpp"
#include "dapt/tokenizer.hpp"

namespace dapt {

using Segment = std::vector<TokenId>;

// ---------------------------------------------------------------------------
// Segment packing and masking

/// Concatenates documents into one stream, with a [SEP] between consecutive
/// documents, and cuts it into segment_length chunks. Only the last chunk may
/// be shorter. Empty documents are skipped.
std::vector<Segment> pack_segments(const std::vector<std::vector<TokenId>>& documents,
                                   int segment_length = 512);

struct MaskingPolicy {
  double mask_rate = 0.15;
  double replace_with_mask = 0.8;
  double replace_with_random = 0.1;
  double keep_original = 0.1;
  /// Fresh positions every step; otherwise masks depend on the segment only.
  bool dynamic = true;

  void validate() const;
};

struct MaskedSegment {
  Segment input;
  std::vector<int> positions;     // ascending
  std::vector<TokenId> targets;   // original ids at `positions`
};

/// Selects round(mask_rate * maskable) positions (at least one when
/// mask_rate > 0) among non-special tokens and corrupts them 80/10/10.
/// Random replacements are drawn from the non-special ids below vocab_size.
/// Throws if the segment has no maskable position.
MaskedSegment apply_dynamic_masking(const Segment& segment, const MaskingPolicy& policy,
                                    std::uint64_t step_seed, int vocab_size);

// ---------------------------------------------------------------------------
// Labeled data

enum class Task { kBinary, kMulticlass };

Task parse_task(const std::string& name);
std::string task_name(Task task);

/// Maps documents to dense class indices. Binary: 0 = not NFC, 1 = NFC.
/// Multiclass: index into `codes` (ascending category codes).
struct ClassMap {
  Task task = Task::kBinary;
  std::vector<CategoryCode> codes;

  static ClassMap binary();
  /// Every primary category present in `docs`, ascending.
  static ClassMap multiclass_from(const std::vector<Document>& docs,
                                  const LabelScheme& scheme = LabelScheme::osti());
  int num_classes() const;
  int label_of(const Document& doc, const LabelScheme& scheme = LabelScheme::osti()) const;
  AverageMode average_mode() const {
    return task == Task::kBinary ? AverageMode::kBinary : AverageMode::kWeighted;
  }

  /// One line per class: "index<TAB>code" (binary files hold the task name).
  std::string to_text() const;
  static ClassMap from_text(const std::string& text);
};

struct ClassificationExample {
  std::string doc_id;
  std::vector<TokenId> ids;  // [CLS] followed by the document tokens
  int label = 0;
};

/// Skips unlabeled documents. Sequences are truncated to max_length.
std::vector<ClassificationExample> make_classification_examples(
    const std::vector<Document>& docs, const Tokenizer& tokenizer, const ClassMap& classes,
    int max_length);

// ---------------------------------------------------------------------------
// Training

struct TrainingConfig {
  double learning_rate = 1e-4;
  int batch_size = 16;
  /// 0 means epochs * ceil(examples / batch_size).
  long total_steps = 0;
  int epochs = 5;
  double warmup_fraction = 0.06;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_epsilon = 1e-6;
  std::uint64_t seed = 0;
  int eval_checkpoints = 20;
  int log_every = 10;
  /// Fine-tuning only: freeze embeddings plus this many lowest layers.
  int freeze_layers = 0;

  /// Every problem found, empty when valid.
  std::vector<std::string> problems() const;
  void validate() const;  // throws ValidationError listing all problems
  long resolve_total_steps(std::size_t num_examples) const;
};

/// Full-scale presets, kept for reference and config templates.
TrainingConfig full_scale_pretrain_config();
TrainingConfig full_scale_finetune_config();

struct LossRecord {
  long step = 0;
  double train_loss = 0.0;
  double validation_loss = std::numeric_limits<double>::quiet_NaN();
};

struct PretrainResult {
  Parameters params;
  std::vector<LossRecord> history;
  long steps = 0;
};

/// MLM pre-training. Starting from `init` gives continued pre-training: the
/// weights carry over, the step counter and optimizer state start fresh.
/// Throws NumericalError naming the step when the loss becomes non-finite.
PretrainResult pretrain_mlm(const TrainingConfig& config, const ModelConfig& model_config,
                            const Parameters& init, const std::vector<Segment>& segments,
                            const MaskingPolicy& policy = {},
                            const std::vector<Segment>* validation = nullptr);

struct CheckpointMeta {
  long step = 0;
  double validation_loss = 0.0;
  std::string path;
  bool is_best = false;
};

/// Index of the minimum loss; the earliest wins ties.
std::size_t select_best_checkpoint(const std::vector<double>& validation_losses);

/// Evaluation steps for a run of total_steps with `count` evaluations:
/// floor(k * total / count) for k < count, and total_steps last.
std::vector<long> checkpoint_schedule(long total_steps, int count);

struct FinetuneResult {
  ModelConfig config;
  Parameters best_params;
  std::vector<CheckpointMeta> checkpoints;
  std::size_t best_index = 0;
  MetricsReport validation_metrics;
};

/// Called at every evaluation; returns the path the checkpoint was written to
/// (or an empty string).
using CheckpointSink = std::function<std::string(long step, const ModelConfig&, const Parameters&)>;

/// Fine-tunes all parameters (minus any frozen layers) with a freshly
/// initialized classifier head, evaluating eval_checkpoints times and keeping
/// the checkpoint with the lowest validation loss.
FinetuneResult finetune_classifier(const TrainingConfig& config, const ModelConfig& base_config,
                                   const Parameters& init, const ClassMap& classes,
                                   const std::vector<ClassificationExample>& train,
                                   const std::vector<ClassificationExample>& validation,
                                   const CheckpointSink& sink = {});

struct GridRow {
  double learning_rate = 0.0;
  int batch_size = 0;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double f1 = std::numeric_limits<double>::quiet_NaN();
  double loss = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

/// One fine-tuning run per (learning rate, batch size) cell, reporting the
/// best checkpoint's validation metrics. Failing cells are marked, not fatal.
/// Cells run on up to `jobs` threads; results do not depend on `jobs`.
std::vector<GridRow> hyperparameter_grid(const TrainingConfig& base, const ModelConfig& model_config,
                                         const Parameters& init, const ClassMap& classes,
                                         const std::vector<ClassificationExample>& train,
                                         const std::vector<ClassificationExample>& validation,
                                         const std::vector<double>& learning_rates,
                                         const std::vector<int>& batch_sizes, int jobs = 1);

inline const std::vector<double> kFullScaleGridLearningRates = {1e-5, 2e-5, 5e-5};
inline const std::vector<int> kFullScaleGridBatchSizes = {16, 64};

/// Index of the lowest-loss successful row.
std::size_t best_grid_row(const std::vector<GridRow>& rows);

}  // namespace dapt

#include "dapt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace dapt {

ClassifierOutputs predict_classes(const Parameters& params, const ModelConfig& config,
                                  const std::vector<ClassificationExample>& examples,
                                  int batch_size) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (examples.empty()) throw ValidationError("no examples to evaluate");
  ClassifierOutputs out;
  out.probabilities.resize(static_cast<Eigen::Index>(examples.size()), config.num_classes);
  double loss = 0.0;
  for (std::size_t start = 0; start < examples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(examples.size(), start + static_cast<std::size_t>(batch_size));
    for (std::size_t i = start; i < end; ++i) {
      const auto& ex = examples[i];
      if (ex.label < 0 || ex.label >= config.num_classes) {
        throw ValidationError("example '" + ex.doc_id + "' has a label outside the model's classes");
      }
      Matrix logits = cls_logits(forward_encoder(ex.ids, params, config), params, config);
      Matrix probs = softmax_rows(logits);
      out.probabilities.row(static_cast<Eigen::Index>(i)) = probs.row(0);
      Eigen::Index best = 0;
      probs.row(0).maxCoeff(&best);
      out.predictions.push_back(static_cast<int>(best));
      out.labels.push_back(ex.label);
      loss += cross_entropy_with_grad(logits, {ex.label}, 1.0, nullptr);
    }
  }
  out.mean_loss = loss / static_cast<double>(examples.size());
  return out;
}

MetricsReport evaluate_classifier(const Parameters& params, const ModelConfig& config,
                                  const std::vector<ClassificationExample>& examples,
                                  AverageMode mode, int batch_size) {
  auto outputs = predict_classes(params, config, examples, batch_size);
  auto report = classification_metrics(outputs.predictions, outputs.labels, config.num_classes, mode);
  report.loss = outputs.mean_loss;
  return report;
}

MetricsReport evaluate_checkpoint(const Checkpoint& checkpoint, const Tokenizer& tokenizer,
                                  const std::vector<Document>& docs, const ClassMap& classes,
                                  int batch_size) {
  checkpoint.require_tokenizer(tokenizer.hash());
  if (classes.num_classes() != checkpoint.config.num_classes) {
    throw ValidationError("label map has " + std::to_string(classes.num_classes()) +
                          " classes but the checkpoint head has " +
                          std::to_string(checkpoint.config.num_classes));
  }
  auto examples = make_classification_examples(docs, tokenizer, classes, checkpoint.config.max_positions);
  return evaluate_classifier(checkpoint.params, checkpoint.config, examples, classes.average_mode(),
                             batch_size);
}

double evaluate_mlm(const Parameters& params, const ModelConfig& config,
                    const std::vector<Segment>& segments, const MaskingPolicy& policy,
                    std::uint64_t seed) {
  if (segments.empty()) throw ValidationError("no segments to evaluate");
  double loss = 0.0;
  std::size_t targets = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto masked = apply_dynamic_masking(segments[i], policy, derive_seed(seed ^ 0x65766c, 0xe7a1, i),
                                        config.vocab_size);
    if (masked.positions.empty()) continue;
    auto out = forward_encoder(masked.input, params, config);
    loss += cross_entropy_with_grad(mlm_logits(out, masked.positions, params, config), masked.targets,
                                    1.0, nullptr);
    targets += masked.targets.size();
  }
  if (targets == 0) {
    warn("MLM evaluation found no masked targets; loss defined as 0");
    return 0.0;
  }
  return loss / static_cast<double>(targets);
}

std::vector<TokenScore> predict_top_k(const std::string& text, int k, const Parameters& params,
                                      const ModelConfig& config, const Tokenizer& tokenizer) {
  if (k < 1) throw ValidationError("k must be at least 1");
  const auto at = text.find(kMaskSentinel);
  if (at == std::string::npos) throw ValidationError("text has no " + std::string(kMaskSentinel) + " sentinel");
  if (text.find(kMaskSentinel, at + 1) != std::string::npos) {
    throw ValidationError("text has more than one " + std::string(kMaskSentinel) + " sentinel");
  }
  std::string_view left(text.data(), at);
  if (!left.empty() && left.back() == ' ') left.remove_suffix(1);
  const std::string_view right(text.data() + at + kMaskSentinel.size(),
                               text.size() - at - kMaskSentinel.size());

  std::vector<TokenId> ids = tokenizer.encode(left);
  const int position = static_cast<int>(ids.size());
  ids.push_back(SpecialTokens::kMask);
  for (TokenId t : tokenizer.encode(right)) ids.push_back(t);
  if (static_cast<int>(ids.size()) > config.max_positions) {
    throw ValidationError("text is longer than the model's " + std::to_string(config.max_positions) +
                          " positions");
  }

  const Matrix probs = softmax_rows(mlm_logits(forward_encoder(ids, params, config), {position}, params, config));
  std::vector<TokenId> order(static_cast<std::size_t>(probs.cols()));
  std::iota(order.begin(), order.end(), 0);
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](TokenId a, TokenId b) {
                      if (probs(0, a) != probs(0, b)) return probs(0, a) > probs(0, b);
                      return a < b;
                    });
  std::vector<TokenScore> out;
  for (std::size_t i = 0; i < keep; ++i) {
    const TokenId id = order[i];
    out.push_back({id, tokenizer.decode({id}, true), probs(0, id)});
  }
  return out;
}

namespace {

std::string format_fraction(double f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", f);
  return buf;
}

}  // namespace

std::vector<ScalingStudyResult> scaling_study(
    const std::vector<double>& fractions, const TrainingConfig& config,
    const ModelConfig& model_config, const std::vector<NamedInit>& inits,
    const std::vector<Document>& train_docs, const std::vector<ClassificationExample>& validation,
    const std::vector<ClassificationExample>& holdout, const Tokenizer& tokenizer,
    const ClassMap& classes, std::uint64_t subset_seed) {
  if (inits.empty()) throw ValidationError("scaling study needs at least one initialization");
  if (holdout.empty()) throw ValidationError("scaling study needs a held-out set");
  std::vector<Document> labeled;
  for (const auto& d : train_docs) {
    if (d.labeled()) labeled.push_back(d);
  }
  const auto subsets = nested_subsets(labeled, fractions, subset_seed);

  std::vector<ScalingStudyResult> results;
  for (const auto& init : inits) {
    ScalingStudyResult r{init.name, {}};
    for (std::size_t k = 0; k < fractions.size(); ++k) {
      auto train = make_classification_examples(subsets[k], tokenizer, classes, model_config.max_positions);
      auto ft = finetune_classifier(config, model_config, init.params, classes, train, validation);
      auto outputs = predict_classes(ft.best_params, ft.config, holdout);
      ScalingPoint p;
      p.fraction = fractions[k];
      p.train_size = train.size();
      p.holdout_log_loss = outputs.mean_loss;
      p.checkpoint_ref = init.name + "/" + format_fraction(fractions[k]) + "/step-" +
                         std::to_string(ft.checkpoints[ft.best_index].step);
      r.points.push_back(std::move(p));
    }
    results.push_back(std::move(r));
  }
  return results;
}

std::string scaling_csv(const std::vector<ScalingStudyResult>& results) {
  std::ostringstream out;
  out << "init_name,fraction,train_size,log_loss\n";
  out.precision(17);
  for (const auto& r : results) {
    for (const auto& p : r.points) {
      out << r.init_name << ',' << format_fraction(p.fraction) << ',' << p.train_size << ','
          << p.holdout_log_loss << '\n';
    }
  }
  return out.str();
}

}  // namespace dapt

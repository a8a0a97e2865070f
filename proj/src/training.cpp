#include "dapt/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "dapt/eval.hpp"
#include "dapt/optimizer.hpp"

namespace dapt {

namespace {

// Stateless epoch-shuffled sampler: batch `step` covers stream positions
// [step * bs, (step + 1) * bs), wrapping into later epochs.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, int batch_size, std::uint64_t seed)
      : n_(n), batch_size_(static_cast<std::size_t>(batch_size)), seed_(seed) {}

  std::vector<std::size_t> batch(long step) {
    std::vector<std::size_t> out;
    out.reserve(batch_size_);
    const std::size_t start = static_cast<std::size_t>(step) * batch_size_;
    for (std::size_t i = start; i < start + batch_size_; ++i) {
      const std::size_t epoch = i / n_;
      out.push_back(permutation(epoch)[i % n_]);
    }
    return out;
  }

 private:
  const std::vector<std::size_t>& permutation(std::size_t epoch) {
    auto it = cache_.find(epoch);
    if (it != cache_.end()) return it->second;
    if (cache_.size() > 4) cache_.erase(cache_.begin());
    std::vector<std::size_t> perm(n_);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed_, 0xba7c, epoch));
    std::shuffle(perm.begin(), perm.end(), rng);
    return cache_.emplace(epoch, std::move(perm)).first->second;
  }

  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::map<std::size_t, std::vector<std::size_t>> cache_;
};

std::uint64_t mask_seed(std::uint64_t seed, bool dynamic, long step, std::size_t segment) {
  return derive_seed(seed ^ 0x6d61736bull, dynamic ? static_cast<std::uint64_t>(step) + 1 : 0,
                     segment);
}

bool is_frozen(const std::string& name, int freeze_layers) {
  if (freeze_layers <= 0) return false;
  if (name.rfind("embeddings.", 0) == 0) return true;
  if (name.rfind("layers.", 0) == 0) {
    const int layer = std::stoi(name.substr(7));
    return layer < freeze_layers;
  }
  return false;
}

void check_finite(double loss, const Gradients& grads, long step, const char* phase) {
  if (!std::isfinite(loss)) {
    throw NumericalError(std::string(phase) + ": non-finite loss at step " + std::to_string(step));
  }
  if (!grads.all_finite()) {
    throw NumericalError(std::string(phase) + ": non-finite gradient at step " + std::to_string(step));
  }
}

AdamConfig adam_from(const TrainingConfig& c) {
  return AdamConfig{c.adam_beta1, c.adam_beta2, c.adam_epsilon, c.weight_decay};
}

}  // namespace

std::vector<Segment> pack_segments(const std::vector<std::vector<TokenId>>& documents,
                                   int segment_length) {
  if (segment_length < 1) throw ValidationError("segment_length must be positive");
  Segment stream;
  for (const auto& doc : documents) {
    if (doc.empty()) continue;
    if (!stream.empty()) stream.push_back(SpecialTokens::kSep);
    stream.insert(stream.end(), doc.begin(), doc.end());
  }
  if (stream.empty()) throw ValidationError("cannot pack an empty token stream");
  std::vector<Segment> out;
  const auto len = static_cast<std::size_t>(segment_length);
  for (std::size_t i = 0; i < stream.size(); i += len) {
    out.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(i),
                     stream.begin() + static_cast<std::ptrdiff_t>(std::min(stream.size(), i + len)));
  }
  return out;
}

void MaskingPolicy::validate() const {
  if (!(mask_rate >= 0.0 && mask_rate < 1.0)) throw ValidationError("mask_rate must lie in [0, 1)");
  for (double r : {replace_with_mask, replace_with_random, keep_original}) {
    if (r < 0.0) throw ValidationError("masking replacement ratios must be nonnegative");
  }
  if (std::abs(replace_with_mask + replace_with_random + keep_original - 1.0) > 1e-9) {
    throw ValidationError("masking replacement ratios must sum to 1");
  }
}

MaskedSegment apply_dynamic_masking(const Segment& segment, const MaskingPolicy& policy,
                                    std::uint64_t step_seed, int vocab_size) {
  policy.validate();
  if (segment.empty()) throw ValidationError("cannot mask an empty segment");
  std::vector<int> maskable;
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (!SpecialTokens::is_special(segment[i])) maskable.push_back(static_cast<int>(i));
  }
  if (maskable.empty()) throw ValidationError("segment consists solely of special tokens");
  MaskedSegment out{segment, {}, {}};
  if (policy.mask_rate == 0.0) return out;
  if (policy.replace_with_random > 0.0 && vocab_size <= SpecialTokens::kCount) {
    throw ValidationError("vocabulary has no ordinary tokens for random replacement");
  }

  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(policy.mask_rate * static_cast<double>(maskable.size()))));
  Rng rng(step_seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, maskable.size() - 1);
    std::swap(maskable[i], maskable[pick(rng)]);
  }
  out.positions.assign(maskable.begin(), maskable.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.positions.begin(), out.positions.end());

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<TokenId> random_token(SpecialTokens::kCount, vocab_size - 1);
  for (int p : out.positions) {
    out.targets.push_back(segment[static_cast<std::size_t>(p)]);
    const double u = unit(rng);
    if (u < policy.replace_with_mask) {
      out.input[static_cast<std::size_t>(p)] = SpecialTokens::kMask;
    } else if (u < policy.replace_with_mask + policy.replace_with_random) {
      out.input[static_cast<std::size_t>(p)] = random_token(rng);
    }
  }
  return out;
}

Task parse_task(const std::string& name) {
  if (name == "binary") return Task::kBinary;
  if (name == "multiclass") return Task::kMulticlass;
  throw ValidationError("task must be 'binary' or 'multiclass', got '" + name + "'");
}

std::string task_name(Task task) { return task == Task::kBinary ? "binary" : "multiclass"; }

ClassMap ClassMap::binary() { return ClassMap{Task::kBinary, {}}; }

ClassMap ClassMap::multiclass_from(const std::vector<Document>& docs, const LabelScheme& scheme) {
  std::set<CategoryCode> present;
  for (const auto& d : docs) {
    if (auto p = d.primary_category()) {
      if (!scheme.contains(*p)) {
        throw ValidationError("document '" + d.id + "' has unknown category " + std::to_string(*p));
      }
      present.insert(*p);
    }
  }
  if (present.empty()) throw ValidationError("no labeled documents to derive classes from");
  return ClassMap{Task::kMulticlass, {present.begin(), present.end()}};
}

int ClassMap::num_classes() const {
  return task == Task::kBinary ? 2 : static_cast<int>(codes.size());
}

int ClassMap::label_of(const Document& doc, const LabelScheme& scheme) const {
  if (task == Task::kBinary) return nfc_label(doc, scheme) ? 1 : 0;
  auto p = doc.primary_category();
  if (!p) throw ValidationError("document '" + doc.id + "' has no category");
  auto it = std::lower_bound(codes.begin(), codes.end(), *p);
  if (it == codes.end() || *it != *p) {
    throw ValidationError("document '" + doc.id + "' has category " + std::to_string(*p) +
                          " outside the class map");
  }
  return static_cast<int>(it - codes.begin());
}

std::string ClassMap::to_text() const {
  std::ostringstream out;
  out << "task\t" << task_name(task) << '\n';
  for (std::size_t i = 0; i < codes.size(); ++i) out << i << '\t' << codes[i] << '\n';
  return out.str();
}

ClassMap ClassMap::from_text(const std::string& text) {
  std::istringstream in(text);
  std::string key, value;
  if (!(in >> key >> value) || key != "task") throw ValidationError("label file lacks a task line");
  ClassMap m;
  m.task = parse_task(value);
  int index;
  CategoryCode code;
  while (in >> index >> code) {
    if (index != static_cast<int>(m.codes.size())) {
      throw ValidationError("label file indices must be consecutive");
    }
    m.codes.push_back(code);
  }
  if (m.task == Task::kMulticlass && m.codes.empty()) {
    throw ValidationError("multiclass label file lists no classes");
  }
  return m;
}

std::vector<ClassificationExample> make_classification_examples(
    const std::vector<Document>& docs, const Tokenizer& tokenizer, const ClassMap& classes,
    int max_length) {
  if (max_length < 2) throw ValidationError("max_length must be at least 2");
  std::vector<ClassificationExample> out;
  for (const auto& d : docs) {
    if (!d.labeled()) continue;
    ClassificationExample ex;
    ex.doc_id = d.id;
    ex.label = classes.label_of(d);
    ex.ids.push_back(SpecialTokens::kCls);
    auto ids = tokenizer.encode(d.text);
    const auto room = static_cast<std::size_t>(max_length - 1);
    ex.ids.insert(ex.ids.end(), ids.begin(),
                  ids.begin() + static_cast<std::ptrdiff_t>(std::min(room, ids.size())));
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<std::string> TrainingConfig::problems() const {
  std::vector<std::string> p;
  if (!(learning_rate > 0.0)) p.push_back("learning_rate must be > 0");
  if (batch_size < 1) p.push_back("batch_size must be >= 1");
  if (total_steps < 0) p.push_back("total_steps must be >= 0");
  if (total_steps == 0 && epochs < 1) p.push_back("epochs must be >= 1 when total_steps is 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) p.push_back("warmup_fraction must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) p.push_back("weight_decay must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) p.push_back("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) p.push_back("adam_beta2 must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) p.push_back("adam_epsilon must be > 0");
  if (eval_checkpoints < 1) p.push_back("eval_checkpoints must be >= 1");
  if (log_every < 1) p.push_back("log_every must be >= 1");
  if (freeze_layers < 0) p.push_back("freeze_layers must be >= 0");
  return p;
}

void TrainingConfig::validate() const {
  auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid training config:";
  for (const auto& s : p) msg += "\n  " + s;
  throw ValidationError(msg);
}

long TrainingConfig::resolve_total_steps(std::size_t num_examples) const {
  if (total_steps > 0) return total_steps;
  if (num_examples == 0) throw ValidationError("no training examples");
  const auto per_epoch = (num_examples + static_cast<std::size_t>(batch_size) - 1) /
                         static_cast<std::size_t>(batch_size);
  return static_cast<long>(per_epoch) * epochs;
}

TrainingConfig full_scale_pretrain_config() {
  TrainingConfig c;
  c.learning_rate = 1e-4;
  c.batch_size = 256;
  c.total_steps = 13000;
  return c;
}

TrainingConfig full_scale_finetune_config() {
  TrainingConfig c;
  c.learning_rate = 1e-5;
  c.batch_size = 64;
  c.epochs = 5;
  c.eval_checkpoints = 20;
  return c;
}

PretrainResult pretrain_mlm(const TrainingConfig& config, const ModelConfig& model_config,
                            const Parameters& init, const std::vector<Segment>& segments,
                            const MaskingPolicy& policy, const std::vector<Segment>* validation) {
  config.validate();
  policy.validate();
  init.check_shapes(model_config);
  if (segments.empty()) throw ValidationError("no pre-training segments");

  PretrainResult result{init, {}, config.resolve_total_steps(segments.size())};
  Parameters& params = result.params;
  Gradients grads = Parameters::zeros_like(params);
  AdamW adam(params, adam_from(config));
  BatchSampler sampler(segments.size(), config.batch_size, config.seed);

  double interval_loss = 0.0;
  long interval_steps = 0;
  for (long step = 0; step < result.steps; ++step) {
    grads.set_zero();
    std::vector<MaskedSegment> batch;
    std::size_t total_targets = 0;
    for (auto idx : sampler.batch(step)) {
      batch.push_back(apply_dynamic_masking(segments[idx], policy,
                                            mask_seed(config.seed, policy.dynamic, step, idx),
                                            model_config.vocab_size));
      total_targets += batch.back().targets.size();
    }
    double loss = 0.0;
    if (total_targets > 0) {
      const double scale = 1.0 / static_cast<double>(total_targets);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& ex = batch[b];
        if (ex.positions.empty()) continue;
        Rng dropout_rng(derive_seed(config.seed, 0xd70, static_cast<std::uint64_t>(step) * 4096 + b));
        ForwardTape tape;
        auto out = forward_encoder(ex.input, params, model_config, &tape, &dropout_rng);
        Matrix logits = mlm_logits(out, ex.positions, params, model_config);
        Matrix d_logits;
        loss += cross_entropy_with_grad(logits, ex.targets, scale, &d_logits);
        Matrix d_hidden = mlm_backward(out, ex.positions, d_logits, params, model_config, grads);
        backward(tape, d_hidden, params, model_config, grads);
      }
      loss *= scale;
    }
    check_finite(loss, grads, step + 1, "pre-training");
    adam.step(params, grads,
              warmup_linear_decay(step, result.steps, config.warmup_fraction, config.learning_rate));

    interval_loss += loss;
    ++interval_steps;
    const long done = step + 1;
    if (done % config.log_every == 0 || done == result.steps) {
      LossRecord rec{done, interval_loss / static_cast<double>(interval_steps)};
      if (validation != nullptr && !validation->empty()) {
        rec.validation_loss = evaluate_mlm(params, model_config, *validation, policy, config.seed);
      }
      result.history.push_back(rec);
      interval_loss = 0.0;
      interval_steps = 0;
    }
  }
  return result;
}

std::size_t select_best_checkpoint(const std::vector<double>& losses) {
  if (losses.empty()) throw ValidationError("no checkpoints to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) {
    if (losses[i] < losses[best]) best = i;
  }
  return best;
}

std::vector<long> checkpoint_schedule(long total_steps, int count) {
  if (total_steps < 1 || count < 1) throw ValidationError("checkpoint schedule needs positive sizes");
  if (count > total_steps) {
    warn("eval_checkpoints (" + std::to_string(count) + ") exceeds total steps (" +
         std::to_string(total_steps) + "); evaluating every step");
    count = static_cast<int>(total_steps);
  }
  std::vector<long> steps;
  for (int k = 1; k < count; ++k) steps.push_back(k * total_steps / count);
  steps.push_back(total_steps);
  return steps;
}

FinetuneResult finetune_classifier(const TrainingConfig& config, const ModelConfig& base_config,
                                   const Parameters& init, const ClassMap& classes,
                                   const std::vector<ClassificationExample>& train,
                                   const std::vector<ClassificationExample>& validation,
                                   const CheckpointSink& sink) {
  config.validate();
  if (train.empty()) throw ValidationError("no fine-tuning examples");
  if (validation.empty()) throw ValidationError("no validation examples");
  if (config.freeze_layers > base_config.num_layers) {
    throw ValidationError("freeze_layers exceeds the number of encoder layers");
  }

  FinetuneResult result;
  result.config = base_config;
  result.config.num_classes = classes.num_classes();
  const ModelConfig& mc = result.config;
  const AverageMode mode = classes.average_mode();

  {
    std::set<int> seen;
    for (const auto& ex : train) seen.insert(ex.label);
    std::set<int> warned;
    for (const auto& ex : validation) {
      if (!seen.count(ex.label) && warned.insert(ex.label).second) {
        warn("class " + std::to_string(ex.label) + " appears in validation but not in training");
      }
    }
  }

  Parameters params = init;
  params.reset_classifier(mc, derive_seed(config.seed, 0x4ead));
  params.check_shapes(mc);
  Gradients grads = Parameters::zeros_like(params);
  AdamW adam(params, adam_from(config));
  BatchSampler sampler(train.size(), config.batch_size, config.seed);

  const long total = config.resolve_total_steps(train.size());
  const auto schedule = checkpoint_schedule(total, config.eval_checkpoints);
  std::size_t next_eval = 0;
  std::vector<double> losses;
  double best_loss = std::numeric_limits<double>::infinity();

  for (long step = 0; step < total; ++step) {
    grads.set_zero();
    auto idx = sampler.batch(step);
    const double scale = 1.0 / static_cast<double>(idx.size());
    double loss = 0.0;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto& ex = train[idx[b]];
      Rng dropout_rng(derive_seed(config.seed, 0xd71, static_cast<std::uint64_t>(step) * 4096 + b));
      ForwardTape tape;
      auto out = forward_encoder(ex.ids, params, mc, &tape, &dropout_rng);
      Matrix logits = cls_logits(out, params, mc);
      Matrix d_logits;
      loss += cross_entropy_with_grad(logits, {ex.label}, scale, &d_logits);
      Matrix d_hidden = cls_backward(out, d_logits.row(0), params, mc, grads);
      backward(tape, d_hidden, params, mc, grads);
    }
    loss *= scale;
    check_finite(loss, grads, step + 1, "fine-tuning");

    std::vector<std::pair<Matrix*, Matrix>> frozen;
    if (config.freeze_layers > 0) {
      params.for_each([&](const std::string& name, Matrix& m) {
        if (is_frozen(name, config.freeze_layers)) frozen.emplace_back(&m, m);
      });
    }
    adam.step(params, grads, warmup_linear_decay(step, total, config.warmup_fraction, config.learning_rate));
    for (auto& [ptr, saved] : frozen) *ptr = std::move(saved);

    const long done = step + 1;
    if (next_eval < schedule.size() && done == schedule[next_eval]) {
      ++next_eval;
      MetricsReport report = evaluate_classifier(params, mc, validation, mode);
      if (!std::isfinite(report.loss)) {
        throw NumericalError("fine-tuning: non-finite validation loss at step " + std::to_string(done));
      }
      CheckpointMeta meta{done, report.loss, sink ? sink(done, mc, params) : std::string(), false};
      result.checkpoints.push_back(meta);
      losses.push_back(report.loss);
      if (report.loss < best_loss) {
        best_loss = report.loss;
        result.best_params = params;
        result.validation_metrics = std::move(report);
      }
    }
  }
  result.best_index = select_best_checkpoint(losses);
  result.checkpoints[result.best_index].is_best = true;
  return result;
}

std::vector<GridRow> hyperparameter_grid(const TrainingConfig& base, const ModelConfig& model_config,
                                         const Parameters& init, const ClassMap& classes,
                                         const std::vector<ClassificationExample>& train,
                                         const std::vector<ClassificationExample>& validation,
                                         const std::vector<double>& learning_rates,
                                         const std::vector<int>& batch_sizes, int jobs) {
  if (learning_rates.empty() || batch_sizes.empty()) throw ValidationError("hyperparameter grid is empty");
  std::vector<GridRow> rows;
  for (double lr : learning_rates) {
    for (int bs : batch_sizes) {
      GridRow r;
      r.learning_rate = lr;
      r.batch_size = bs;
      rows.push_back(r);
    }
  }
  auto run_cell = [&](GridRow& row) {
    TrainingConfig c = base;
    c.learning_rate = row.learning_rate;
    c.batch_size = row.batch_size;
    try {
      auto res = finetune_classifier(c, model_config, init, classes, train, validation);
      row.accuracy = res.validation_metrics.accuracy;
      row.f1 = res.validation_metrics.f1;
      row.loss = res.validation_metrics.loss;
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
    }
  };
  jobs = std::clamp(jobs, 1, static_cast<int>(rows.size()));
  if (jobs == 1) {
    for (auto& r : rows) run_cell(r);
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < rows.size(); i = next++) run_cell(rows[i]);
    });
  }
  for (auto& t : pool) t.join();
  return rows;
}

std::size_t best_grid_row(const std::vector<GridRow>& rows) {
  std::size_t best = rows.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].status != "ok") continue;
    if (best == rows.size() || rows[i].loss < rows[best].loss) best = i;
  }
  if (best == rows.size()) throw ValidationError("every grid cell failed");
  return best;
}

}  // namespace dapt

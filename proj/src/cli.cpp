#include "dapt/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "dapt/analysis.hpp"
#include "dapt/checkpoint.hpp"
#include "dapt/config.hpp"
#include "dapt/corpus.hpp"
#include "dapt/eval.hpp"
#include "dapt/synthetic.hpp"
#include "dapt/tokenizer.hpp"
#include "dapt/training.hpp"

namespace dapt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Key {
  std::string name;
  std::string fallback;
  std::string help;
};

using Keys = std::vector<Key>;

Keys operator+(Keys a, const Keys& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Keys with_defaults(Keys keys, const std::map<std::string, std::string>& defaults) {
  for (auto& k : keys) {
    auto it = defaults.find(k.name);
    if (it != defaults.end()) k.fallback = it->second;
  }
  return keys;
}

const Keys kModelKeys = {
    {"num_layers", "2", "encoder layers"},
    {"num_heads", "2", "attention heads"},
    {"hidden_dim", "32", "hidden width"},
    {"ff_dim", "64", "feed-forward width"},
    {"max_positions", "128", "longest input sequence"},
    {"dropout_rate", "0", "dropout probability"},
    {"init_std", "0.02", "std of the normal weight init"},
    {"tie_mlm_weights", "true", "share token embeddings with the MLM output layer"},
    {"cls_pooler", "false", "tanh pooler before the classifier"},
};

const Keys kTrainingKeys = {
    {"learning_rate", "0.001", "peak learning rate"},
    {"batch_size", "16", "examples per step"},
    {"total_steps", "0", "optimizer steps (0: epochs * batches per epoch)"},
    {"epochs", "5", "passes over the data when total_steps is 0"},
    {"warmup_fraction", "0.06", "share of steps spent warming up"},
    {"weight_decay", "0.01", "decoupled weight decay"},
    {"adam_beta1", "0.9", "Adam beta1"},
    {"adam_beta2", "0.98", "Adam beta2"},
    {"adam_epsilon", "1e-6", "Adam epsilon"},
    {"seed", "0", "random seed"},
    {"eval_checkpoints", "20", "validation evaluations per fine-tuning run"},
    {"log_every", "50", "steps between log lines"},
    {"freeze_layers", "0", "freeze embeddings and this many lowest layers"},
};

const Keys kMaskingKeys = {
    {"mask_rate", "0.15", "share of tokens selected for prediction"},
    {"mask_token_rate", "0.8", "selected tokens replaced by [MASK]"},
    {"random_token_rate", "0.1", "selected tokens replaced by a random token"},
    {"keep_rate", "0.1", "selected tokens left unchanged"},
    {"dynamic_masking", "true", "draw fresh masks every step"},
    {"segment_length", "128", "tokens per packed segment"},
};

const Keys kLabeledDataKeys = {
    {"corpus", "", "corpus JSONL file"},
    {"splits", "", "directory of split manifests"},
    {"tokenizer", "", "tokenizer directory"},
    {"task", "", "binary or multiclass"},
    {"labels", "", "label file written by finetune"},
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class Context {
 public:
  Context(std::string command, Settings settings, std::set<std::string> explicit_keys)
      : command_(std::move(command)),
        settings_(std::move(settings)),
        explicit_(std::move(explicit_keys)),
        reader_(settings_),
        start_(std::chrono::steady_clock::now()) {}

  SettingsReader& reader() { return reader_; }
  const std::string& command() const { return command_; }
  bool given(const std::string& key) const { return explicit_.count(key) != 0; }

  std::string required(const std::string& key) {
    auto v = reader_.get_string(key);
    if (v.empty()) reader_.problem(key + ": required");
    return v;
  }

  fs::path input_file(const std::string& key, bool required = true) {
    auto v = required ? this->required(key) : reader_.get_string(key);
    if (!v.empty() && !fs::is_regular_file(v)) reader_.problem(key + ": file not found: " + v);
    return v;
  }

  fs::path input_dir(const std::string& key, bool required = true) {
    auto v = required ? this->required(key) : reader_.get_string(key);
    if (!v.empty() && !fs::is_directory(v)) reader_.problem(key + ": directory not found: " + v);
    return v;
  }

  void record_input(const std::string& name, const fs::path& path, const std::string& hash) {
    inputs_[name] = {{"path", path.string()}, {"hash", hash}};
  }
  void record_output(const fs::path& path) { outputs_.push_back(path.string()); }

  void write_manifest(const fs::path& out_dir, std::uint64_t seed) {
    json j;
    j["command"] = command_;
    j["config"] = settings_;
    j["seed"] = seed;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["finished_at"] = utc_now();
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_file_atomic(out_dir / "manifest.json", j.dump(2) + "\n");
    // Resolved settings, reusable as --config for the same command.
    write_file_atomic(out_dir / "config.txt", "# dapt " + command_ + "\n" + format_settings(settings_));
  }

 private:
  std::string command_;
  Settings settings_;
  std::set<std::string> explicit_;
  SettingsReader reader_;
  std::chrono::steady_clock::time_point start_;
  json inputs_ = json::object();
  std::vector<std::string> outputs_;
};

struct Command {
  std::string name;
  std::string description;
  Keys keys;
  std::function<void(Context&)> run;
};

// ---------------------------------------------------------------------------
// Shared loading helpers

std::vector<Document> load_inputs_corpus(Context& ctx, const fs::path& path) {
  auto docs = load_corpus(path);
  ctx.record_input("corpus", path, file_hash(path));
  return docs;
}

Tokenizer load_inputs_tokenizer(Context& ctx, const fs::path& dir) {
  auto tok = Tokenizer::load(dir);
  ctx.record_input("tokenizer", dir, tok.hash());
  return tok;
}

Checkpoint load_inputs_checkpoint(Context& ctx, const std::string& name, const fs::path& path,
                                  const Tokenizer& tokenizer) {
  auto ckpt = Checkpoint::load(path);
  ckpt.require_tokenizer(tokenizer.hash());
  ctx.record_input(name, path, file_hash(path));
  return ckpt;
}

const std::vector<Document>& pick_split(const DatasetSplits& s, const std::string& name) {
  if (name == "pretrain") return s.pretrain;
  if (name == "finetune_train") return s.finetune_train;
  if (name == "finetune_validation") return s.finetune_validation;
  if (name == "test") return s.test;
  throw ValidationError("split must be pretrain, finetune_train, finetune_validation or test; got '" +
                        name + "'");
}

void check_split_name(Context& ctx, const std::string& name) {
  static const std::set<std::string> kNames = {"pretrain", "finetune_train", "finetune_validation", "test"};
  if (!kNames.count(name)) {
    ctx.reader().problem("split: must be pretrain, finetune_train, finetune_validation or test");
  }
}

/// Reads task/labels settings; labels win, and a given task must agree.
ClassMap resolve_classes(Context& ctx, const std::vector<Document>& docs) {
  auto& r = ctx.reader();
  const auto labels = r.get_string("labels");
  const auto task = r.get_string("task");
  if (!labels.empty()) {
    auto classes = ClassMap::from_text(read_text_file(labels));
    if (!task.empty() && parse_task(task) != classes.task) {
      throw ValidationError("task '" + task + "' disagrees with label file " + labels);
    }
    ctx.record_input("labels", labels, to_hex(fnv1a(classes.to_text())));
    return classes;
  }
  if (task.empty() || parse_task(task) == Task::kBinary) return ClassMap::binary();
  return ClassMap::multiclass_from(docs);
}

void check_task(Context& ctx) {
  const auto task = ctx.reader().get_string("task");
  if (!task.empty() && task != "binary" && task != "multiclass") {
    ctx.reader().problem("task: must be binary or multiclass, got '" + task + "'");
  }
}

std::vector<Segment> segments_of(const std::vector<Document>& docs, const Tokenizer& tok, int length) {
  std::vector<std::vector<TokenId>> encoded;
  encoded.reserve(docs.size());
  for (const auto& d : docs) encoded.push_back(tok.encode(d.text));
  return pack_segments(encoded, length);
}

void save_checkpoint(Context& ctx, const fs::path& path, const ModelConfig& config,
                     const Tokenizer& tok, const Parameters& params, json metadata) {
  Checkpoint ckpt{config, tok.hash(), params, std::move(metadata)};
  ckpt.save(path);
  ctx.record_output(path);
}

// ---------------------------------------------------------------------------
// Commands

void cmd_split(Context& ctx) {
  auto& r = ctx.reader();
  const auto corpus = ctx.input_file("corpus");
  const fs::path out = ctx.required("out");
  SplitSpec spec;
  spec.pretrain_fraction = r.get_double("pretrain_fraction", spec.pretrain_fraction);
  spec.finetune_fraction = r.get_double("finetune_fraction", spec.finetune_fraction);
  spec.test_fraction = r.get_double("test_fraction", spec.test_fraction);
  spec.validation_fraction_of_finetune = r.get_double("validation_fraction", spec.validation_fraction_of_finetune);
  spec.seed = r.get_seed("seed");
  try {
    spec.validate();
  } catch (const ValidationError& e) {
    r.problem(e.what());
  }
  r.check();

  auto docs = load_inputs_corpus(ctx, corpus);
  auto splits = split_corpus(docs, spec);
  write_split_manifests(splits, out);
  for (const char* f : {"pretrain.ids", "finetune_train.ids", "finetune_validation.ids", "test.ids"}) {
    ctx.record_output(out / f);
  }
  std::cout << "pretrain " << splits.pretrain.size() << ", finetune_train " << splits.finetune_train.size()
            << ", finetune_validation " << splits.finetune_validation.size() << ", test "
            << splits.test.size() << '\n';
  ctx.write_manifest(out, spec.seed);
}

void cmd_tokenizer_train(Context& ctx) {
  auto& r = ctx.reader();
  const auto corpus = ctx.input_file("corpus");
  const auto splits_dir = ctx.input_dir("splits", false);
  const fs::path out = ctx.required("out");
  const long vocab_size = r.get_int("vocab_size", static_cast<long>(kToyVocabSize));
  if (vocab_size < static_cast<long>(SpecialTokens::kCount) + 256) {
    r.problem("vocab_size: must be at least " + std::to_string(SpecialTokens::kCount + 256));
  }
  r.check();

  auto docs = load_inputs_corpus(ctx, corpus);
  if (!splits_dir.empty()) docs = read_split_manifests(docs, splits_dir).pretrain;
  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const auto& d : docs) texts.push_back(d.text);
  auto tok = Tokenizer::train(texts, static_cast<std::size_t>(vocab_size));
  tok.save(out);
  ctx.record_output(out / "vocab.txt");
  ctx.record_output(out / "merges.txt");
  std::cout << "vocabulary " << tok.vocab_size() << " tokens, " << tok.merges().size()
            << " merges, hash " << tok.hash() << '\n';
  ctx.write_manifest(out, 0);
}

void cmd_pretrain(Context& ctx) {
  auto& r = ctx.reader();
  const auto corpus = ctx.input_file("corpus");
  const auto tok_dir = ctx.input_dir("tokenizer");
  const auto init = ctx.input_file("init", false);
  const auto splits_dir = ctx.input_dir("splits", false);
  const auto validation_path = ctx.input_file("validation_corpus", false);
  const fs::path out = ctx.required("out");
  ModelConfig mc = read_model_config(r);
  const TrainingConfig tc = read_training_config(r);
  const MaskingPolicy policy = read_masking_policy(r);
  const int segment_length = static_cast<int>(r.get_int("segment_length", 128));
  if (segment_length < 1) r.problem("segment_length: must be positive");
  r.check();

  auto docs = load_inputs_corpus(ctx, corpus);
  if (!splits_dir.empty()) docs = read_split_manifests(docs, splits_dir).pretrain;
  auto tok = load_inputs_tokenizer(ctx, tok_dir);
  Parameters params;
  if (!init.empty()) {
    auto ckpt = load_inputs_checkpoint(ctx, "init", init, tok);
    for (const auto& k : kModelKeys) {
      if (ctx.given(k.name)) warn(k.name + " is ignored: the architecture comes from --init");
    }
    mc = ckpt.config;
    params = std::move(ckpt.params);
  } else {
    mc.vocab_size = static_cast<int>(tok.vocab_size());
    mc.validate();
    params = Parameters::initialize(mc, derive_seed(tc.seed, 0x1a17));
  }
  if (segment_length > mc.max_positions) {
    throw ValidationError("segment_length " + std::to_string(segment_length) + " exceeds max_positions " +
                          std::to_string(mc.max_positions));
  }
  auto segments = segments_of(docs, tok, segment_length);
  std::vector<Segment> validation;
  if (!validation_path.empty()) {
    auto vdocs = load_corpus(validation_path);
    ctx.record_input("validation_corpus", validation_path, file_hash(validation_path));
    validation = segments_of(vdocs, tok, segment_length);
  }

  std::cout << (init.empty() ? "pre-training" : "continued pre-training") << " on " << segments.size()
            << " segments\n";
  auto result = pretrain_mlm(tc, mc, params, segments, policy, validation.empty() ? nullptr : &validation);

  std::string history = "step,train_loss,validation_loss\n";
  for (const auto& h : result.history) {
    history += std::to_string(h.step) + ',' + num(h.train_loss) + ',' + num(h.validation_loss) + '\n';
    std::cout << "step " << h.step << "  train_loss " << h.train_loss;
    if (!std::isnan(h.validation_loss)) std::cout << "  validation_loss " << h.validation_loss;
    std::cout << '\n';
  }
  save_checkpoint(ctx, out / "model.ckpt", mc, tok, result.params,
                  {{"command", "pretrain"}, {"steps", result.steps}, {"continued", !init.empty()}});
  write_file_atomic(out / "history.csv", history);
  ctx.record_output(out / "history.csv");
  ctx.write_manifest(out, tc.seed);
}

void cmd_finetune(Context& ctx) {
  auto& r = ctx.reader();
  const auto corpus = ctx.input_file("corpus");
  const auto splits_dir = ctx.input_dir("splits");
  const auto tok_dir = ctx.input_dir("tokenizer");
  const auto init = ctx.input_file("init");
  ctx.input_file("labels", false);
  const fs::path out = ctx.required("out");
  check_task(ctx);
  const TrainingConfig tc = read_training_config(r);
  const bool keep = r.get_bool("keep_checkpoints", true);
  const double dropout = r.get_double("dropout_rate", -1.0);
  const bool pooler_given = !r.get_string("cls_pooler").empty();
  const bool pooler = r.get_bool("cls_pooler", false);
  r.check();

  auto docs = load_inputs_corpus(ctx, corpus);
  auto splits = read_split_manifests(docs, splits_dir);
  auto tok = load_inputs_tokenizer(ctx, tok_dir);
  auto base = load_inputs_checkpoint(ctx, "init", init, tok);
  ModelConfig mc = base.config;
  if (dropout >= 0.0) mc.dropout_rate = dropout;
  if (pooler_given) mc.cls_pooler = pooler;
  auto classes = resolve_classes(ctx, docs);
  mc.num_classes = classes.num_classes();
  mc.validate();
  auto train = make_classification_examples(splits.finetune_train, tok, classes, mc.max_positions);
  auto validation = make_classification_examples(splits.finetune_validation, tok, classes, mc.max_positions);

  fs::create_directories(out);
  write_file_atomic(out / "labels.txt", classes.to_text());
  ctx.record_output(out / "labels.txt");
  CheckpointSink sink;
  if (keep) {
    sink = [&](long step, const ModelConfig& config, const Parameters& params) {
      const auto path = out / "checkpoints" / ("step-" + std::to_string(step) + ".ckpt");
      save_checkpoint(ctx, path, config, tok, params, {{"command", "finetune"}, {"step", step}});
      return path.string();
    };
  }
  std::cout << "fine-tuning (" << task_name(classes.task) << ", " << classes.num_classes() << " classes) on "
            << train.size() << " examples, validating on " << validation.size() << '\n';
  auto result = finetune_classifier(tc, mc, base.params, classes, train, validation, sink);

  std::string table = "step,validation_loss,is_best,path\n";
  for (const auto& c : result.checkpoints) {
    table += std::to_string(c.step) + ',' + num(c.validation_loss) + ',' + (c.is_best ? "1" : "0") + ',' +
             c.path + '\n';
    std::cout << "step " << c.step << "  validation_loss " << c.validation_loss << (c.is_best ? "  *" : "") << '\n';
  }
  const auto& best = result.checkpoints[result.best_index];
  save_checkpoint(ctx, out / "best.ckpt", result.config, tok, result.best_params,
                  {{"command", "finetune"}, {"step", best.step}, {"task", task_name(classes.task)}});
  write_file_atomic(out / "checkpoints.csv", table);
  write_file_atomic(out / "validation_metrics.json", result.validation_metrics.to_json().dump(2) + "\n");
  ctx.record_output(out / "checkpoints.csv");
  ctx.record_output(out / "validation_metrics.json");
  std::cout << "best checkpoint: step " << best.step << '\n' << result.validation_metrics.to_table();
  ctx.write_manifest(out, tc.seed);
}

void cmd_eval(Context& ctx) {
  auto& r = ctx.reader();
  const auto corpus = ctx.input_file("corpus");
  const auto splits_dir = ctx.input_dir("splits");
  const auto tok_dir = ctx.input_dir("tokenizer");
  const auto ckpt_path = ctx.input_file("checkpoint");
  ctx.input_file("labels");
  const fs::path out = ctx.required("out");
  const auto split = r.get_string("split", "test");
  check_split_name(ctx, split);
  check_task(ctx);
  const int batch_size = static_cast<int>(r.get_int("batch_size", 64));
  if (batch_size < 1) r.problem("batch_size: must be >= 1");
  r.check();

  auto docs = load_inputs_corpus(ctx, corpus);
  auto splits = read_split_manifests(docs, splits_dir);
  auto tok = load_inputs_tokenizer(ctx, tok_dir);
  auto ckpt = load_inputs_checkpoint(ctx, "checkpoint", ckpt_path, tok);
  auto classes = resolve_classes(ctx, docs);
  if (classes.num_classes() != ckpt.config.num_classes) {
    throw ValidationError("label file has " + std::to_string(classes.num_classes()) +
                          " classes but the checkpoint head has " + std::to_string(ckpt.config.num_classes));
  }
  auto examples = make_classification_examples(pick_split(splits, split), tok, classes, ckpt.config.max_positions);
  auto outputs = predict_classes(ckpt.params, ckpt.config, examples, batch_size);
  auto report = classification_metrics(outputs.predictions, outputs.labels, ckpt.config.num_classes,
                                       classes.average_mode());
  report.loss = outputs.mean_loss;

  std::string preds = "id,label,prediction\n";
  for (std::size_t i = 0; i < examples.size(); ++i) {
    preds += examples[i].doc_id + ',' + std::to_string(outputs.labels[i]) + ',' +
             std::to_string(outputs.predictions[i]) + '\n';
  }
  auto j = report.to_json();
  j["split"] = split;
  write_file_atomic(out / "metrics.json", j.dump(2) + "\n");
  write_file_atomic(out / "metrics.txt", report.to_table());
  write_file_atomic(out / "predictions.csv", preds);
  for (const char* f : {"metrics.json", "metrics.txt", "predictions.csv"}) ctx.record_output(out / f);
  std::cout << split << ": " << report.to_table();
  ctx.write_manifest(out, 0);
}

void cmd_mask_predict(Context& ctx) {
  auto& r = ctx.reader();
  const auto tok_dir = ctx.input_dir("tokenizer");
  const auto ckpt_path = ctx.input_file("checkpoint");
  const auto text = ctx.required("text");
  const long k = r.get_int("k", 5);
  const fs::path out = r.get_string("out");
  if (k < 1) r.problem("k: must be >= 1");
  r.check();

  auto tok = load_inputs_tokenizer(ctx, tok_dir);
  auto ckpt = load_inputs_checkpoint(ctx, "checkpoint", ckpt_path, tok);
  auto top = predict_top_k(text, static_cast<int>(k), ckpt.params, ckpt.config, tok);
  std::string csv = "rank,token,score\n";
  char buf[64];
  for (std::size_t i = 0; i < top.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f", top[i].score);
    std::cout << i + 1 << '\t' << top[i].token << '\t' << buf << '\n';
    std::string quoted;
    for (char c : top[i].token) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
    csv += std::to_string(i + 1) + ",\"" + quoted + "\"," + num(top[i].score) + '\n';
  }
  if (!out.empty()) {
    write_file_atomic(out / "predictions.csv", csv);
    ctx.record_output(out / "predictions.csv");
    ctx.write_manifest(out, 0);
  }
}

void cmd_scale_study(Context& ctx) {
  auto& r = ctx.reader();
  const auto corpus = ctx.input_file("corpus");
  const auto splits_dir = ctx.input_dir("splits");
  const auto tok_dir = ctx.input_dir("tokenizer");
  ctx.input_file("labels", false);
  const fs::path out = ctx.required("out");
  check_task(ctx);
  const auto fractions = r.get_doubles("fractions", {0.05, 0.25, 1.0});
  const auto subset_seed = r.get_seed("subset_seed");
  const TrainingConfig tc = read_training_config(r);
  std::vector<std::pair<std::string, fs::path>> init_paths;
  for (const auto& item : split_list(ctx.required("inits"))) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      r.problem("inits: expected name=checkpoint entries, got '" + item + "'");
      continue;
    }
    init_paths.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    if (!fs::is_regular_file(init_paths.back().second)) {
      r.problem("inits: file not found: " + init_paths.back().second.string());
    }
  }
  r.check();

  auto docs = load_inputs_corpus(ctx, corpus);
  auto splits = read_split_manifests(docs, splits_dir);
  auto tok = load_inputs_tokenizer(ctx, tok_dir);
  auto classes = resolve_classes(ctx, docs);
  std::vector<NamedInit> inits;
  ModelConfig mc;
  for (const auto& [name, path] : init_paths) {
    auto ckpt = load_inputs_checkpoint(ctx, "init:" + name, path, tok);
    ModelConfig c = ckpt.config;
    c.num_classes = classes.num_classes();
    if (inits.empty()) {
      mc = c;
    } else if (!(c == mc)) {
      throw ValidationError("init '" + name + "' has a different architecture from '" + inits.front().name + "'");
    }
    inits.push_back({name, std::move(ckpt.params)});
  }
  auto validation = make_classification_examples(splits.finetune_validation, tok, classes, mc.max_positions);
  auto holdout = make_classification_examples(splits.test, tok, classes, mc.max_positions);
  auto results = scaling_study(fractions, tc, mc, inits, splits.finetune_train, validation, holdout, tok,
                               classes, subset_seed);

  json points = json::array();
  for (const auto& res : results) {
    for (const auto& p : res.points) {
      points.push_back({{"init_name", res.init_name},
                        {"fraction", p.fraction},
                        {"train_size", p.train_size},
                        {"log_loss", p.holdout_log_loss},
                        {"checkpoint", p.checkpoint_ref}});
    }
  }
  const auto csv = scaling_csv(results);
  write_file_atomic(out / "scaling.csv", csv);
  write_file_atomic(out / "scaling.json", points.dump(2) + "\n");
  ctx.record_output(out / "scaling.csv");
  ctx.record_output(out / "scaling.json");
  std::cout << csv;
  ctx.write_manifest(out, tc.seed);
}

void cmd_topics(Context& ctx) {
  auto& r = ctx.reader();
  const auto corpus = ctx.input_file("corpus");
  const auto splits_dir = ctx.input_dir("splits", false);
  const auto tok_dir = ctx.input_dir("tokenizer");
  const auto ckpt_path = ctx.input_file("checkpoint");
  const fs::path out = ctx.required("out");
  const auto split = r.get_string("split", "finetune_validation");
  check_split_name(ctx, split);
  const long sample = r.get_int("sample", 0);
  const long top_k = r.get_int("top_k", 3);
  const auto seed = r.get_seed("seed");
  ClusterParams cp;
  cp.min_cluster_size = static_cast<int>(r.get_int("min_cluster_size", cp.min_cluster_size));
  cp.min_samples = static_cast<int>(r.get_int("min_samples", cp.min_samples));
  cp.radius = r.get_double("radius", cp.radius);
  cp.reduce_dims = static_cast<int>(r.get_int("reduce_dims", cp.reduce_dims));
  if (sample < 0) r.problem("sample: must be >= 0 (0 uses every document)");
  if (top_k < 1) r.problem("top_k: must be >= 1");
  if (cp.min_cluster_size < 2) r.problem("min_cluster_size: must be >= 2");
  if (cp.min_samples < 1) r.problem("min_samples: must be >= 1");
  if (cp.reduce_dims < 0) r.problem("reduce_dims: must be >= 0");
  r.check();

  auto docs = load_inputs_corpus(ctx, corpus);
  if (!splits_dir.empty()) docs = pick_split(read_split_manifests(docs, splits_dir), split);
  auto tok = load_inputs_tokenizer(ctx, tok_dir);
  auto ckpt = load_inputs_checkpoint(ctx, "checkpoint", ckpt_path, tok);
  const auto n = sample == 0 ? docs.size() : static_cast<std::size_t>(sample);
  auto embeddings = export_cls_embeddings(ckpt, tok, docs, n, seed);
  auto coords = project_2d(embeddings);
  auto assignment = cluster_embeddings(embeddings, cp);
  std::vector<std::string> truth;
  {
    std::map<std::string, const Document*> by_id;
    for (const auto& d : docs) by_id[d.id] = &d;
    for (const auto& id : embeddings.ids) {
      const auto* d = by_id.at(id);
      truth.push_back(d->labeled() ? (nfc_label(*d) ? "1" : "0") : "");
    }
  }
  std::cout << assignment.n_clusters << " clusters, " << assignment.outliers() << " outliers (radius "
            << assignment.radius << ")\n";
  std::string report;
  std::string topics = "cluster,rank,word,score\n";
  if (assignment.n_clusters > 0) {
    auto summary = cbtfidf_topics(assignment, docs, static_cast<int>(top_k));
    report = topic_report(summary);
    topics = topics_csv(summary);
  } else {
    warn("no clusters found; topic files are empty");
  }
  std::cout << report;
  embeddings.save(out / "embeddings.txt");
  write_file_atomic(out / "projection.csv", projection_csv(assignment, coords, truth));
  write_file_atomic(out / "topics.csv", topics);
  write_file_atomic(out / "topics.txt", report);
  for (const char* f : {"embeddings.txt", "embeddings.txt.ids", "projection.csv", "topics.csv", "topics.txt"}) {
    ctx.record_output(out / f);
  }
  ctx.write_manifest(out, seed);
}

void cmd_grid(Context& ctx) {
  auto& r = ctx.reader();
  const auto corpus = ctx.input_file("corpus");
  const auto splits_dir = ctx.input_dir("splits");
  const auto tok_dir = ctx.input_dir("tokenizer");
  const auto init = ctx.input_file("init");
  ctx.input_file("labels", false);
  const fs::path out = ctx.required("out");
  check_task(ctx);
  const auto lrs = r.get_doubles("learning_rates", kFullScaleGridLearningRates);
  const auto bss = r.get_ints("batch_sizes", kFullScaleGridBatchSizes);
  const long jobs = r.get_int("jobs", 1);
  if (jobs < 1) r.problem("jobs: must be >= 1");
  const TrainingConfig tc = read_training_config(r);
  for (double lr : lrs) {
    if (!(lr > 0.0)) r.problem("learning_rates: every value must be > 0");
  }
  for (int bs : bss) {
    if (bs < 1) r.problem("batch_sizes: every value must be >= 1");
  }
  r.check();

  auto docs = load_inputs_corpus(ctx, corpus);
  auto splits = read_split_manifests(docs, splits_dir);
  auto tok = load_inputs_tokenizer(ctx, tok_dir);
  auto base = load_inputs_checkpoint(ctx, "init", init, tok);
  auto classes = resolve_classes(ctx, docs);
  ModelConfig mc = base.config;
  mc.num_classes = classes.num_classes();
  auto train = make_classification_examples(splits.finetune_train, tok, classes, mc.max_positions);
  auto validation = make_classification_examples(splits.finetune_validation, tok, classes, mc.max_positions);
  auto rows = hyperparameter_grid(tc, mc, base.params, classes, train, validation, lrs, bss, static_cast<int>(jobs));

  std::string csv = "learning_rate,batch_size,accuracy,f1,loss,status\n";
  for (const auto& row : rows) {
    csv += num(row.learning_rate) + ',' + std::to_string(row.batch_size) + ',' + num(row.accuracy) + ',' +
           num(row.f1) + ',' + num(row.loss) + ",\"" + row.status + "\"\n";
  }
  write_file_atomic(out / "grid.csv", csv);
  ctx.record_output(out / "grid.csv");
  std::cout << csv;
  const auto best = best_grid_row(rows);
  std::cout << "best: learning_rate " << rows[best].learning_rate << ", batch_size " << rows[best].batch_size
            << ", loss " << rows[best].loss << '\n';
  ctx.write_manifest(out, tc.seed);
}

void cmd_synth(Context& ctx) {
  auto& r = ctx.reader();
  const fs::path out = ctx.required("out");
  const auto kind = r.get_string("kind", "binary");
  const long docs = r.get_int("docs", 200);
  const long unlabeled = r.get_int("unlabeled", 0);
  const auto codes = r.get_ints("codes", {5, 7, 11, 12, 14, 21, 22, 38, 46, 73});
  const auto seed = r.get_seed("seed");
  if (docs < 1) r.problem("docs: must be >= 1");
  if (unlabeled < 0) r.problem("unlabeled: must be >= 0");
  static const std::set<std::string> kKinds = {"binary", "osti", "general", "domain"};
  if (!kKinds.count(kind)) r.problem("kind: must be binary, osti, general or domain");
  r.check();

  std::vector<Document> corpus;
  const auto n = static_cast<std::size_t>(docs);
  if (kind == "binary") {
    corpus = synthetic::binary_task(n, seed);
    auto extra = synthetic::unlabeled_corpus(synthetic::general_lexicon(), static_cast<std::size_t>(unlabeled),
                                             seed, "gen");
    corpus.insert(corpus.end(), extra.begin(), extra.end());
  } else if (kind == "osti") {
    corpus = synthetic::osti_like_corpus(codes, n, static_cast<std::size_t>(unlabeled), seed);
  } else if (kind == "general") {
    corpus = synthetic::unlabeled_corpus(synthetic::general_lexicon(), n, seed, "gen");
  } else {
    corpus = synthetic::unlabeled_corpus(synthetic::nuclear_lexicon(), n, seed, "dom");
  }
  save_corpus(corpus, out);
  std::cout << "wrote " << corpus.size() << " documents to " << out.string() << '\n';
}

std::vector<Command> commands() {
  const Keys out_key = {{"out", "", "output directory"}};
  return {
      {"split", "hash-ordered corpus split into pretrain/finetune/test manifests",
       Keys{{"corpus", "", "corpus JSONL file"},
            {"pretrain_fraction", "0.8", "labeled share for pre-training"},
            {"finetune_fraction", "0.1", "labeled share for fine-tuning"},
            {"test_fraction", "0.1", "labeled share held out for testing"},
            {"validation_fraction", "0.1", "share of the fine-tuning pool used for validation"},
            {"seed", "0", "split seed"}} + out_key,
       cmd_split},
      {"tokenizer-train", "learn a byte-level BPE vocabulary",
       Keys{{"corpus", "", "corpus JSONL file"},
            {"splits", "", "train on the pretrain split of these manifests"},
            {"vocab_size", std::to_string(kToyVocabSize), "target vocabulary size"}} + out_key,
       cmd_tokenizer_train},
      {"pretrain", "masked-LM pre-training; --init continues from a checkpoint",
       Keys{{"corpus", "", "corpus JSONL file"},
            {"tokenizer", "", "tokenizer directory"},
            {"init", "", "checkpoint to continue from"},
            {"splits", "", "use the pretrain split of these manifests"},
            {"validation_corpus", "", "corpus for validation MLM loss"}} +
           kModelKeys + with_defaults(kTrainingKeys, {{"batch_size", "8"}, {"total_steps", "500"}}) +
           kMaskingKeys + out_key,
       cmd_pretrain},
      {"finetune", "fine-tune a [CLS] classifier and keep the best validation checkpoint",
       kLabeledDataKeys +
           Keys{{"init", "", "base checkpoint"},
                {"keep_checkpoints", "true", "write every evaluated checkpoint"},
                {"dropout_rate", "", "override the base dropout rate"},
                {"cls_pooler", "", "override the pooler switch"}} +
           kTrainingKeys + out_key,
       cmd_finetune},
      {"eval", "classification metrics of a checkpoint on one split",
       kLabeledDataKeys +
           Keys{{"checkpoint", "", "fine-tuned checkpoint"},
                {"split", "test", "pretrain, finetune_train, finetune_validation or test"},
                {"batch_size", "64", "evaluation chunk size"}} +
           out_key,
       cmd_eval},
      {"mask-predict", "top-k fillers for the single [MASK] in a text",
       Keys{{"checkpoint", "", "pre-trained checkpoint"},
            {"tokenizer", "", "tokenizer directory"},
            {"text", "", "text containing [MASK] once"},
            {"k", "5", "number of candidates"},
            {"out", "", "optional output directory"}},
       cmd_mask_predict},
      {"scale-study", "hold-out log-loss against training-set fraction for several inits",
       kLabeledDataKeys +
           Keys{{"inits", "", "comma-separated name=checkpoint pairs"},
                {"fractions", "0.05,0.25,1.0", "ascending training-set fractions"},
                {"subset_seed", "0", "seed of the nested subsets"}} +
           kTrainingKeys + out_key,
       cmd_scale_study},
      {"topics", "CLS embeddings, 2-D projection, density clusters and cb-TF-IDF topic words",
       Keys{{"corpus", "", "corpus JSONL file"},
            {"splits", "", "directory of split manifests"},
            {"tokenizer", "", "tokenizer directory"},
            {"checkpoint", "", "checkpoint to embed with"},
            {"split", "finetune_validation", "split to sample when --splits is given"},
            {"sample", "0", "documents to sample (0: all)"},
            {"top_k", "3", "words per cluster"},
            {"min_cluster_size", "10", "smallest reported cluster"},
            {"min_samples", "5", "neighbours that make a point core"},
            {"radius", "0", "neighbourhood radius (0: automatic)"},
            {"reduce_dims", "16", "PCA dimensions before clustering (0: none)"},
            {"seed", "0", "sampling seed"}} +
           out_key,
       cmd_topics},
      {"grid", "learning-rate x batch-size fine-tuning grid",
       kLabeledDataKeys +
           Keys{{"init", "", "base checkpoint"},
                {"learning_rates", "1e-5,2e-5,5e-5", "comma-separated learning rates"},
                {"batch_sizes", "16,64", "comma-separated batch sizes"},
                {"jobs", "1", "cells run in parallel"}} +
           kTrainingKeys + out_key,
       cmd_grid},
      {"synth", "write a synthetic corpus",
       Keys{{"kind", "binary", "binary, osti, general or domain"},
            {"docs", "200", "documents (per class or per code for labeled kinds)"},
            {"unlabeled", "0", "extra unlabeled documents"},
            {"codes", "5,7,11,12,14,21,22,38,46,73", "category codes for kind=osti"},
            {"seed", "0", "generator seed"},
            {"out", "", "output JSONL file"}},
       cmd_synth},
  };
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  const auto cmds = commands();
  CLI::App app{"Domain-adaptive pre-training and classification toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");
  bool quiet = false;
  app.add_flag("--quiet", quiet, "silence warnings");

  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, std::string> config_paths;
  std::vector<std::pair<const Command*, CLI::App*>> subs;
  for (const auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.description);
    sub->add_option("--config", config_paths[c.name], "key = value settings file");
    auto& store = values[c.name];
    for (const auto& k : c.keys) {
      std::string help = k.help;
      if (!k.fallback.empty()) help += " [" + k.fallback + "]";
      sub->add_option("--" + k.name, store[k.name], help);
    }
    subs.emplace_back(&c, sub);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }
  set_warnings_enabled(!quiet);

  for (const auto& [cmd, sub] : subs) {
    if (!sub->parsed()) continue;
    try {
      Settings merged;
      for (const auto& k : cmd->keys) {
        if (!k.fallback.empty()) merged[k.name] = k.fallback;
      }
      const auto& config_path = config_paths[cmd->name];
      if (!config_path.empty()) {
        std::vector<std::string> unknown;
        for (auto& [key, value] : load_settings(config_path)) {
          const bool known = std::any_of(cmd->keys.begin(), cmd->keys.end(),
                                         [&](const Key& k) { return k.name == key; });
          if (!known) {
            unknown.push_back(key);
          } else {
            merged[key] = value;
          }
        }
        if (!unknown.empty()) {
          std::string msg = "unknown keys in " + config_path + " for '" + cmd->name + "':";
          for (const auto& u : unknown) msg += " " + u;
          throw ValidationError(msg);
        }
      }
      std::set<std::string> given;
      for (const auto& k : cmd->keys) {
        if (sub->get_option("--" + k.name)->count() > 0) {
          merged[k.name] = values[cmd->name][k.name];
          given.insert(k.name);
        }
      }
      Context ctx(cmd->name, std::move(merged), std::move(given));
      cmd->run(ctx);
      return kExitOk;
    } catch (const ValidationError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitValidation;
    } catch (const NumericalError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitRuntime;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitRuntime;
    }
  }
  return kExitValidation;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace dapt

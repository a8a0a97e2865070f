#include "dapt/config.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>

namespace dapt {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  char* end = nullptr;
  out = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size();
}

template <typename T>
bool parse_integer(std::string_view text, T& out) {
  const char* b = text.data();
  const char* e = b + text.size();
  if (b != e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && b != e;
}

}  // namespace

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(sep, start);
    if (end == std::string_view::npos) end = text.size();
    auto item = trim(text.substr(start, end - start));
    if (!item.empty()) out.emplace_back(item);
    start = end + 1;
  }
  return out;
}

Settings parse_settings(std::string_view text, const std::string& source) {
  Settings s;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const auto where = source + " line " + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ValidationError(where + ": expected 'key = value'");
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ValidationError(where + ": empty key");
    if (!s.emplace(key, value).second) throw ValidationError(where + ": duplicate key '" + key + "'");
  }
  return s;
}

Settings load_settings(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("config file not found: " + path.string());
  return parse_settings(read_text_file(path), path.string());
}

std::string format_settings(const Settings& settings) {
  std::string out;
  for (const auto& [k, v] : settings) out += k + " = " + v + "\n";
  return out;
}

const std::string* SettingsReader::find(const std::string& key) const {
  auto it = settings_.find(key);
  if (it == settings_.end() || it->second.empty()) return nullptr;
  return &it->second;
}

std::string SettingsReader::get_string(const std::string& key, const std::string& fallback) {
  const auto* v = find(key);
  return v ? *v : fallback;
}

long SettingsReader::get_int(const std::string& key, long fallback) {
  const auto* v = find(key);
  if (!v) return fallback;
  long out = 0;
  if (!parse_integer(*v, out)) {
    problem(key + ": expected an integer, got '" + *v + "'");
    return fallback;
  }
  return out;
}

double SettingsReader::get_double(const std::string& key, double fallback) {
  const auto* v = find(key);
  if (!v) return fallback;
  double out = 0.0;
  if (!parse_double(*v, out)) {
    problem(key + ": expected a number, got '" + *v + "'");
    return fallback;
  }
  return out;
}

bool SettingsReader::get_bool(const std::string& key, bool fallback) {
  const auto* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  problem(key + ": expected true or false, got '" + *v + "'");
  return fallback;
}

std::uint64_t SettingsReader::get_seed(const std::string& key, std::uint64_t fallback) {
  const auto* v = find(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  if (!parse_integer(*v, out)) {
    problem(key + ": expected a nonnegative integer, got '" + *v + "'");
    return fallback;
  }
  return out;
}

std::vector<double> SettingsReader::get_doubles(const std::string& key, const std::vector<double>& fallback) {
  const auto* v = find(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(*v)) {
    double d = 0.0;
    if (!parse_double(item, d)) {
      problem(key + ": expected numbers, got '" + item + "'");
      return fallback;
    }
    out.push_back(d);
  }
  if (out.empty()) problem(key + ": list is empty");
  return out;
}

std::vector<int> SettingsReader::get_ints(const std::string& key, const std::vector<int>& fallback) {
  const auto* v = find(key);
  if (!v) return fallback;
  std::vector<int> out;
  for (const auto& item : split_list(*v)) {
    int i = 0;
    if (!parse_integer(item, i)) {
      problem(key + ": expected integers, got '" + item + "'");
      return fallback;
    }
    out.push_back(i);
  }
  if (out.empty()) problem(key + ": list is empty");
  return out;
}

void SettingsReader::check() const {
  if (problems_.empty()) return;
  std::string msg = problems_.size() == 1 ? "invalid setting:" : "invalid settings:";
  for (const auto& p : problems_) msg += "\n  " + p;
  throw ValidationError(msg);
}

ModelConfig read_model_config(SettingsReader& r, const ModelConfig& d) {
  ModelConfig c = d;
  c.num_layers = static_cast<int>(r.get_int("num_layers", d.num_layers));
  c.num_heads = static_cast<int>(r.get_int("num_heads", d.num_heads));
  c.hidden_dim = static_cast<int>(r.get_int("hidden_dim", d.hidden_dim));
  c.ff_dim = static_cast<int>(r.get_int("ff_dim", d.ff_dim));
  c.max_positions = static_cast<int>(r.get_int("max_positions", d.max_positions));
  c.dropout_rate = r.get_double("dropout_rate", d.dropout_rate);
  c.init_std = r.get_double("init_std", d.init_std);
  c.tie_mlm_weights = r.get_bool("tie_mlm_weights", d.tie_mlm_weights);
  c.cls_pooler = r.get_bool("cls_pooler", d.cls_pooler);
  ModelConfig probe = c;
  if (probe.vocab_size <= 0) probe.vocab_size = 1;
  try {
    probe.validate();
  } catch (const ValidationError& e) {
    r.problem(e.what());
  }
  return c;
}

TrainingConfig read_training_config(SettingsReader& r, const TrainingConfig& d) {
  TrainingConfig c = d;
  c.learning_rate = r.get_double("learning_rate", d.learning_rate);
  c.batch_size = static_cast<int>(r.get_int("batch_size", d.batch_size));
  c.total_steps = r.get_int("total_steps", d.total_steps);
  c.epochs = static_cast<int>(r.get_int("epochs", d.epochs));
  c.warmup_fraction = r.get_double("warmup_fraction", d.warmup_fraction);
  c.weight_decay = r.get_double("weight_decay", d.weight_decay);
  c.adam_beta1 = r.get_double("adam_beta1", d.adam_beta1);
  c.adam_beta2 = r.get_double("adam_beta2", d.adam_beta2);
  c.adam_epsilon = r.get_double("adam_epsilon", d.adam_epsilon);
  c.seed = r.get_seed("seed", d.seed);
  c.eval_checkpoints = static_cast<int>(r.get_int("eval_checkpoints", d.eval_checkpoints));
  c.log_every = static_cast<int>(r.get_int("log_every", d.log_every));
  c.freeze_layers = static_cast<int>(r.get_int("freeze_layers", d.freeze_layers));
  for (auto& p : c.problems()) r.problem(p);
  return c;
}

MaskingPolicy read_masking_policy(SettingsReader& r, const MaskingPolicy& d) {
  MaskingPolicy p = d;
  p.mask_rate = r.get_double("mask_rate", d.mask_rate);
  p.replace_with_mask = r.get_double("mask_token_rate", d.replace_with_mask);
  p.replace_with_random = r.get_double("random_token_rate", d.replace_with_random);
  p.keep_original = r.get_double("keep_rate", d.keep_original);
  p.dynamic = r.get_bool("dynamic_masking", d.dynamic);
  try {
    p.validate();
  } catch (const ValidationError& e) {
    r.problem(e.what());
  }
  return p;
}

}  // namespace dapt

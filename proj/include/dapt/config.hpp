#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dapt/model.hpp"
#include "dapt/training.hpp"

namespace dapt {

/// Flat key/value settings. Files hold one "key = value" per line; blank
/// lines and lines starting with '#' are ignored.
using Settings = std::map<std::string, std::string>;

Settings parse_settings(std::string_view text, const std::string& source = "config");
Settings load_settings(const std::filesystem::path& path);
std::string format_settings(const Settings& settings);

/// Typed access that records every malformed value instead of stopping at
/// the first one. Missing keys fall back to the given default.
class SettingsReader {
 public:
  explicit SettingsReader(const Settings& settings) : settings_(settings) {}

  std::string get_string(const std::string& key, const std::string& fallback = "");
  long get_int(const std::string& key, long fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::uint64_t get_seed(const std::string& key, std::uint64_t fallback = 0);
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback);
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback);

  void problem(std::string message) { problems_.push_back(std::move(message)); }
  const std::vector<std::string>& problems() const { return problems_; }
  /// Throws ValidationError listing every recorded problem, if any.
  void check() const;

 private:
  const std::string* find(const std::string& key) const;

  const Settings& settings_;
  std::vector<std::string> problems_;
};

/// Keys: num_layers, num_heads, hidden_dim, ff_dim, max_positions,
/// dropout_rate, init_std, tie_mlm_weights, cls_pooler.
ModelConfig read_model_config(SettingsReader& reader, const ModelConfig& defaults = {});

/// Keys: learning_rate, batch_size, total_steps, epochs, warmup_fraction,
/// weight_decay, adam_beta1, adam_beta2, adam_epsilon, seed,
/// eval_checkpoints, log_every, freeze_layers.
TrainingConfig read_training_config(SettingsReader& reader, const TrainingConfig& defaults = {});

/// Keys: mask_rate, mask_token_rate, random_token_rate, keep_rate,
/// dynamic_masking.
MaskingPolicy read_masking_policy(SettingsReader& reader, const MaskingPolicy& defaults = {});

std::vector<std::string> split_list(std::string_view text, char sep = ',');

}  // namespace dapt

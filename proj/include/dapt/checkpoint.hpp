#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "dapt/model.hpp"

namespace dapt {

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

/// Container on disk:
///   "DAPTCKPT" magic, u32 version, u64 header length, JSON header,
///   then every tensor as little-endian float64 in header order.
/// The header holds the model config, the tokenizer hash, free-form
/// metadata and a (name, rows, cols) entry per tensor.
struct Checkpoint {
  ModelConfig config;
  std::string tokenizer_hash;
  Parameters params;
  nlohmann::json metadata = nlohmann::json::object();

  void save(const std::filesystem::path& path) const;
  /// Validates every tensor name and shape against the stored config.
  static Checkpoint load(const std::filesystem::path& path);

  /// Throws ValidationError unless `hash` matches tokenizer_hash.
  void require_tokenizer(const std::string& hash) const;
};

/// FNV-1a of a file's bytes, hex encoded. Used for run manifests.
std::string file_hash(const std::filesystem::path& path);

}  // namespace dapt

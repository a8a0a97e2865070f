#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dapt {

using CategoryCode = int;

/// One abstract. `categories` keeps file order; the first entry is the
/// primary category and the only one used for labels.
struct Document {
  std::string id;
  std::string text;
  std::vector<CategoryCode> categories;

  bool labeled() const { return !categories.empty(); }
  std::optional<CategoryCode> primary_category() const {
    if (categories.empty()) return std::nullopt;
    return categories.front();
  }
};

/// OSTI subject categories and the subset tied to the nuclear fuel cycle.
struct LabelScheme {
  std::set<CategoryCode> nfc_categories;
  std::map<CategoryCode, std::string> all_categories;

  /// The full OSTI subject-category table with its nine NFC codes.
  static const LabelScheme& osti();

  bool contains(CategoryCode code) const { return all_categories.count(code) != 0; }
  /// Dense class index of `code` among all_categories (ascending code order).
  int class_index(CategoryCode code) const;
  CategoryCode code_at(int class_index) const;
  int num_classes() const { return static_cast<int>(all_categories.size()); }
};

/// True iff `category` is an NFC category. Throws ValidationError for codes
/// outside the scheme.
bool map_binary_label(CategoryCode category, const LabelScheme& scheme = LabelScheme::osti());

/// NFC label of a labeled document (primary category only).
bool nfc_label(const Document& doc, const LabelScheme& scheme = LabelScheme::osti());

/// Parses line-delimited JSON records {"id", "text", "categories"}.
/// Blank lines are skipped. Errors name the 1-based line number.
std::vector<Document> load_corpus(const std::filesystem::path& path);
std::vector<Document> parse_corpus(std::string_view contents);
void save_corpus(const std::vector<Document>& docs, const std::filesystem::path& path);

struct SplitSpec {
  double pretrain_fraction = 0.8;
  double finetune_fraction = 0.1;
  double test_fraction = 0.1;
  double validation_fraction_of_finetune = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatasetSplits {
  std::vector<Document> pretrain;
  std::vector<Document> finetune_train;
  std::vector<Document> finetune_validation;
  std::vector<Document> test;
};

/// Floor each share of `total`, then hand out the remainder one unit at a time
/// in declaration order. Shares must sum to 1.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& shares);

/// Hash-ordered split. Labeled documents are apportioned across
/// pretrain/finetune/test; unlabeled documents always go to pretrain.
/// Throws if fine-tune validation or test would be empty (fewer than 16
/// labeled documents at the default fractions).
DatasetSplits split_corpus(const std::vector<Document>& docs, const SplitSpec& spec);

/// Nested random subsets of `pool`: subset k holds round(fractions[k] * N)
/// documents (at least one) and contains every smaller subset.
std::vector<std::vector<Document>> nested_subsets(const std::vector<Document>& pool,
                                                  const std::vector<double>& fractions,
                                                  std::uint64_t seed);

/// Split manifests: one file per split, one document id per line.
void write_split_manifests(const DatasetSplits& splits, const std::filesystem::path& dir);
DatasetSplits read_split_manifests(const std::vector<Document>& docs,
                                   const std::filesystem::path& dir);
std::vector<std::string> read_id_list(const std::filesystem::path& path);

}  // namespace dapt

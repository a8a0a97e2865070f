#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dapt {

using TokenId = std::int32_t;

/// Reserved ids 0..4. BPE never produces these strings: the pre-tokenizer
/// splits brackets from letters, so no merged byte string can contain "[X]".
struct SpecialTokens {
  static constexpr TokenId kCls = 0;
  static constexpr TokenId kSep = 1;
  static constexpr TokenId kMask = 2;
  static constexpr TokenId kPad = 3;
  static constexpr TokenId kUnk = 4;
  static constexpr TokenId kCount = 5;
  static constexpr TokenId kFirstByte = kCount;

  static constexpr std::string_view kCls_str = "[CLS]";
  static constexpr std::string_view kSep_str = "[SEP]";
  static constexpr std::string_view kMask_str = "[MASK]";
  static constexpr std::string_view kPad_str = "[PAD]";
  static constexpr std::string_view kUnk_str = "[UNK]";

  static bool is_special(TokenId id) { return id >= 0 && id < kCount; }
  static std::string_view name(TokenId id);
};

/// Bijection token bytes <-> id. Specials occupy 0..4, raw bytes 5..260,
/// merged tokens follow in merge order.
class Vocabulary {
 public:
  Vocabulary();  // specials + the 256 byte tokens

  TokenId add(const std::string& token);  // returns the existing id if present
  TokenId id_of(std::string_view token) const;  // throws if absent
  bool contains(std::string_view token) const;
  const std::string& token_of(TokenId id) const;  // throws for unknown ids
  std::size_t size() const { return id_to_token_.size(); }
  static TokenId byte_id(unsigned char b) { return SpecialTokens::kFirstByte + b; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

struct MergeRule {
  std::string left;
  std::string right;
  bool operator==(const MergeRule&) const = default;
};

using MergeTable = std::vector<MergeRule>;  // rank = index

/// Splits UTF-8 text into whitespace-aware pieces: a run of letters, digits or
/// punctuation carries at most one leading space. Concatenating the pieces
/// returns the input. Throws ValidationError on invalid UTF-8.
std::vector<std::string_view> pretokenize(std::string_view text);

bool is_valid_utf8(std::string_view text);

class Tokenizer {
 public:
  Tokenizer() = default;
  Tokenizer(Vocabulary vocab, MergeTable merges);

  /// Learns merges greedily by pair frequency (ties: lexicographically
  /// smallest pair) until the vocabulary reaches target_vocab_size or no
  /// pair remains.
  static Tokenizer train(const std::vector<std::string>& corpus, std::size_t target_vocab_size);

  std::vector<TokenId> encode(std::string_view text) const;
  /// Concatenated token bytes. Special ids throw unless allow_special.
  std::string decode(const std::vector<TokenId>& ids, bool allow_special = false) const;

  const Vocabulary& vocab() const { return vocab_; }
  const MergeTable& merges() const { return merges_; }
  std::size_t vocab_size() const { return vocab_.size(); }

  /// Printable form of a token (GPT-2 byte-to-unicode mapping).
  std::string display(TokenId id) const;

  std::string vocab_file_contents() const;
  std::string merges_file_contents() const;
  /// FNV-1a over both serialized files; checkpoints record it.
  std::string hash() const;

  void save(const std::filesystem::path& dir) const;
  static Tokenizer load(const std::filesystem::path& dir);
  static Tokenizer from_strings(std::string_view vocab_file, std::string_view merges_file);

 private:
  void build_ranks();
  std::vector<TokenId> encode_piece(std::string_view piece) const;

  Vocabulary vocab_;
  MergeTable merges_;
  struct PairRank {
    std::size_t rank;
    TokenId merged;
  };
  std::unordered_map<std::uint64_t, PairRank> ranks_;  // (left id, right id) -> rule
};

/// Reference vocabulary sizes of the two full-scale baselines; the desk-scale
/// default is kToyVocabSize.
inline constexpr std::size_t kRobertaVocabSize = 50265;
inline constexpr std::size_t kScibertVocabSize = 31090;
inline constexpr std::size_t kToyVocabSize = 4096;

/// GPT-2 byte <-> printable code point mapping, UTF-8 encoded.
std::string byte_to_printable(std::string_view bytes);
std::string printable_to_bytes(std::string_view printable);

}  // namespace dapt

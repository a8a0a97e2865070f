#include "dapt/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <limits>
#include <queue>
#include <sstream>
#include <unordered_set>

#include "dapt/common.hpp"

namespace dapt {

namespace {

constexpr std::string_view kVocabHeader = "#dapt-vocab v1";
constexpr std::string_view kMergesHeader = "#dapt-merges v1";

enum class CharClass { kSpace, kLetter, kDigit, kOther };

CharClass classify(unsigned char c) {
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
    return CharClass::kSpace;
  }
  if (c >= 0x80 || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return CharClass::kLetter;
  if (c >= '0' && c <= '9') return CharClass::kDigit;
  return CharClass::kOther;
}

std::uint64_t pair_key(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

struct ByteMap {
  std::array<std::uint32_t, 256> to_cp{};
  std::unordered_map<std::uint32_t, unsigned char> from_cp;
};

const ByteMap& byte_map() {
  static const ByteMap m = [] {
    ByteMap map;
    std::uint32_t next = 256;
    for (int b = 0; b < 256; ++b) {
      bool printable = (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
      map.to_cp[b] = printable ? static_cast<std::uint32_t>(b) : next++;
      map.from_cp[map.to_cp[b]] = static_cast<unsigned char>(b);
    }
    return map;
  }();
  return m;
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  std::string cur;
  std::istringstream in{std::string(s)};
  while (std::getline(in, cur)) {
    if (!cur.empty() && cur.back() == '\r') cur.pop_back();
    lines.push_back(cur);
  }
  return lines;
}

}  // namespace

std::string_view SpecialTokens::name(TokenId id) {
  switch (id) {
    case kCls: return kCls_str;
    case kSep: return kSep_str;
    case kMask: return kMask_str;
    case kPad: return kPad_str;
    case kUnk: return kUnk_str;
    default: throw ValidationError("not a special token id: " + std::to_string(id));
  }
}

std::string byte_to_printable(std::string_view bytes) {
  std::string out;
  for (unsigned char b : bytes) append_utf8(out, byte_map().to_cp[b]);
  return out;
}

std::string printable_to_bytes(std::string_view printable) {
  if (!is_valid_utf8(printable)) throw ValidationError("printable token is not valid UTF-8");
  std::string out;
  for (std::size_t i = 0; i < printable.size();) {
    auto c = static_cast<unsigned char>(printable[i]);
    std::uint32_t cp;
    int len;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c & 0xE0) == 0xC0) {
      cp = c & 0x1F;
      len = 2;
    } else if ((c & 0xF0) == 0xE0) {
      cp = c & 0x0F;
      len = 3;
    } else {
      cp = c & 0x07;
      len = 4;
    }
    for (int k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(printable[i + k]) & 0x3F);
    auto it = byte_map().from_cp.find(cp);
    if (it == byte_map().from_cp.end()) {
      throw ValidationError("unmapped code point in token: U+" + std::to_string(cp));
    }
    out.push_back(static_cast<char>(it->second));
    i += static_cast<std::size_t>(len);
  }
  return out;
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if (c >= 0xC2 && c <= 0xDF) {
      len = 2;
      cp = c & 0x1F;
    } else if (c >= 0xE0 && c <= 0xEF) {
      len = 3;
      cp = c & 0x0F;
    } else if (c >= 0xF0 && c <= 0xF4) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if ((len == 3 && cp < 0x800) || (len == 4 && (cp < 0x10000 || cp > 0x10FFFF)) ||
        (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    i += len;
  }
  return true;
}

std::vector<std::string_view> pretokenize(std::string_view text) {
  if (!is_valid_utf8(text)) throw ValidationError("input is not valid UTF-8");
  std::vector<std::string_view> pieces;
  const std::size_t n = text.size();
  auto cls = [&](std::size_t i) { return classify(static_cast<unsigned char>(text[i])); };
  std::size_t i = 0;
  while (i < n) {
    std::size_t j;
    if (text[i] == ' ' && i + 1 < n && cls(i + 1) != CharClass::kSpace) {
      const CharClass run = cls(i + 1);
      j = i + 1;
      while (j < n && cls(j) == run) ++j;
    } else if (cls(i) == CharClass::kSpace) {
      j = i;
      while (j < n && cls(j) == CharClass::kSpace) ++j;
      // Leave a trailing ' ' to prefix the next word.
      if (j < n && j - i >= 2 && text[j - 1] == ' ') --j;
    } else {
      const CharClass run = cls(i);
      j = i;
      while (j < n && cls(j) == run) ++j;
    }
    pieces.push_back(text.substr(i, j - i));
    i = j;
  }
  return pieces;
}

Vocabulary::Vocabulary() {
  for (TokenId id = 0; id < SpecialTokens::kCount; ++id) add(std::string(SpecialTokens::name(id)));
  for (int b = 0; b < 256; ++b) add(std::string(1, static_cast<char>(b)));
}

TokenId Vocabulary::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  auto id = static_cast<TokenId>(id_to_token_.size());
  id_to_token_.push_back(token);
  token_to_id_.emplace(token, id);
  return id;
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) throw ValidationError("token not in vocabulary");
  return it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) != 0;
}

const std::string& Vocabulary::token_of(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw ValidationError("unknown token id " + std::to_string(id));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

Tokenizer::Tokenizer(Vocabulary vocab, MergeTable merges)
    : vocab_(std::move(vocab)), merges_(std::move(merges)) {
  build_ranks();
}

void Tokenizer::build_ranks() {
  ranks_.clear();
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const auto& m = merges_[r];
    if (!vocab_.contains(m.left) || !vocab_.contains(m.right) ||
        !vocab_.contains(m.left + m.right)) {
      throw ValidationError("merge rule " + std::to_string(r) + " references a missing token");
    }
    const auto key = pair_key(vocab_.id_of(m.left), vocab_.id_of(m.right));
    if (!ranks_.emplace(key, PairRank{r, vocab_.id_of(m.left + m.right)}).second) {
      throw ValidationError("duplicate merge rule at rank " + std::to_string(r));
    }
  }
}

Tokenizer Tokenizer::train(const std::vector<std::string>& corpus, std::size_t target_vocab_size) {
  const std::size_t min_size = 256 + SpecialTokens::kCount;
  if (target_vocab_size < min_size) {
    throw ValidationError("target vocabulary size must be at least " + std::to_string(min_size));
  }
  std::map<std::string_view, std::int64_t> piece_counts;
  std::size_t total_bytes = 0;
  for (const auto& text : corpus) {
    total_bytes += text.size();
    for (auto p : pretokenize(text)) ++piece_counts[p];
  }
  if (total_bytes == 0) throw ValidationError("tokenizer corpus contains zero bytes");

  Vocabulary vocab;
  MergeTable merges;
  std::vector<std::vector<TokenId>> words;
  std::vector<std::int64_t> freq;
  for (const auto& [piece, count] : piece_counts) {
    std::vector<TokenId> w;
    for (unsigned char b : piece) w.push_back(Vocabulary::byte_id(b));
    words.push_back(std::move(w));
    freq.push_back(count);
  }

  std::unordered_map<std::uint64_t, std::int64_t> pair_count;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> where;
  auto add_pairs = [&](std::size_t wi, std::int64_t sign) {
    const auto& w = words[wi];
    for (std::size_t k = 0; k + 1 < w.size(); ++k) {
      auto key = pair_key(w[k], w[k + 1]);
      pair_count[key] += sign * freq[wi];
      if (sign > 0) where[key].push_back(wi);
    }
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) add_pairs(wi, +1);

  struct Entry {
    std::int64_t count;
    TokenId left;
    TokenId right;
  };
  // Max count first; ties go to the lexicographically smallest (left, right).
  auto worse = [&vocab](const Entry& a, const Entry& b) {
    if (a.count != b.count) return a.count < b.count;
    const auto& al = vocab.token_of(a.left);
    const auto& bl = vocab.token_of(b.left);
    if (al != bl) return al > bl;
    return vocab.token_of(a.right) > vocab.token_of(b.right);
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> heap(worse);
  for (const auto& [key, c] : pair_count) {
    if (c > 0) heap.push({c, static_cast<TokenId>(key >> 32), static_cast<TokenId>(key & 0xffffffffu)});
  }

  while (vocab.size() < target_vocab_size && !heap.empty()) {
    Entry top = heap.top();
    heap.pop();
    auto key = pair_key(top.left, top.right);
    auto pc = pair_count.find(key);
    if (pc == pair_count.end() || pc->second != top.count || top.count <= 0) continue;  // stale

    const std::string merged = vocab.token_of(top.left) + vocab.token_of(top.right);
    merges.push_back({vocab.token_of(top.left), vocab.token_of(top.right)});
    const TokenId new_id = vocab.add(merged);

    std::vector<std::size_t> affected = std::move(where[key]);
    where.erase(key);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
    std::unordered_set<std::uint64_t> touched;
    for (auto wi : affected) {
      auto& w = words[wi];
      for (std::size_t k = 0; k + 1 < w.size(); ++k) {
        auto kk = pair_key(w[k], w[k + 1]);
        pair_count[kk] -= freq[wi];
        touched.insert(kk);
      }
      std::vector<TokenId> rewritten;
      rewritten.reserve(w.size());
      for (std::size_t k = 0; k < w.size();) {
        if (k + 1 < w.size() && w[k] == top.left && w[k + 1] == top.right) {
          rewritten.push_back(new_id);
          k += 2;
        } else {
          rewritten.push_back(w[k]);
          ++k;
        }
      }
      w = std::move(rewritten);
      for (std::size_t k = 0; k + 1 < w.size(); ++k) {
        auto kk = pair_key(w[k], w[k + 1]);
        pair_count[kk] += freq[wi];
        where[kk].push_back(wi);
        touched.insert(kk);
      }
    }
    pair_count.erase(key);
    touched.erase(key);
    for (auto kk : touched) {
      auto c = pair_count[kk];
      if (c > 0) heap.push({c, static_cast<TokenId>(kk >> 32), static_cast<TokenId>(kk & 0xffffffffu)});
    }
  }
  return Tokenizer(std::move(vocab), std::move(merges));
}

std::vector<TokenId> Tokenizer::encode_piece(std::string_view piece) const {
  std::vector<TokenId> syms;
  syms.reserve(piece.size());
  for (unsigned char c : piece) syms.push_back(Vocabulary::byte_id(c));
  while (syms.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    TokenId left = 0, right = 0, merged = 0;
    for (std::size_t k = 0; k + 1 < syms.size(); ++k) {
      auto it = ranks_.find(pair_key(syms[k], syms[k + 1]));
      if (it != ranks_.end() && it->second.rank < best_rank) {
        best_rank = it->second.rank;
        left = syms[k];
        right = syms[k + 1];
        merged = it->second.merged;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    // Merge every non-overlapping occurrence of the winning pair.
    std::size_t out = 0;
    for (std::size_t k = 0; k < syms.size();) {
      if (k + 1 < syms.size() && syms[k] == left && syms[k + 1] == right) {
        syms[out++] = merged;
        k += 2;
      } else {
        syms[out++] = syms[k++];
      }
    }
    syms.resize(out);
  }
  return syms;
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (auto piece : pretokenize(text)) {
    auto part = encode_piece(piece);
    ids.insert(ids.end(), part.begin(), part.end());
  }
  return ids;
}

std::string Tokenizer::decode(const std::vector<TokenId>& ids, bool allow_special) const {
  std::string out;
  for (auto id : ids) {
    const auto& tok = vocab_.token_of(id);
    if (SpecialTokens::is_special(id) && !allow_special) {
      throw ValidationError("special token id " + std::to_string(id) + " (" + tok +
                            ") not allowed in decode");
    }
    out += tok;
  }
  return out;
}

std::string Tokenizer::display(TokenId id) const {
  const auto& tok = vocab_.token_of(id);
  if (SpecialTokens::is_special(id) || is_valid_utf8(tok)) return tok;
  return byte_to_printable(tok);
}

std::string Tokenizer::vocab_file_contents() const {
  std::string out(kVocabHeader);
  out += '\n';
  for (TokenId id = 0; static_cast<std::size_t>(id) < vocab_.size(); ++id) {
    const auto& tok = vocab_.token_of(id);
    out += SpecialTokens::is_special(id) ? tok : byte_to_printable(tok);
    out += '\t';
    out += std::to_string(id);
    out += '\n';
  }
  return out;
}

std::string Tokenizer::merges_file_contents() const {
  std::string out(kMergesHeader);
  out += '\n';
  for (const auto& m : merges_) {
    out += byte_to_printable(m.left);
    out += ' ';
    out += byte_to_printable(m.right);
    out += '\n';
  }
  return out;
}

std::string Tokenizer::hash() const {
  return to_hex(fnv1a(merges_file_contents(), fnv1a(vocab_file_contents())));
}

void Tokenizer::save(const std::filesystem::path& dir) const {
  write_file_atomic(dir / "vocab.txt", vocab_file_contents());
  write_file_atomic(dir / "merges.txt", merges_file_contents());
}

Tokenizer Tokenizer::load(const std::filesystem::path& dir) {
  return from_strings(read_text_file(dir / "vocab.txt"), read_text_file(dir / "merges.txt"));
}

Tokenizer Tokenizer::from_strings(std::string_view vocab_file, std::string_view merges_file) {
  auto vlines = split_lines(vocab_file);
  if (vlines.empty() || vlines[0] != kVocabHeader) {
    throw ValidationError("vocabulary file lacks header '" + std::string(kVocabHeader) + "'");
  }
  Vocabulary vocab;
  for (std::size_t i = 1; i < vlines.size(); ++i) {
    const auto& line = vlines[i];
    if (line.empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw ValidationError("vocabulary line " + std::to_string(i + 1) + " is malformed");
    }
    TokenId id = -1;
    const char* first = line.data() + tab + 1;
    const char* last = line.data() + line.size();
    auto [end, ec] = std::from_chars(first, last, id);
    if (ec != std::errc() || end != last || first == last) {
      throw ValidationError("vocabulary line " + std::to_string(i + 1) + " has a malformed id");
    }
    const auto text = line.substr(0, tab);
    if (static_cast<std::size_t>(id) != i - 1) {
      throw ValidationError("vocabulary ids must be consecutive from 0 (line " +
                            std::to_string(i + 1) + ")");
    }
    std::string tok = SpecialTokens::is_special(id) ? text : printable_to_bytes(text);
    if (static_cast<std::size_t>(id) < vocab.size()) {
      if (vocab.token_of(id) != tok) {
        throw ValidationError("reserved id " + std::to_string(id) + " has wrong token");
      }
    } else if (vocab.add(tok) != id) {
      throw ValidationError("duplicate token at id " + std::to_string(id));
    }
  }
  auto mlines = split_lines(merges_file);
  if (mlines.empty() || mlines[0] != kMergesHeader) {
    throw ValidationError("merges file lacks header '" + std::string(kMergesHeader) + "'");
  }
  MergeTable merges;
  for (std::size_t i = 1; i < mlines.size(); ++i) {
    const auto& line = mlines[i];
    if (line.empty()) continue;
    auto sp = line.find(' ');
    if (sp == std::string::npos) {
      throw ValidationError("merges line " + std::to_string(i + 1) + " is malformed");
    }
    merges.push_back({printable_to_bytes(line.substr(0, sp)), printable_to_bytes(line.substr(sp + 1))});
  }
  return Tokenizer(std::move(vocab), std::move(merges));
}

}  // namespace dapt

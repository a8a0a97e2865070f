#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dapt/corpus.hpp"

namespace dapt::synthetic {

/// Word pool of one topic. Texts are walks on a sparse Markov chain over the
/// pool, so a masked word is predictable from its neighbours.
struct Lexicon {
  std::string name;
  std::vector<std::string> words;
};

Lexicon general_lexicon();
Lexicon nuclear_lexicon();
Lexicon materials_lexicon();
/// Pronounceable pseudo-words, distinct for distinct seeds with high probability.
Lexicon pseudo_lexicon(const std::string& name, std::uint64_t seed, std::size_t size);

/// `count` documents of min_words..max_words words from the lexicon's chain.
/// The chain depends on the lexicon only; `seed` drives the walks.
std::vector<std::string> markov_texts(const Lexicon& lexicon, std::size_t count, std::uint64_t seed,
                                      int min_words = 24, int max_words = 48);

/// Unlabeled documents with ids "<prefix>-000000", ...
std::vector<Document> unlabeled_corpus(const Lexicon& lexicon, std::size_t count,
                                       std::uint64_t seed, const std::string& prefix);

inline constexpr CategoryCode kSyntheticPositiveCode = 73;  // an NFC code
inline constexpr CategoryCode kSyntheticNegativeCode = 14;  // a non-NFC code

/// Binary task separable by vocabulary: NFC documents use the nuclear
/// lexicon, the others the materials lexicon. Classes alternate in id order.
std::vector<Document> binary_task(std::size_t per_class, std::uint64_t seed, int min_words = 12,
                                  int max_words = 24);

/// Labeled documents for each code (one pseudo-lexicon per code, sharing a
/// general background), plus unlabeled general documents.
std::vector<Document> osti_like_corpus(const std::vector<CategoryCode>& codes, std::size_t per_code,
                                       std::size_t unlabeled, std::uint64_t seed);

}  // namespace dapt::synthetic

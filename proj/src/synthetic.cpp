#include "dapt/synthetic.hpp"

#include <cstdio>
#include <set>

#include "dapt/common.hpp"

namespace dapt::synthetic {

namespace {

constexpr int kBranching = 3;

Lexicon make(std::string name, std::initializer_list<const char*> words) {
  Lexicon l{std::move(name), {}};
  for (const char* w : words) l.words.emplace_back(w);
  return l;
}

class Chain {
 public:
  explicit Chain(const Lexicon& lexicon) : words_(lexicon.words) {
    if (words_.size() < 2) throw ValidationError("lexicon '" + lexicon.name + "' needs at least 2 words");
    std::uint64_t h = fnv1a(lexicon.name);
    for (const auto& w : words_) h = fnv1a(w, h);
    Rng rng(h);
    std::uniform_int_distribution<std::size_t> pick(0, words_.size() - 1);
    next_.resize(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
      for (int b = 0; b < kBranching; ++b) {
        std::size_t j = pick(rng);
        if (j == i) j = (j + 1) % words_.size();
        next_[i].push_back(j);
      }
    }
  }

  std::size_t start(Rng& rng) const {
    return std::uniform_int_distribution<std::size_t>(0, words_.size() - 1)(rng);
  }
  std::size_t step(std::size_t cur, Rng& rng) const {
    return next_[cur][std::uniform_int_distribution<std::size_t>(0, kBranching - 1)(rng)];
  }
  const std::string& word(std::size_t i) const { return words_[i]; }

 private:
  std::vector<std::string> words_;
  std::vector<std::vector<std::size_t>> next_;
};

std::string walk(const Chain& chain, Rng& rng, int length, const Chain* background = nullptr,
                 double background_rate = 0.0) {
  std::string text;
  std::size_t cur = chain.start(rng);
  std::size_t bg = background ? background->start(rng) : 0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < length; ++i) {
    if (i) text += ' ';
    if (background && unit(rng) < background_rate) {
      text += background->word(bg);
      bg = background->step(bg, rng);
    } else {
      text += chain.word(cur);
      cur = chain.step(cur, rng);
    }
  }
  return text;
}

int draw_length(Rng& rng, int min_words, int max_words) {
  if (min_words < 1 || max_words < min_words) throw ValidationError("invalid synthetic word-count range");
  return std::uniform_int_distribution<int>(min_words, max_words)(rng);
}

std::string doc_id(const std::string& prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "-%06zu", i);
  return prefix + buf;
}

}  // namespace

Lexicon general_lexicon() {
  return make("general",
              {"people", "city",    "market",  "music",   "family",  "school", "river",   "garden",
               "morning", "travel", "kitchen", "football", "window", "village", "holiday", "coffee",
               "friend",  "street", "library", "weather", "evening", "dinner", "teacher", "movie",
               "summer",  "bridge", "forest",  "station", "doctor",  "story",  "picture", "country",
               "animal",  "letter", "season",  "island",  "harbor",  "theater", "bakery", "parade"});
}

Lexicon nuclear_lexicon() {
  return make("nuclear",
              {"reactor",  "neutron",   "fission",  "uranium",  "plutonium", "isotope",  "coolant",
               "moderator", "enrichment", "cladding", "burnup",  "criticality", "thorium", "actinide",
               "reprocessing", "centrifuge", "safeguards", "tritium", "deuterium", "pellet",
               "assembly", "decay",     "half-life", "radiation", "shielding", "waste",   "repository",
               "spent",    "fuel",      "core",     "control",  "rods",      "heavy",    "water",
               "breeder",  "fast",      "thermal",  "yield",    "gamma",     "cross-section"});
}

Lexicon materials_lexicon() {
  return make("materials",
              {"polymer",   "alloy",     "crystal",   "lattice",  "ceramic",  "composite", "fiber",
               "tensile",   "corrosion", "annealing", "grain",    "boundary", "substrate", "coating",
               "catalyst",  "oxide",     "nanowire",  "graphene", "silicon",  "dopant",    "wafer",
               "thin",      "film",      "deposition", "sintering", "hardness", "fracture", "fatigue",
               "elastic",   "modulus",   "powder",    "membrane", "porous",   "solvent",   "binder",
               "surface",   "adhesion",  "extrusion", "welding",  "texture"});
}

Lexicon pseudo_lexicon(const std::string& name, std::uint64_t seed, std::size_t size) {
  static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
                                  "br", "dr", "kr", "pl", "st", "tr"};
  static const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "ea"};
  Rng rng(derive_seed(seed, fnv1a(name)));
  std::uniform_int_distribution<int> onset(0, std::size(kOnsets) - 1);
  std::uniform_int_distribution<int> vowel(0, std::size(kVowels) - 1);
  std::uniform_int_distribution<int> syllables(2, 3);
  Lexicon l{name, {}};
  std::set<std::string> seen;
  while (l.words.size() < size) {
    std::string w;
    for (int s = syllables(rng); s > 0; --s) {
      w += kOnsets[onset(rng)];
      w += kVowels[vowel(rng)];
    }
    if (seen.insert(w).second) l.words.push_back(w);
  }
  return l;
}

std::vector<std::string> markov_texts(const Lexicon& lexicon, std::size_t count, std::uint64_t seed,
                                      int min_words, int max_words) {
  Chain chain(lexicon);
  Rng rng(derive_seed(seed, fnv1a(lexicon.name)));
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(walk(chain, rng, draw_length(rng, min_words, max_words)));
  return out;
}

std::vector<Document> unlabeled_corpus(const Lexicon& lexicon, std::size_t count, std::uint64_t seed,
                                       const std::string& prefix) {
  auto texts = markov_texts(lexicon, count, seed);
  std::vector<Document> docs;
  for (std::size_t i = 0; i < texts.size(); ++i) docs.push_back({doc_id(prefix, i), std::move(texts[i]), {}});
  return docs;
}

std::vector<Document> binary_task(std::size_t per_class, std::uint64_t seed, int min_words,
                                  int max_words) {
  Chain positive(nuclear_lexicon());
  Chain negative(materials_lexicon());
  Rng rng(derive_seed(seed, 0xb1a));
  std::vector<Document> docs;
  for (std::size_t i = 0; i < per_class; ++i) {
    docs.push_back({doc_id("bin", 2 * i), walk(positive, rng, draw_length(rng, min_words, max_words)),
                    {kSyntheticPositiveCode}});
    docs.push_back({doc_id("bin", 2 * i + 1), walk(negative, rng, draw_length(rng, min_words, max_words)),
                    {kSyntheticNegativeCode}});
  }
  return docs;
}

std::vector<Document> osti_like_corpus(const std::vector<CategoryCode>& codes, std::size_t per_code,
                                       std::size_t unlabeled, std::uint64_t seed) {
  const auto& scheme = LabelScheme::osti();
  Chain background(general_lexicon());
  std::vector<Chain> topics;
  for (CategoryCode c : codes) {
    if (!scheme.contains(c)) throw ValidationError("unknown category code " + std::to_string(c));
    topics.emplace_back(pseudo_lexicon("code" + std::to_string(c), seed, 30));
  }
  Rng rng(derive_seed(seed, 0x0571));
  std::vector<Document> docs;
  std::size_t n = 0;
  for (std::size_t i = 0; i < per_code; ++i) {
    for (std::size_t k = 0; k < codes.size(); ++k) {
      docs.push_back({doc_id("osti", n++), walk(topics[k], rng, draw_length(rng, 24, 48), &background, 0.3),
                      {codes[k]}});
    }
  }
  for (std::size_t i = 0; i < unlabeled; ++i) {
    docs.push_back({doc_id("osti", n++), walk(background, rng, draw_length(rng, 24, 48)), {}});
  }
  return docs;
}

}  // namespace dapt::synthetic

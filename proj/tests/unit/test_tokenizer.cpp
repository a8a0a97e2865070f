#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "dapt/common.hpp"
#include "dapt/tokenizer.hpp"
#include "test_support.hpp"

using namespace dapt;

namespace {

// Straightforward BPE trainer used as the reference: recount every pair
// from scratch after each merge.
std::vector<std::pair<std::string, std::string>> oracle_merges(const std::vector<std::string>& corpus,
                                                               std::size_t target) {
  std::map<std::string, long> pieces;
  for (const auto& t : corpus) {
    for (auto p : pretokenize(t)) ++pieces[std::string(p)];
  }
  std::vector<std::pair<std::vector<std::string>, long>> words;
  for (const auto& [p, c] : pieces) {
    std::vector<std::string> w;
    for (char ch : p) w.emplace_back(1, ch);
    words.emplace_back(w, c);
  }
  std::set<std::string> vocab;
  for (int b = 0; b < 256; ++b) vocab.insert(std::string(1, static_cast<char>(b)));
  std::size_t size = 256 + 5;
  std::vector<std::pair<std::string, std::string>> merges;
  while (size < target) {
    std::map<std::pair<std::string, std::string>, long> counts;
    for (const auto& [w, c] : words) {
      for (std::size_t i = 0; i + 1 < w.size(); ++i) counts[{w[i], w[i + 1]}] += c;
    }
    if (counts.empty()) break;
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;  // map order makes the first max the smallest pair
    }
    const auto [l, r] = best->first;
    merges.emplace_back(l, r);
    if (vocab.insert(l + r).second) ++size;
    for (auto& [w, c] : words) {
      std::vector<std::string> out;
      for (std::size_t i = 0; i < w.size();) {
        if (i + 1 < w.size() && w[i] == l && w[i + 1] == r) {
          out.push_back(l + r);
          i += 2;
        } else {
          out.push_back(w[i++]);
        }
      }
      w = std::move(out);
    }
  }
  return merges;
}

std::vector<std::pair<std::string, std::string>> merges_of(const Tokenizer& t) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& m : t.merges()) out.emplace_back(m.left, m.right);
  return out;
}

std::vector<std::string> pieces(std::string_view text) {
  std::vector<std::string> out;
  for (auto p : pretokenize(text)) out.emplace_back(p);
  return out;
}

const std::vector<std::string> kSmallCorpus = {
    "the reactor core uses heavy water as moderator",
    "the reactor fuel assembly holds uranium pellets",
    "heavy water reactors use natural uranium fuel",
    "spent fuel from the reactor core is reprocessed",
};

}  // namespace

TEST_SUITE("tokenizer") {
  TEST_CASE("pre-tokenizer attaches one leading space") {
    CHECK(pieces("Hello world") == std::vector<std::string>{"Hello", " world"});
    CHECK(pieces("a  b") == std::vector<std::string>{"a", " ", " b"});
    CHECK(pieces("x1.5") == std::vector<std::string>{"x", "1", ".", "5"});
    CHECK(pieces("a  ") == std::vector<std::string>{"a", "  "});
    CHECK(pieces("[MASK]") == std::vector<std::string>{"[", "MASK", "]"});
    CHECK(pieces("caf\xc3\xa9 ok") == std::vector<std::string>{"caf\xc3\xa9", " ok"});
    CHECK(pieces("").empty());
  }

  TEST_CASE("pre-tokenizer pieces concatenate to the input") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
      auto s = testing::random_utf8(rng, 1 + i % 40);
      std::string joined;
      for (auto p : pretokenize(s)) {
        CHECK_FALSE(p.empty());
        joined += p;
      }
      CHECK(joined == s);
    }
  }

  TEST_CASE("invalid UTF-8 is rejected") {
    for (const char* bad : {"\xff", "abc\xc3", "\xc0\xaf", "\xed\xa0\x80", "\xf4\x90\x80\x80", "\x80"}) {
      CAPTURE(bad);
      CHECK_FALSE(is_valid_utf8(bad));
      CHECK_THROWS_AS(pretokenize(bad), ValidationError);
    }
    CHECK(is_valid_utf8("plain \xc3\xa9 \xe2\x82\xac \xf0\x9f\x98\x80"));
  }

  TEST_CASE("base vocabulary layout") {
    Vocabulary v;
    CHECK(v.size() == 261);
    CHECK(v.token_of(SpecialTokens::kMask) == "[MASK]");
    CHECK(Vocabulary::byte_id(0) == 5);
    CHECK(Vocabulary::byte_id(255) == 260);
    CHECK(v.token_of(Vocabulary::byte_id('a')) == "a");
  }

  TEST_CASE("hand-worked merges") {
    // "ab" x1, " ab" x2, "abc" x1: (a,b) occurs 4 times, then (" ",ab) twice, then (ab,c).
    auto t = Tokenizer::train({"ab ab ab", "abc"}, 261 + 3);
    CHECK(merges_of(t) == std::vector<std::pair<std::string, std::string>>{{"a", "b"}, {" ", "ab"}, {"ab", "c"}});
    // All pairs tie at one occurrence: the smallest pair (space sorts first) wins each round.
    auto u = Tokenizer::train({"xy yx"}, 261 + 3);
    CHECK(merges_of(u) == std::vector<std::pair<std::string, std::string>>{{" ", "y"}, {" y", "x"}, {"x", "y"}});
  }

  TEST_CASE("a few merges on a small corpus") {
    auto t = Tokenizer::train(kSmallCorpus, 261 + 4);
    CHECK(t.vocab_size() == 265);
    CHECK(t.merges().size() == 4);
    CHECK(merges_of(t) == oracle_merges(kSmallCorpus, 265));
  }

  TEST_CASE("trainer agrees with the reference on random corpora") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 8; ++trial) {
      std::vector<std::string> corpus;
      std::uniform_int_distribution<int> letter(0, 5);
      for (int d = 0; d < 20; ++d) {
        std::string s;
        for (int w = 0; w < 8; ++w) {
          if (w) s += ' ';
          for (int k = 0; k < 1 + letter(rng) % 4; ++k) s += static_cast<char>('a' + letter(rng));
        }
        corpus.push_back(s);
      }
      const std::size_t target = 261 + 30;
      CAPTURE(trial);
      CHECK(merges_of(Tokenizer::train(corpus, target)) == oracle_merges(corpus, target));
    }
  }

  TEST_CASE("training stops when no pair remains") {
    auto t = Tokenizer::train({"ab"}, 1000);
    CHECK(t.merges().size() == 1);
    CHECK(t.vocab_size() == 262);
  }

  TEST_CASE("training preconditions") {
    CHECK_THROWS_AS(Tokenizer::train(kSmallCorpus, 260), ValidationError);
    CHECK_THROWS_AS(Tokenizer::train({"", ""}, 300), ValidationError);
    CHECK_THROWS_AS(Tokenizer::train({"ok", "\xff"}, 300), ValidationError);
  }

  TEST_CASE("training is deterministic") {
    auto a = Tokenizer::train(kSmallCorpus, 300);
    auto b = Tokenizer::train(kSmallCorpus, 300);
    CHECK(a.vocab_file_contents() == b.vocab_file_contents());
    CHECK(a.merges_file_contents() == b.merges_file_contents());
    CHECK(a.hash() == b.hash());
  }

  TEST_CASE("encode uses learned merges and decode inverts it") {
    auto t = Tokenizer::train(kSmallCorpus, 330);
    auto ids = t.encode("the reactor");
    CHECK(ids.size() <= 3);
    CHECK(t.decode(ids) == "the reactor");
    std::mt19937_64 rng(23);
    for (int i = 0; i < 300; ++i) {
      auto s = testing::random_utf8(rng, static_cast<std::size_t>(i % 50));
      CHECK(t.decode(t.encode(s)) == s);
    }
  }

  TEST_CASE("special strings in text are plain bytes") {
    auto t = Tokenizer::train(kSmallCorpus, 300);
    for (TokenId id : t.encode("[CLS] [MASK] [SEP]")) CHECK_FALSE(SpecialTokens::is_special(id));
    CHECK(t.decode(t.encode("[MASK]")) == "[MASK]");
  }

  TEST_CASE("decode rejects specials and unknown ids") {
    auto t = Tokenizer::train(kSmallCorpus, 300);
    CHECK_THROWS_AS(t.decode({SpecialTokens::kMask}), ValidationError);
    CHECK(t.decode({SpecialTokens::kMask}, true) == "[MASK]");
    CHECK_THROWS_AS(t.decode({static_cast<TokenId>(t.vocab_size())}), ValidationError);
    CHECK_THROWS_AS(t.decode({-1}), ValidationError);
  }

  TEST_CASE("save and load reproduce the tokenizer") {
    testing::TempDir dir("tok");
    auto t = Tokenizer::train(kSmallCorpus, 320);
    t.save(dir.path());
    auto back = Tokenizer::load(dir.path());
    CHECK(back.hash() == t.hash());
    CHECK(back.vocab_size() == t.vocab_size());
    for (const auto& s : kSmallCorpus) CHECK(back.encode(s) == t.encode(s));
    const auto vocab = read_text_file(dir / "vocab.txt");
    CHECK(vocab.rfind("#dapt-vocab v1\n", 0) == 0);
    CHECK(read_text_file(dir / "merges.txt").rfind("#dapt-merges v1\n", 0) == 0);
    CHECK(byte_to_printable(" ") == "\xc4\xa0");
    CHECK(printable_to_bytes("\xc4\xa0") == " ");
    CHECK(t.display(Vocabulary::byte_id(0xff)) == byte_to_printable("\xff"));
  }

  TEST_CASE("corrupt tokenizer files are rejected") {
    auto t = Tokenizer::train(kSmallCorpus, 280);
    const auto vocab = t.vocab_file_contents();
    const auto merges = t.merges_file_contents();
    CHECK_THROWS_AS(Tokenizer::from_strings("nonsense\n", merges), ValidationError);
    CHECK_THROWS_AS(Tokenizer::from_strings(vocab, "#dapt-merges v1\nzz qq\n"), ValidationError);
    CHECK_THROWS_AS(Tokenizer::from_strings("#dapt-vocab v1\n[CLS]\tx\n", merges), ValidationError);
    CHECK_NOTHROW(Tokenizer::from_strings(vocab, merges));
  }
}

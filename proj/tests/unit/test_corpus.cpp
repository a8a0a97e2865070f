#include <doctest.h>

#include <algorithm>
#include <set>

#include "dapt/common.hpp"
#include "dapt/corpus.hpp"
#include "test_support.hpp"

using namespace dapt;

namespace {

// OSTI subject categories, transcribed independently of the library table.
const std::vector<int> kAllCodes = {1,  2,  3,  4,  5,  7,  8,  9,  10, 11, 12, 13, 14, 15, 16,
                                    17, 20, 21, 22, 24, 25, 29, 30, 32, 33, 35, 36, 37, 38, 39,
                                    40, 42, 43, 44, 45, 46, 47, 54, 55, 56, 57, 58, 59, 60, 61,
                                    62, 63, 66, 70, 71, 72, 73, 74, 75, 77, 79, 96, 97, 98, 99};
const std::set<int> kNfcCodes = {5, 7, 11, 12, 21, 22, 38, 46, 73};

std::vector<Document> make_docs(int labeled, int unlabeled) {
  std::vector<Document> docs;
  for (int i = 0; i < labeled; ++i) {
    docs.push_back({"L" + std::to_string(i), "text " + std::to_string(i), {kAllCodes[i % kAllCodes.size()]}});
  }
  for (int i = 0; i < unlabeled; ++i) docs.push_back({"U" + std::to_string(i), "unlabeled", {}});
  return docs;
}

std::set<std::string> ids_of(const std::vector<Document>& docs) {
  std::set<std::string> s;
  for (const auto& d : docs) s.insert(d.id);
  return s;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("label scheme covers the full category table") {
    const auto& scheme = LabelScheme::osti();
    CHECK(kAllCodes.size() == 60);
    CHECK(scheme.num_classes() == static_cast<int>(kAllCodes.size()));
    for (int code : kAllCodes) {
      CAPTURE(code);
      REQUIRE(scheme.contains(code));
      CHECK(map_binary_label(code) == (kNfcCodes.count(code) == 1));
    }
    int positives = 0;
    for (int code : kAllCodes) positives += map_binary_label(code) ? 1 : 0;
    CHECK(positives == 9);
  }

  TEST_CASE("unknown codes are rejected") {
    for (int code : {0, 6, 18, 100, -1}) CHECK_THROWS_AS(map_binary_label(code), ValidationError);
  }

  TEST_CASE("only the primary category labels a document") {
    CHECK(nfc_label(Document{"a", "t", {5, 14}}));
    CHECK_FALSE(nfc_label(Document{"b", "t", {14, 5}}));
    CHECK_THROWS_AS(nfc_label(Document{"c", "t", {}}), ValidationError);
  }

  TEST_CASE("class indices are dense and ascending") {
    const auto& scheme = LabelScheme::osti();
    for (int i = 0; i < scheme.num_classes(); ++i) CHECK(scheme.class_index(scheme.code_at(i)) == i);
    CHECK(scheme.code_at(0) == 1);
    CHECK(scheme.code_at(scheme.num_classes() - 1) == 99);
  }

  TEST_CASE("parse_corpus reads records and skips blank lines") {
    auto docs = parse_corpus(
        "{\"id\":\"a\",\"text\":\"one\",\"categories\":[5,14]}\n\n"
        "{\"id\":\"b\",\"text\":\"two\"}\n");
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].categories == std::vector<int>{5, 14});
    CHECK_FALSE(docs[1].labeled());
  }

  TEST_CASE("parse_corpus errors name the line") {
    auto message = [](const std::string& text) {
      try {
        parse_corpus(text);
      } catch (const ValidationError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message("{\"id\":\"a\",\"text\":\"x\"}\nnot json\n").find("line 2") != std::string::npos);
    CHECK(message("{\"text\":\"x\"}").find("'id'") != std::string::npos);
    CHECK(message("{\"id\":\"a\",\"text\":\"   \"}").find("empty text") != std::string::npos);
    CHECK(message("{\"id\":\"a\",\"text\":\"x\",\"categories\":[\"5\"]}").find("non-integer") !=
          std::string::npos);
    CHECK(message("{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}").find("duplicate") !=
          std::string::npos);
  }

  TEST_CASE("save and load round-trip") {
    testing::TempDir dir("corpus");
    auto docs = make_docs(12, 3);
    docs[0].text = "unicode \xc3\xa9t\xc3\xa9 \"quoted\"\nnewline";
    save_corpus(docs, dir / "c.jsonl");
    auto back = load_corpus(dir / "c.jsonl");
    REQUIRE(back.size() == docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
      CHECK(back[i].id == docs[i].id);
      CHECK(back[i].text == docs[i].text);
      CHECK(back[i].categories == docs[i].categories);
    }
    CHECK_THROWS_AS(load_corpus(dir / "missing.jsonl"), IoError);
  }

  TEST_CASE("apportion floors then hands out the remainder in order") {
    // Hand-evaluated: floor(0.8 n), floor(0.1 n), floor(0.1 n), then +1 round-robin.
    CHECK(apportion(10, {0.8, 0.1, 0.1}) == std::vector<std::size_t>{8, 1, 1});
    CHECK(apportion(11, {0.8, 0.1, 0.1}) == std::vector<std::size_t>{9, 1, 1});
    CHECK(apportion(13, {0.8, 0.1, 0.1}) == std::vector<std::size_t>{11, 1, 1});
    CHECK(apportion(19, {0.8, 0.1, 0.1}) == std::vector<std::size_t>{16, 2, 1});
    CHECK(apportion(7, {0.9, 0.1}) == std::vector<std::size_t>{7, 0});
    CHECK(apportion(0, {0.5, 0.5}) == std::vector<std::size_t>{0, 0});
    for (std::size_t n = 0; n < 200; ++n) {
      auto parts = apportion(n, {0.7, 0.2, 0.1});
      CHECK(parts[0] + parts[1] + parts[2] == n);
    }
  }

  TEST_CASE("splits partition the corpus") {
    auto docs = make_docs(200, 30);
    SplitSpec spec;
    spec.seed = 11;
    auto s = split_corpus(docs, spec);
    auto all = ids_of(docs);
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const auto* part : {&s.pretrain, &s.finetune_train, &s.finetune_validation, &s.test}) {
      for (const auto& d : *part) seen.insert(d.id);
      total += part->size();
    }
    CHECK(total == docs.size());
    CHECK(seen == all);
    for (const auto* part : {&s.finetune_train, &s.finetune_validation, &s.test}) {
      for (const auto& d : *part) CHECK(d.labeled());
    }
    auto pre = ids_of(s.pretrain);
    for (int i = 0; i < 30; ++i) CHECK(pre.count("U" + std::to_string(i)) == 1);
    // 200 labeled: 160 / 20 / 20, finetune pool 18 / 2.
    CHECK(s.pretrain.size() == 160 + 30);
    CHECK(s.finetune_train.size() == 18);
    CHECK(s.finetune_validation.size() == 2);
    CHECK(s.test.size() == 20);
  }

  TEST_CASE("splits are deterministic and order independent") {
    auto docs = make_docs(100, 0);
    SplitSpec spec;
    spec.seed = 3;
    auto a = split_corpus(docs, spec);
    std::reverse(docs.begin(), docs.end());
    auto b = split_corpus(docs, spec);
    CHECK(ids_of(a.test) == ids_of(b.test));
    CHECK(ids_of(a.finetune_train) == ids_of(b.finetune_train));
    spec.seed = 4;
    auto c = split_corpus(docs, spec);
    CHECK(ids_of(a.test) != ids_of(c.test));
  }

  TEST_CASE("split preconditions") {
    // 15 labeled leaves a fine-tune pool of one document; 16 leaves two.
    CHECK_THROWS_AS(split_corpus(make_docs(15, 100), SplitSpec{}), ValidationError);
    auto smallest = split_corpus(make_docs(16, 0), SplitSpec{});
    CHECK(smallest.finetune_train.size() == 1);
    CHECK(smallest.finetune_validation.size() == 1);
    SplitSpec bad;
    bad.test_fraction = 0.2;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = SplitSpec{};
    bad.validation_fraction_of_finetune = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
  }

  TEST_CASE("nested subsets are prefixes of one order") {
    auto docs = make_docs(200, 0);
    auto subsets = nested_subsets(docs, {0.05, 0.25, 1.0}, 9);
    REQUIRE(subsets.size() == 3);
    CHECK(subsets[0].size() == 10);
    CHECK(subsets[1].size() == 50);
    CHECK(subsets[2].size() == 200);
    for (std::size_t k = 1; k < subsets.size(); ++k) {
      auto big = ids_of(subsets[k]);
      for (const auto& d : subsets[k - 1]) CHECK(big.count(d.id) == 1);
    }
    CHECK(nested_subsets(make_docs(3, 0), {0.01}, 0)[0].size() == 1);
    CHECK_THROWS_AS(nested_subsets(docs, {0.5, 0.25}, 0), ValidationError);
    CHECK_THROWS_AS(nested_subsets(docs, {0.0, 0.5}, 0), ValidationError);
    CHECK_THROWS_AS(nested_subsets(docs, {1.5}, 0), ValidationError);
    CHECK_THROWS_AS(nested_subsets({}, {0.5}, 0), ValidationError);
  }

  TEST_CASE("split manifests round-trip") {
    testing::TempDir dir("splits");
    auto docs = make_docs(40, 5);
    auto s = split_corpus(docs, SplitSpec{});
    write_split_manifests(s, dir.path());
    auto back = read_split_manifests(docs, dir.path());
    CHECK(ids_of(back.pretrain) == ids_of(s.pretrain));
    CHECK(ids_of(back.test) == ids_of(s.test));
    CHECK(read_id_list(dir / "test.ids").size() == s.test.size());
  }
}

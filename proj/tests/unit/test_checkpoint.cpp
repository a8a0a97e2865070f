#include <doctest.h>

#include <fstream>

#include "dapt/checkpoint.hpp"
#include "test_support.hpp"

using namespace dapt;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.num_layers = 1;
  c.num_heads = 2;
  c.hidden_dim = 6;
  c.ff_dim = 5;
  c.max_positions = 8;
  c.vocab_size = 20;
  c.num_classes = 4;
  c.cls_pooler = true;
  c.tie_mlm_weights = false;
  return c;
}

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("config json round-trip") {
    auto c = tiny();
    CHECK(config_from_json(config_to_json(c)) == c);
    auto j = config_to_json(c);
    j.erase("hidden_dim");
    CHECK_THROWS_AS(config_from_json(j), ValidationError);
  }

  TEST_CASE("save and load are bit exact") {
    testing::TempDir dir("ckpt");
    Checkpoint ck;
    ck.config = tiny();
    ck.params = Parameters::initialize(ck.config, 5);
    ck.tokenizer_hash = "abc123";
    ck.metadata["step"] = 42;
    ck.save(dir / "m.ckpt");
    auto back = Checkpoint::load(dir / "m.ckpt");
    CHECK(back.config == ck.config);
    CHECK(back.tokenizer_hash == "abc123");
    CHECK(back.metadata["step"] == 42);
    std::vector<const Matrix*> a;
    ck.params.for_each([&](const std::string&, const Matrix& m) { a.push_back(&m); });
    std::size_t i = 0;
    back.params.for_each([&](const std::string&, const Matrix& m) {
      CHECK(m == *a[i]);
      ++i;
    });
    CHECK(i == a.size());
    CHECK_NOTHROW(back.require_tokenizer("abc123"));
    CHECK_THROWS_AS(back.require_tokenizer("other"), ValidationError);
    CHECK(file_hash(dir / "m.ckpt").size() == 16);
  }

  TEST_CASE("damaged files are rejected") {
    testing::TempDir dir("ckpt-bad");
    Checkpoint ck;
    ck.config = tiny();
    ck.params = Parameters::initialize(ck.config, 6);
    ck.save(dir / "m.ckpt");
    auto bytes = read_text_file(dir / "m.ckpt");

    write_file_atomic(dir / "short.ckpt", bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_AS(Checkpoint::load(dir / "short.ckpt"), ValidationError);
    write_file_atomic(dir / "long.ckpt", bytes + "x");
    CHECK_THROWS_AS(Checkpoint::load(dir / "long.ckpt"), ValidationError);
    auto magic = bytes;
    magic[0] = 'X';
    write_file_atomic(dir / "magic.ckpt", magic);
    CHECK_THROWS_AS(Checkpoint::load(dir / "magic.ckpt"), ValidationError);
    CHECK_THROWS_AS(Checkpoint::load(dir / "missing.ckpt"), IoError);
  }
}

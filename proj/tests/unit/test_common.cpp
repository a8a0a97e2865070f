#include <doctest.h>

#include "dapt/common.hpp"
#include "test_support.hpp"

using namespace dapt;

TEST_SUITE("common") {
  TEST_CASE("fnv1a matches published 64-bit test vectors") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
  }

  TEST_CASE("fnv1a chains like one pass over the concatenation") {
    CHECK(fnv1a("bar", fnv1a("foo")) == fnv1a("foobar"));
  }

  TEST_CASE("derive_seed separates streams") {
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
    CHECK(derive_seed(1, 2, 0) != derive_seed(1, 2, 1));
    CHECK(derive_seed(7, 7, 7) == derive_seed(7, 7, 7));
  }

  TEST_CASE("to_hex pads to sixteen digits") {
    CHECK(to_hex(0) == "0000000000000000");
    CHECK(to_hex(0xabcull) == "0000000000000abc");
  }

  TEST_CASE("atomic write then read") {
    testing::TempDir dir("common");
    const auto p = dir / "nested/dir/file.txt";
    write_file_atomic(p, std::string("line\n\0bytes", 11));
    CHECK(read_text_file(p) == std::string("line\n\0bytes", 11));
    CHECK_FALSE(std::filesystem::exists(dir / "nested/dir/file.txt.tmp"));
    write_file_atomic(p, "second");
    CHECK(read_text_file(p) == "second");
    CHECK_THROWS_AS(read_text_file(dir / "missing"), IoError);
  }
}

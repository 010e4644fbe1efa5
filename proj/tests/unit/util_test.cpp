#include "helpers.hpp"

#include "taxonomist/errors.hpp"
#include "taxonomist/util.hpp"

using namespace taxonomist;

TEST_CASE("sha256 matches the published test vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("canonical json sorts keys and drops whitespace") {
  auto a = Json::parse(R"({"b": 1, "a": {"d": [1, 2], "c": null}})");
  auto b = Json::parse(R"({"a": {"c": null, "d": [1, 2]}, "b": 1})");
  CHECK(canonical_json(a) == canonical_json(b));
  CHECK(canonical_json(a) == R"({"a":{"c":null,"d":[1,2]},"b":1})");
}

TEST_CASE("rfc3339 round trip") {
  auto tp = parse_rfc3339("2024-03-04T05:06:07Z");
  REQUIRE(tp);
  CHECK(format_rfc3339(*tp) == "2024-03-04T05:06:07Z");
  auto offset = parse_rfc3339("2024-03-04T07:06:07+02:00");
  REQUIRE(offset);
  CHECK(*offset == *tp);
  CHECK_FALSE(parse_rfc3339("2024-13-04T05:06:07Z"));
  CHECK_FALSE(parse_rfc3339("yesterday"));
}

TEST_CASE("token estimate rounds 1.3 tokens per word up") {
  CHECK(estimate_tokens(0) == 0);
  CHECK(estimate_tokens(1) == 2);
  CHECK(estimate_tokens(10) == 13);
  CHECK(estimate_tokens(100) == 130);
  CHECK(max_words_for_tokens(13) == 10);
  CHECK(estimate_tokens(max_words_for_tokens(512)) <= 512);
}

TEST_CASE("word-bounded search ignores substrings") {
  CHECK(find_word_bounded("the late van", "late").size() == 1);
  CHECK(find_word_bounded("chocolate cake", "late").empty());
  CHECK(find_word_bounded("late, later, late", "late").size() == 2);
}

TEST_CASE("toml documents load as json") {
  auto j = parse_toml_text("a = 1\n[t]\nname = \"x\"\n[[rows]]\nv = 2.5\n");
  CHECK(j["a"] == 1);
  CHECK(j["t"]["name"] == "x");
  CHECK(j["rows"][0]["v"] == 2.5);
}

TEST_CASE("case fold and trim") {
  CHECK(case_fold("HeLLo") == "hello");
  CHECK(trim("  x y \n") == "x y");
  CHECK(split_words(" a  bb\tc ").size() == 3);
}

#include <doctest.h>

#include <set>

#include "scve/tokenizer.hpp"

using namespace scve;

TEST_SUITE("tokenizer") {
  TEST_CASE("base syllable (U+AC00) decomposes to two tokens") {
    const auto seq = tokenize("가");  // 가
    REQUIRE(seq.tokens.size() == 2);
    CHECK(seq.tokens[0] == vocab::kInitialBase + 0);
    CHECK(seq.tokens[1] == vocab::kMedialBase + 0);
  }

  TEST_CASE("한 decomposes to initial 18, medial 0, final 4") {
    // Unicode canonical decomposition of U+D55C is U+1112 U+1161 U+11AB,
    // i.e. initial index 18, medial 0, final 4.
    const auto seq = tokenize("한");
    REQUIRE(seq.tokens.size() == 3);
    CHECK(seq.tokens[0] == vocab::kInitialBase + 18);
    CHECK(seq.tokens[1] == vocab::kMedialBase + 0);
    CHECK(seq.tokens[2] == vocab::kFinalBase + 4);
  }

  TEST_CASE("auxiliary characters pass through one token each") {
    const auto seq = tokenize("a b");
    REQUIRE(seq.tokens.size() == 3);
    CHECK(seq.tokens[0] == vocab::kLowerBase + 0);
    CHECK(seq.tokens[1] == vocab::kSpace);
    CHECK(seq.tokens[2] == vocab::kLowerBase + 1);
  }

  TEST_CASE("unsupported character reports position and codepoint") {
    try {
      tokenize("abé");  // é
      FAIL("expected UnsupportedCharacter");
    } catch (const UnsupportedCharacter& e) {
      CHECK(e.position == 2);
      CHECK(e.codepoint == 0xE9);
    }
  }

  TEST_CASE("token ids stay below the vocabulary size") {
    const auto seq = tokenize("힣zZ9?! ,.");
    for (int id : seq.tokens) {
      CHECK(id >= 0);
      CHECK(id < vocab::kSize);
    }
  }

  TEST_CASE("detokenize inverts tokenize on mixed text") {
    const std::string text = "한가 ab, cD9?!";
    CHECK(detokenize(tokenize(text)) == text);
  }

  TEST_CASE("composition arithmetic: (18, 0, 4) recomposes to 한") {
    PhonemeSequence seq;
    seq.tokens = {vocab::kInitialBase + 18, vocab::kMedialBase + 0,
                  vocab::kFinalBase + 4};
    // NFC arithmetic oracle: 0xAC00 + (18*21 + 0)*28 + 4 = 0xD55C
    CHECK(0xAC00 + (18 * 21 + 0) * 28 + 4 == 0xD55C);
    CHECK(detokenize(seq) == "한");
  }

  TEST_CASE("single space token round trips") {
    PhonemeSequence seq;
    seq.tokens = {vocab::kSpace};
    CHECK(detokenize(seq) == " ");
  }

  TEST_CASE("malformed sequences are rejected with a position") {
    PhonemeSequence lone_medial;
    lone_medial.tokens = {vocab::kMedialBase + 3};
    CHECK_THROWS_AS(detokenize(lone_medial), MalformedSequence);

    PhonemeSequence initial_then_final;
    initial_then_final.tokens = {vocab::kInitialBase + 1, vocab::kFinalBase + 4};
    try {
      detokenize(initial_then_final);
      FAIL("expected MalformedSequence");
    } catch (const MalformedSequence& e) {
      CHECK(e.position == 1);
    }

    PhonemeSequence pad;
    pad.tokens = {vocab::kPad};
    CHECK_THROWS_AS(detokenize(pad), MalformedSequence);
  }

  TEST_CASE("exhaustive round trip over all 11172 syllables") {
    std::set<std::vector<int>> seen;
    for (uint32_t cp = vocab::kHangulBase; cp <= vocab::kHangulLast; ++cp) {
      std::string s;
      utf8_append(s, cp);
      const auto seq = tokenize(s);
      const uint32_t index = cp - vocab::kHangulBase;
      CHECK(seq.tokens.size() == (index % 28 == 0 ? 2 : 3));
      CHECK(detokenize(seq) == s);
      seen.insert(seq.tokens);
    }
    // injective: 11172 distinct token sequences
    CHECK(seen.size() == 11172);
  }

  TEST_CASE("tokenize is deterministic") {
    const std::string text = "가나다 abc";
    CHECK(tokenize(text).tokens == tokenize(text).tokens);
  }

  TEST_CASE("vocabulary table is stable and classes are disjoint") {
    const auto table = vocabulary_table();
    REQUIRE(table.size() == vocab::kSize);
    for (std::size_t i = 0; i < table.size(); ++i)
      CHECK(table[i].id == static_cast<int>(i));
    // an initial ㄱ and a final ㄱ have different ids
    CHECK(vocab::kInitialBase + 0 != vocab::kFinalBase + 1);
    CHECK(token_class(vocab::kInitialBase + 0) == TokenClass::initial);
    CHECK(token_class(vocab::kFinalBase + 1) == TokenClass::final_);
  }

  TEST_CASE("invalid utf-8 is a data error") {
    CHECK_THROWS_AS(tokenize("\xff\xfe"), Error);
    CHECK_THROWS_AS(tokenize(std::string("\xEA\xB0", 2)), Error);  // truncated
  }
}

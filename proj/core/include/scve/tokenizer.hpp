#pragma once
// Hangul jamo tokenizer. Syllables in U+AC00..U+D7A3 decompose arithmetically
// into an initial consonant, a medial vowel and an optional final consonant;
// each positional class owns a disjoint id range, so an initial ㄱ and a
// final ㄱ are distinct tokens. A small auxiliary set (space, . , ? !,
// ASCII letters, digits) passes through one token per character. Everything
// else is rejected.

#include <cstdint>
#include <string>
#include <vector>

#include "scve/common.hpp"

namespace scve {

struct PhonemeSequence {
  std::vector<int> tokens;
  std::size_t length() const { return tokens.size(); }
};

// Fixed id table. Ids are stable: they are defined by this layout, not
// learned or discovered at runtime.
namespace vocab {
constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kEos = 2;
constexpr int kSpace = 3;
constexpr int kPunctBase = 4;    // . , ? !
constexpr int kLowerBase = 8;    // a..z
constexpr int kUpperBase = 34;   // A..Z
constexpr int kDigitBase = 60;   // 0..9
constexpr int kInitialBase = 70;   // 19 initial consonants
constexpr int kMedialBase = 89;    // 21 medial vowels
constexpr int kFinalBase = 110;    // 28 final slots; index 0 = "no final"
constexpr int kSize = 138;

constexpr int kInitialCount = 19;
constexpr int kMedialCount = 21;
constexpr int kFinalCount = 28;

constexpr uint32_t kHangulBase = 0xAC00;
constexpr uint32_t kHangulLast = 0xD7A3;
}  // namespace vocab

enum class TokenClass {
  pad,
  bos,
  eos,
  space,
  punct,
  latin,
  digit,
  initial,
  medial,
  final_,
};

struct VocabEntry {
  int id;
  TokenClass cls;
  std::string glyph;  // UTF-8 display form
};

// The full documented id table, in id order.
std::vector<VocabEntry> vocabulary_table();

TokenClass token_class(int id);

PhonemeSequence tokenize(const std::string& text);
std::string detokenize(const PhonemeSequence& seq);

}  // namespace scve

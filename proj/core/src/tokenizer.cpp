#include "scve/tokenizer.hpp"

namespace scve {

namespace {

const char* kPunct = ".,?!";

// Positional jamo codepoints for glyph display: initials U+1100.., medials
// U+1161.., finals U+11A7.. (final index 0 has no codepoint).
uint32_t initial_codepoint(int idx) { return 0x1100 + idx; }
uint32_t medial_codepoint(int idx) { return 0x1161 + idx; }
uint32_t final_codepoint(int idx) { return 0x11A7 + idx; }

int aux_token(uint32_t cp) {
  if (cp == ' ') return vocab::kSpace;
  if (cp == '.') return vocab::kPunctBase + 0;
  if (cp == ',') return vocab::kPunctBase + 1;
  if (cp == '?') return vocab::kPunctBase + 2;
  if (cp == '!') return vocab::kPunctBase + 3;
  if (cp >= 'a' && cp <= 'z') return vocab::kLowerBase + (cp - 'a');
  if (cp >= 'A' && cp <= 'Z') return vocab::kUpperBase + (cp - 'A');
  if (cp >= '0' && cp <= '9') return vocab::kDigitBase + (cp - '0');
  return -1;
}

uint32_t aux_codepoint(int id) {
  if (id == vocab::kSpace) return ' ';
  if (id >= vocab::kPunctBase && id < vocab::kPunctBase + 4)
    return static_cast<uint32_t>(kPunct[id - vocab::kPunctBase]);
  if (id >= vocab::kLowerBase && id < vocab::kLowerBase + 26)
    return 'a' + (id - vocab::kLowerBase);
  if (id >= vocab::kUpperBase && id < vocab::kUpperBase + 26)
    return 'A' + (id - vocab::kUpperBase);
  if (id >= vocab::kDigitBase && id < vocab::kDigitBase + 10)
    return '0' + (id - vocab::kDigitBase);
  return 0;
}

}  // namespace

TokenClass token_class(int id) {
  if (id == vocab::kPad) return TokenClass::pad;
  if (id == vocab::kBos) return TokenClass::bos;
  if (id == vocab::kEos) return TokenClass::eos;
  if (id == vocab::kSpace) return TokenClass::space;
  if (id >= vocab::kPunctBase && id < vocab::kLowerBase) return TokenClass::punct;
  if (id >= vocab::kLowerBase && id < vocab::kDigitBase) return TokenClass::latin;
  if (id >= vocab::kDigitBase && id < vocab::kInitialBase) return TokenClass::digit;
  if (id >= vocab::kInitialBase && id < vocab::kMedialBase) return TokenClass::initial;
  if (id >= vocab::kMedialBase && id < vocab::kFinalBase) return TokenClass::medial;
  if (id >= vocab::kFinalBase && id < vocab::kSize) return TokenClass::final_;
  throw_data("token id out of range: " + std::to_string(id));
}

std::vector<VocabEntry> vocabulary_table() {
  std::vector<VocabEntry> out;
  out.reserve(vocab::kSize);
  auto push = [&out](int id, TokenClass cls, const std::string& glyph) {
    out.push_back({id, cls, glyph});
  };
  push(vocab::kPad, TokenClass::pad, "<pad>");
  push(vocab::kBos, TokenClass::bos, "<bos>");
  push(vocab::kEos, TokenClass::eos, "<eos>");
  push(vocab::kSpace, TokenClass::space, "<space>");
  for (int i = 0; i < 4; ++i)
    push(vocab::kPunctBase + i, TokenClass::punct, std::string(1, kPunct[i]));
  for (int i = 0; i < 26; ++i)
    push(vocab::kLowerBase + i, TokenClass::latin, std::string(1, char('a' + i)));
  for (int i = 0; i < 26; ++i)
    push(vocab::kUpperBase + i, TokenClass::latin, std::string(1, char('A' + i)));
  for (int i = 0; i < 10; ++i)
    push(vocab::kDigitBase + i, TokenClass::digit, std::string(1, char('0' + i)));
  for (int i = 0; i < vocab::kInitialCount; ++i) {
    std::string g;
    utf8_append(g, initial_codepoint(i));
    push(vocab::kInitialBase + i, TokenClass::initial, g);
  }
  for (int i = 0; i < vocab::kMedialCount; ++i) {
    std::string g;
    utf8_append(g, medial_codepoint(i));
    push(vocab::kMedialBase + i, TokenClass::medial, g);
  }
  push(vocab::kFinalBase, TokenClass::final_, "<nofinal>");
  for (int i = 1; i < vocab::kFinalCount; ++i) {
    std::string g;
    utf8_append(g, final_codepoint(i));
    push(vocab::kFinalBase + i, TokenClass::final_, g);
  }
  return out;
}

PhonemeSequence tokenize(const std::string& text) {
  const auto cps = utf8_decode(text);
  PhonemeSequence seq;
  seq.tokens.reserve(cps.size() * 3);
  for (std::size_t pos = 0; pos < cps.size(); ++pos) {
    const uint32_t cp = cps[pos];
    if (cp >= vocab::kHangulBase && cp <= vocab::kHangulLast) {
      const uint32_t index = cp - vocab::kHangulBase;
      const int initial = static_cast<int>(index / 588);
      const int medial = static_cast<int>((index % 588) / 28);
      const int final_ = static_cast<int>(index % 28);
      seq.tokens.push_back(vocab::kInitialBase + initial);
      seq.tokens.push_back(vocab::kMedialBase + medial);
      if (final_ != 0) seq.tokens.push_back(vocab::kFinalBase + final_);
      continue;
    }
    const int aux = aux_token(cp);
    if (aux < 0) throw UnsupportedCharacter(pos, cp);
    seq.tokens.push_back(aux);
  }
  return seq;
}

std::string detokenize(const PhonemeSequence& seq) {
  std::string out;
  std::size_t i = 0;
  const auto& t = seq.tokens;
  while (i < t.size()) {
    const int id = t[i];
    if (id < 0 || id >= vocab::kSize) throw MalformedSequence(i);
    const TokenClass cls = token_class(id);
    if (cls == TokenClass::initial) {
      if (i + 1 >= t.size() || token_class(t[i + 1]) != TokenClass::medial)
        throw MalformedSequence(i + 1 < t.size() ? i + 1 : i);
      const int initial = id - vocab::kInitialBase;
      const int medial = t[i + 1] - vocab::kMedialBase;
      int final_ = 0;
      i += 2;
      if (i < t.size() && token_class(t[i]) == TokenClass::final_) {
        final_ = t[i] - vocab::kFinalBase;
        if (final_ == 0) throw MalformedSequence(i);
        ++i;
      }
      const uint32_t cp =
          vocab::kHangulBase + (static_cast<uint32_t>(initial) * 21 + medial) * 28 + final_;
      utf8_append(out, cp);
      continue;
    }
    if (cls == TokenClass::medial || cls == TokenClass::final_)
      throw MalformedSequence(i);  // positional token with no initial
    if (cls == TokenClass::pad || cls == TokenClass::bos || cls == TokenClass::eos)
      throw MalformedSequence(i);
    utf8_append(out, aux_codepoint(id));
    ++i;
  }
  return out;
}

}  // namespace scve

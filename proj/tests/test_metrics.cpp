#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "scve/common.hpp"
#include "scve/metrics.hpp"

using namespace scve;

namespace {

AudioBuffer sine(double freq, double seconds, int sr, double amp = 0.5) {
  AudioBuffer a;
  a.sample_rate = sr;
  const auto n = static_cast<std::size_t>(seconds * sr);
  a.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    a.samples[i] = amp * std::sin(2.0 * M_PI * freq * i / sr);
  return a;
}

F0Track const_track(int n, double f0, bool voiced = true) {
  F0Track t;
  t.voiced.assign(n, voiced);
  t.f0_hz.assign(n, f0);
  return t;
}

// Exhaustive edit-script enumeration: every interleaving of match/substitute,
// delete, insert. Returns (min cost, max substitutions among minimal scripts).
void enumerate_scripts(const std::vector<std::string>& ref,
                       const std::vector<std::string>& hyp, std::size_t i,
                       std::size_t j, int cost, int subs, int& best_cost,
                       int& best_subs) {
  if (cost > best_cost) return;  // prune: costs only grow
  if (i == ref.size() && j == hyp.size()) {
    if (cost < best_cost || (cost == best_cost && subs > best_subs)) {
      best_cost = cost;
      best_subs = subs;
    }
    return;
  }
  if (i < ref.size() && j < hyp.size()) {
    const bool match = ref[i] == hyp[j];
    enumerate_scripts(ref, hyp, i + 1, j + 1, cost + (match ? 0 : 1),
                      subs + (match ? 0 : 1), best_cost, best_subs);
  }
  if (i < ref.size())
    enumerate_scripts(ref, hyp, i + 1, j, cost + 1, subs, best_cost, best_subs);
  if (j < hyp.size())
    enumerate_scripts(ref, hyp, i, j + 1, cost + 1, subs, best_cost, best_subs);
}

std::vector<std::vector<std::string>> all_sequences(int max_len) {
  const std::vector<std::string> alphabet{"a", "b", "c"};
  std::vector<std::vector<std::string>> out{{}};
  std::vector<std::vector<std::string>> frontier{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<std::string>> next;
    for (const auto& seq : frontier)
      for (const auto& w : alphabet) {
        auto s = seq;
        s.push_back(w);
        next.push_back(s);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST_SUITE("word_error_rate") {
  TEST_CASE("identical strings have zero errors") {
    const auto w = word_error_rate("the quick fox", "the quick fox");
    CHECK(w.substitutions == 0);
    CHECK(w.deletions == 0);
    CHECK(w.insertions == 0);
    CHECK(w.wer == 0.0);
    CHECK(w.reference_words == 3);
  }

  TEST_CASE("one substitution in three words") {
    const auto w = word_error_rate("a b c", "a x c");
    CHECK(w.substitutions == 1);
    CHECK(w.deletions == 0);
    CHECK(w.insertions == 0);
    CHECK(w.wer == doctest::Approx(1.0 / 3.0));
  }

  TEST_CASE("empty hypothesis deletes everything") {
    const auto w = word_error_rate("a", "");
    CHECK(w.deletions == 1);
    CHECK(w.substitutions == 0);
    CHECK(w.insertions == 0);
    CHECK(w.wer == 1.0);
  }

  TEST_CASE("empty reference is rejected") {
    CHECK_THROWS_AS(word_error_rate("", "a b"), Error);
    CHECK_THROWS_AS(word_error_rate("   ", "a"), Error);
  }

  TEST_CASE("wer identity: wer == (S+D+I)/N") {
    const auto w = word_error_rate("a b c d e", "b b c x y z");
    CHECK(w.wer == doctest::Approx(
                       static_cast<double>(w.substitutions + w.deletions +
                                           w.insertions) /
                       w.reference_words));
  }

  TEST_CASE("matches exhaustive script enumeration on all pairs up to length 4") {
    const auto seqs = all_sequences(4);
    for (const auto& ref : seqs) {
      if (ref.empty()) continue;
      for (const auto& hyp : seqs) {
        int best_cost = 1 << 20, best_subs = -1;
        enumerate_scripts(ref, hyp, 0, 0, 0, 0, best_cost, best_subs);
        const auto w = word_error_rate(ref, hyp);
        const int total = w.substitutions + w.deletions + w.insertions;
        REQUIRE(total == best_cost);
        REQUIRE(w.substitutions == best_subs);
        REQUIRE(w.deletions - w.insertions ==
                static_cast<int>(ref.size()) - static_cast<int>(hyp.size()));
      }
    }
  }
}

TEST_SUITE("extract_f0") {
  TEST_CASE("220 Hz sine: voiced, accurate, no octave-down frames") {
    const AudioBuffer a = sine(220.0, 1.0, 16000);
    const F0Track t = extract_f0(a);
    REQUIRE(t.size() > 0);
    const double voiced_frac =
        static_cast<double>(t.voiced_count()) / static_cast<double>(t.size());
    CHECK(voiced_frac >= 0.95);
    std::vector<double> voiced_f0;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t.voiced[i]) {
        voiced_f0.push_back(t.f0_hz[i]);
        CHECK_FALSE((t.f0_hz[i] >= 100.0 && t.f0_hz[i] <= 120.0));
      }
    std::sort(voiced_f0.begin(), voiced_f0.end());
    const double median = voiced_f0[voiced_f0.size() / 2];
    CHECK(median > 218.0);
    CHECK(median < 222.0);
  }

  TEST_CASE("silence is entirely unvoiced") {
    AudioBuffer a;
    a.sample_rate = 16000;
    a.samples.assign(16000, 0.0);
    const F0Track t = extract_f0(a);
    CHECK(t.voiced_count() == 0);
  }

  TEST_CASE("seeded white noise is mostly unvoiced") {
    AudioBuffer a;
    a.sample_rate = 16000;
    a.samples.resize(16000);
    Rng rng(424242);
    for (auto& x : a.samples) x = 0.4 * (2.0 * rng.next_double() - 1.0);
    const F0Track t = extract_f0(a);
    const double voiced_frac =
        static_cast<double>(t.voiced_count()) / static_cast<double>(t.size());
    CHECK(voiced_frac < 0.20);
  }

  TEST_CASE("too-short audio is rejected") {
    AudioBuffer a;
    a.sample_rate = 16000;
    a.samples.assign(100, 0.1);
    CHECK_THROWS_AS(extract_f0(a), Error);
  }
}

TEST_SUITE("f0_errors") {
  TEST_CASE("identical tracks give FVE 0 and F0GPE 0") {
    const auto t = const_track(10, 150.0);
    CHECK(f0_voiced_error(t, t) == 0.0);
    CHECK(f0_gross_pitch_error(t, t) == 0.0);
  }

  TEST_CASE("constant 100 vs 110 over 10 voiced frames is exactly 10 Hz") {
    const auto f = const_track(10, 100.0);
    const auto fh = const_track(10, 110.0);
    CHECK(f0_voiced_error(f, fh) == doctest::Approx(10.0).epsilon(1e-12));
  }

  TEST_CASE("single identical voiced frame gives 0") {
    const auto f = const_track(1, 200.0);
    CHECK(f0_voiced_error(f, f) == 0.0);
  }

  TEST_CASE("frames unvoiced in the synthesis count with f_hat = 0") {
    const auto f = const_track(4, 100.0);
    auto fh = const_track(4, 100.0);
    fh.voiced[2] = false;
    // rms over 4 frames: sqrt((0+0+100^2+0)/4) = 50
    CHECK(f0_voiced_error(f, fh) == doctest::Approx(50.0).epsilon(1e-12));
  }

  TEST_CASE("F0GPE: 25% deviation is an error on every frame") {
    const auto f = const_track(8, 100.0);
    const auto fh = const_track(8, 125.0);
    CHECK(f0_gross_pitch_error(f, fh) == 100.0);
  }

  TEST_CASE("F0GPE: 15% deviation is within tolerance") {
    const auto f = const_track(8, 100.0);
    const auto fh = const_track(8, 115.0);
    CHECK(f0_gross_pitch_error(f, fh) == 0.0);
  }

  TEST_CASE("F0GPE boundary: exactly +-20% counts as correct") {
    const auto f = const_track(6, 100.0);
    CHECK(f0_gross_pitch_error(f, const_track(6, 120.0)) == 0.0);
    CHECK(f0_gross_pitch_error(f, const_track(6, 80.0)) == 0.0);
  }

  TEST_CASE("errors: length mismatch and no voiced frames") {
    const auto a = const_track(4, 100.0);
    const auto b = const_track(5, 100.0);
    CHECK_THROWS_AS(f0_voiced_error(a, b), Error);
    CHECK_THROWS_AS(f0_gross_pitch_error(a, b), Error);
    const auto unvoiced = const_track(4, 0.0, false);
    CHECK_THROWS_AS(f0_voiced_error(unvoiced, a), Error);
    CHECK_THROWS_AS(f0_gross_pitch_error(unvoiced, a), Error);
  }
}

TEST_SUITE("acoustic_summary") {
  TEST_CASE("silence: zero rms, zero voiced duration") {
    AudioBuffer a;
    a.sample_rate = 16000;
    a.samples.assign(16000, 0.0);
    const auto s = acoustic_summary(a, CodecConfig{});
    CHECK(s.rms == 0.0);
    CHECK(s.voiced_duration_sec == 0.0);
    CHECK(s.total_duration_sec == doctest::Approx(1.0));
  }

  TEST_CASE("sine at amplitude 0.5 has rms 0.5/sqrt(2)") {
    const AudioBuffer a = sine(220.0, 1.0, 16000, 0.5);
    const auto s = acoustic_summary(a, CodecConfig{});
    CHECK(s.rms == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-3));
    CHECK(s.mean_f0_hz == doctest::Approx(220.0).epsilon(0.02));
  }

  TEST_CASE("doubling the amplitude doubles the rms") {
    const AudioBuffer a1 = sine(220.0, 0.5, 16000, 0.3);
    const AudioBuffer a2 = sine(220.0, 0.5, 16000, 0.6);
    const auto s1 = acoustic_summary(a1, CodecConfig{});
    const auto s2 = acoustic_summary(a2, CodecConfig{});
    CHECK(s2.rms == doctest::Approx(2.0 * s1.rms).epsilon(1e-12));
  }
}

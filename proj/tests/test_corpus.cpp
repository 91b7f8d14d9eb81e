#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "scve/corpus.hpp"
#include "scve/metrics.hpp"

using namespace scve;

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

// pick a syllable whose jamo all have unit pitch ratio: initial 3 (3 mod 7
// - 3 = 0), medial 2 (2 mod 5 - 2 = 0), no final
std::string unit_ratio_syllable() {
  std::string s;
  utf8_append(s, 0xAC00 + (3 * 21 + 2) * 28);
  return s;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("same (n, seed) is byte-identical") {
    const auto a = generate_corpus(5, 42);
    const auto b = generate_corpus(5, 42);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].transcript == b[i].transcript);
      CHECK(a[i].spec.base_f0 == b[i].spec.base_f0);
      CHECK(a[i].audio.samples == b[i].audio.samples);
    }
  }

  TEST_CASE("attributes stay on their documented grids and ranges") {
    const auto corpus = generate_corpus(64, 7);
    for (const auto& item : corpus) {
      CHECK(item.spec.base_f0 >= 80.0);
      CHECK(item.spec.base_f0 <= 400.0);
      CHECK(item.spec.tempo >= 2.0);
      CHECK(item.spec.tempo <= 8.0);
      CHECK(item.spec.amplitude >= 0.1);
      CHECK(item.spec.amplitude <= 1.0);
      CHECK(item.spec.vibrato_depth >= 0.0);
      CHECK(item.spec.vibrato_depth <= 20.0);
      const auto n_syll = utf8_decode(item.transcript).size();
      CHECK(n_syll >= 3);
      CHECK(n_syll <= 10);
    }
  }

  TEST_CASE("duration arithmetic: 10 segments at tempo 4 last 2.5 s plus gaps") {
    UtteranceSpec spec;
    // five 2-jamo syllables (final index 0)
    std::string text;
    for (int i = 0; i < 5; ++i) utf8_append(text, 0xAC00 + i * 588);
    spec.text = text;
    spec.tempo = 4.0;
    spec.base_f0 = 150.0;
    spec.amplitude = 0.5;
    spec.vibrato_depth = 0.0;
    const CorpusParams params;
    const AudioBuffer audio = render_utterance(spec, params);
    const double expect = 10 * 0.25 + 9 * params.gap_sec;
    CHECK(audio.duration() == doctest::Approx(expect).epsilon(1e-6));
  }

  TEST_CASE("f0 of a unit-ratio utterance recovers base_f0 within 5 Hz") {
    UtteranceSpec spec;
    spec.text = unit_ratio_syllable() + unit_ratio_syllable() + unit_ratio_syllable();
    spec.base_f0 = 200.0;
    spec.tempo = 3.0;
    spec.amplitude = 0.6;
    spec.vibrato_depth = 0.0;
    const AudioBuffer audio = render_utterance(spec, CorpusParams{});
    const F0Track track = extract_f0(audio);
    std::vector<double> f0;
    for (std::size_t i = 0; i < track.size(); ++i)
      if (track.voiced[i]) f0.push_back(track.f0_hz[i]);
    REQUIRE_FALSE(f0.empty());
    std::sort(f0.begin(), f0.end());
    CHECK(std::fabs(f0[f0.size() / 2] - 200.0) <= 5.0);
  }

  TEST_CASE("jamo pitch ratios are the documented semitone rule") {
    CHECK(jamo_pitch_ratio(vocab::kInitialBase + 3) == 1.0);
    CHECK(jamo_pitch_ratio(vocab::kMedialBase + 2) == 1.0);
    CHECK(jamo_pitch_ratio(vocab::kInitialBase + 0) ==
          doctest::Approx(std::pow(2.0, -3.0 / 12.0)));
    CHECK(jamo_pitch_ratio(vocab::kFinalBase + 4) == 1.0);  // 4 mod 9 - 4 = 0
    CHECK(jamo_pitch_ratio(vocab::kSpace) == 1.0);
  }

  TEST_CASE("measured attributes track the spec attributes (r > 0.95)") {
    const auto corpus = generate_corpus(200, 2026);
    std::vector<double> f0_meas, f0_pred, dur_meas, dur_pred, rms_meas, rms_pred;
    const CorpusParams params;
    for (const auto& item : corpus) {
      const AcousticSummary sum = acoustic_summary(item.audio, CodecConfig{});
      // prediction from the spec + the documented rendering arithmetic
      const auto tokens = tokenize(item.transcript).tokens;
      double ratio_sum = 0.0;
      for (int id : tokens) ratio_sum += jamo_pitch_ratio(id);
      const double mean_ratio = ratio_sum / static_cast<double>(tokens.size());
      f0_meas.push_back(sum.mean_f0_hz);
      f0_pred.push_back(item.spec.base_f0 * mean_ratio);

      const double raw = 1.0 / item.spec.tempo;
      const double seg =
          std::max(params.snap_sec,
                   params.snap_sec * std::floor(raw / params.snap_sec + 0.5));
      const double n = static_cast<double>(tokens.size());
      dur_meas.push_back(sum.total_duration_sec);
      dur_pred.push_back(n * seg + (n - 1) * params.gap_sec);

      // harmonic mix rms = amp * sqrt(sum a_h^2 / 2), corrected for fades
      // (each segment loses 4/3 of a fade window of squared envelope) and
      // diluted by the silent gaps
      const double mix = std::sqrt((0.8 * 0.8 + 0.15 * 0.15 + 0.05 * 0.05) / 2.0);
      const double eff_voiced = n * (seg - 4.0 * params.edge_fade_sec / 3.0);
      const double total = n * seg + (n - 1) * params.gap_sec;
      rms_meas.push_back(sum.rms);
      rms_pred.push_back(item.spec.amplitude * mix * std::sqrt(eff_voiced / total));
    }
    CHECK(pearson(f0_meas, f0_pred) > 0.95);
    CHECK(pearson(dur_meas, dur_pred) > 0.95);
    CHECK(pearson(rms_meas, rms_pred) > 0.95);
  }

  TEST_CASE("training set grids match frame counts and decode within bounds") {
    const auto corpus = generate_corpus(12, 5);
    CodecConfig cfg;
    cfg.codebook_size = 32;
    cfg.kmeans_iters = 10;
    std::vector<FrameMatrix> frames;
    for (const auto& item : corpus) frames.push_back(frame_analyze(item.audio, cfg));
    const CodebookSet books = fit_codebooks(frames, cfg, 77);
    const auto examples = corpus_to_training_set(corpus, books);
    REQUIRE(examples.size() == corpus.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
      CHECK(examples[i].grid.num_frames ==
            cfg.frame_count(corpus[i].audio.samples.size()));
      CHECK(examples[i].text.tokens == tokenize(corpus[i].transcript).tokens);
      // 8-stage reconstruction at least as good as 1-stage, per item
      const FrameMatrix fm = frame_analyze(corpus[i].audio, cfg);
      auto mse = [&](int stages) {
        const FrameMatrix recon = rvq_decode(examples[i].grid, books, stages);
        double acc = 0.0;
        for (std::size_t k = 0; k < fm.v.size(); ++k) {
          const double d = fm.v[k] - recon.v[k];
          acc += d * d;
        }
        return acc / static_cast<double>(fm.v.size());
      };
      CHECK(mse(8) <= mse(1));
    }
  }

  TEST_CASE("persisted prep files are byte-identical across runs") {
    const auto corpus = generate_corpus(4, 9);
    CodecConfig cfg;
    cfg.codebook_size = 16;
    cfg.kmeans_iters = 5;
    std::vector<FrameMatrix> frames;
    for (const auto& item : corpus) frames.push_back(frame_analyze(item.audio, cfg));
    const CodebookSet books = fit_codebooks(frames, cfg, 3);
    const auto dir =
        (std::filesystem::temp_directory_path() / "scve_prep_test").string();
    std::filesystem::remove_all(dir);
    corpus_to_training_set(corpus, books, dir);
    const std::string first_tokens = read_file(dir + "/utt0.tokens");
    const std::string first_codes = read_file(dir + "/utt0.codes");
    corpus_to_training_set(corpus, books, dir);
    CHECK(read_file(dir + "/utt0.tokens") == first_tokens);
    CHECK(read_file(dir + "/utt0.codes") == first_codes);
  }

  TEST_CASE("manifest round trip") {
    const auto corpus = generate_corpus(3, 31);
    const auto dir =
        (std::filesystem::temp_directory_path() / "scve_manifest_test").string();
    std::filesystem::create_directories(dir);
    std::vector<std::string> paths{"wav/a.wav", "wav/b.wav", "wav/c.wav"};
    write_manifest(dir + "/manifest.csv", corpus, paths);
    const auto entries = read_manifest(dir + "/manifest.csv");
    REQUIRE(entries.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(entries[i].id == corpus[i].id);
      CHECK(entries[i].wav_path == paths[i]);
      CHECK(entries[i].transcript == corpus[i].transcript);
      CHECK(entries[i].spec.base_f0 == corpus[i].spec.base_f0);
      CHECK(entries[i].spec.tempo == corpus[i].spec.tempo);
      CHECK(entries[i].spec.seed == corpus[i].spec.seed);
    }
  }
}

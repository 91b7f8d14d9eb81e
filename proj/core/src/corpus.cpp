#include "scve/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace scve {

namespace {

// Harmonic mix for every tone segment.
constexpr double kHarmonicAmp[3] = {0.8, 0.15, 0.05};
constexpr double kVibratoRateHz = 5.0;

double grid_value(Rng& rng, double lo, double step, int levels) {
  return lo + step * static_cast<double>(rng.next_below(levels));
}

}  // namespace

double jamo_pitch_ratio(int token_id) {
  const TokenClass cls = token_class(token_id);
  int semitone = 0;
  if (cls == TokenClass::initial)
    semitone = (token_id - vocab::kInitialBase) % 7 - 3;
  else if (cls == TokenClass::medial)
    semitone = (token_id - vocab::kMedialBase) % 5 - 2;
  else if (cls == TokenClass::final_)
    semitone = (token_id - vocab::kFinalBase) % 9 - 4;
  return std::pow(2.0, semitone / 12.0);
}

const std::vector<std::string>& syllable_pool() {
  static const std::vector<std::string> pool = [] {
    std::vector<std::string> out;
    out.reserve(200);
    for (int initial = 0; initial < 10; ++initial)
      for (int medial = 0; medial < 10; ++medial)
        for (int final_ : {0, 4}) {  // none or ㄴ
          const uint32_t cp =
              vocab::kHangulBase +
              (static_cast<uint32_t>(initial) * 21 + medial) * 28 + final_;
          std::string s;
          utf8_append(s, cp);
          out.push_back(s);
        }
    return out;
  }();
  return pool;
}

AudioBuffer render_utterance(const UtteranceSpec& spec, const CorpusParams& params) {
  const int sr = params.sample_rate;
  const PhonemeSequence seq = tokenize(spec.text);
  if (seq.tokens.empty()) throw_data("render_utterance: empty text");

  // Segment duration snaps to the analysis hop grid so identical jamo render
  // identically at frame boundaries.
  const double raw = 1.0 / spec.tempo;
  const double snapped =
      std::max(params.snap_sec,
               params.snap_sec * std::floor(raw / params.snap_sec + 0.5));
  const int seg_len = static_cast<int>(std::lround(snapped * sr));
  const int gap_len = static_cast<int>(std::lround(params.gap_sec * sr));
  const int fade_len = static_cast<int>(std::lround(params.edge_fade_sec * sr));

  const std::size_t n_segments = seq.tokens.size();
  AudioBuffer audio;
  audio.sample_rate = sr;
  audio.samples.assign(n_segments * seg_len + (n_segments - 1) * gap_len, 0.0);

  std::size_t cursor = 0;
  for (std::size_t s = 0; s < n_segments; ++s) {
    const double pitch = spec.base_f0 * jamo_pitch_ratio(seq.tokens[s]);
    for (int i = 0; i < seg_len; ++i) {
      const double t = static_cast<double>(i) / sr;
      // phase of the vibrato'd fundamental: 2*pi * integral of f(t)
      const double phase =
          2.0 * M_PI *
          (pitch * t + (spec.vibrato_depth / (2.0 * M_PI * kVibratoRateHz)) *
                           (1.0 - std::cos(2.0 * M_PI * kVibratoRateHz * t)));
      double x = 0.0;
      for (int h = 0; h < 3; ++h)
        x += kHarmonicAmp[h] * std::sin(static_cast<double>(h + 1) * phase);
      double env = 1.0;
      if (i < fade_len) env = static_cast<double>(i) / fade_len;
      const int from_end = seg_len - 1 - i;
      if (from_end < fade_len)
        env = std::min(env, static_cast<double>(from_end) / fade_len);
      audio.samples[cursor + i] = spec.amplitude * env * x;
    }
    cursor += seg_len;
    if (s + 1 < n_segments) cursor += gap_len;
  }
  return audio;
}

std::vector<CorpusItem> generate_corpus(int n, uint64_t seed,
                                        const CorpusParams& params) {
  if (n < 1) throw_data("generate_corpus: n must be at least 1");
  const auto& pool = syllable_pool();
  std::vector<CorpusItem> out(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      CorpusItem& item = out[i];
      item.id = static_cast<int>(i);
      item.spec.seed = derive_seed(seed, "corpus.utt", i);
      Rng rng(item.spec.seed);
      const int syllables =
          params.min_syllables +
          static_cast<int>(rng.next_below(params.max_syllables - params.min_syllables + 1));
      std::string text;
      for (int s = 0; s < syllables; ++s)
        text += pool[rng.next_below(pool.size())];
      item.spec.text = text;
      item.spec.base_f0 = grid_value(rng, 80.0, 10.0, 33);
      item.spec.tempo = grid_value(rng, 2.0, 0.5, 13);
      item.spec.amplitude = grid_value(rng, 0.1, 0.1, 10);
      item.spec.vibrato_depth = grid_value(rng, 0.0, 2.5, 9);
      item.transcript = text;
      item.audio = render_utterance(item.spec, params);
    }
  });
  return out;
}

std::vector<TrainingExample> corpus_to_training_set(
    const std::vector<CorpusItem>& corpus, const CodebookSet& books,
    const std::string& out_dir) {
  std::vector<TrainingExample> out(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const CorpusItem& item = corpus[i];
      TrainingExample& ex = out[i];
      ex.id = item.id;
      ex.text = tokenize(item.transcript);
      ex.grid = rvq_encode(frame_analyze(item.audio, books.cfg), books);
    }
  });
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    for (const auto& ex : out) {
      const std::string stem = out_dir + "/utt" + std::to_string(ex.id);
      std::ofstream tok(stem + ".tokens", std::ios::trunc);
      if (!tok) throw_data("cannot write " + stem + ".tokens");
      for (std::size_t j = 0; j < ex.text.tokens.size(); ++j) {
        if (j) tok << ' ';
        tok << ex.text.tokens[j];
      }
      tok << "\n";
      write_codes(stem + ".codes", ex.grid);
    }
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<CorpusItem>& corpus,
                    const std::vector<std::string>& wav_paths) {
  if (corpus.size() != wav_paths.size())
    throw_data("write_manifest: path count mismatch");
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_data("cannot write manifest: " + path);
  f << "id,wav_path,transcript,base_f0,tempo,amplitude,vibrato_depth,seed\n";
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& c = corpus[i];
    char buf[128];
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g,%.17g,%llu\n",
                  c.spec.base_f0, c.spec.tempo, c.spec.amplitude,
                  c.spec.vibrato_depth,
                  static_cast<unsigned long long>(c.spec.seed));
    f << c.id << ',' << wav_paths[i] << ',' << c.transcript << buf;
  }
  if (!f) throw_data("short write to manifest: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw_data("cannot open manifest: " + path);
  std::string line;
  if (!std::getline(f, line)) throw_data("empty manifest: " + path);
  if (line.rfind("id,wav_path,transcript", 0) != 0)
    throw_data("unexpected manifest header in " + path);
  std::vector<ManifestEntry> out;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8)
      throw_data("manifest line " + std::to_string(lineno) + " has " +
                 std::to_string(fields.size()) + " fields, expected 8");
    ManifestEntry e;
    e.id = std::stoi(fields[0]);
    e.wav_path = fields[1];
    e.transcript = fields[2];
    e.spec.text = fields[2];
    e.spec.base_f0 = std::stod(fields[3]);
    e.spec.tempo = std::stod(fields[4]);
    e.spec.amplitude = std::stod(fields[5]);
    e.spec.vibrato_depth = std::stod(fields[6]);
    e.spec.seed = std::stoull(fields[7]);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace scve

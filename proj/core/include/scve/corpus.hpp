#pragma once
// Synthetic controllable corpus: short Hangul strings rendered as harmonic
// tone segments, one segment per jamo, with utterance-level pitch, tempo,
// amplitude and vibrato attributes drawn from documented grids. Everything
// is reproducible from a single seed. The known attribute values are the
// ground truth the style-sweep harness is validated against.

#include <cstdint>
#include <string>
#include <vector>

#include "scve/codec.hpp"
#include "scve/tokenizer.hpp"
#include "scve/wav.hpp"

namespace scve {

struct UtteranceSpec {
  std::string text;       // Hangul syllables only
  double base_f0 = 200.0;   // [80, 400] Hz
  double tempo = 4.0;       // [2, 8] segments per second
  double amplitude = 0.5;   // [0.1, 1.0]
  double vibrato_depth = 0.0;  // [0, 20] Hz, 5 Hz vibrato rate
  uint64_t seed = 0;
};

struct CorpusItem {
  int id = 0;
  UtteranceSpec spec;
  AudioBuffer audio;
  std::string transcript;
};

struct CorpusParams {
  int sample_rate = 16000;
  int min_syllables = 3;
  int max_syllables = 10;
  double gap_sec = 0.020;       // silence between segments
  double edge_fade_sec = 0.005;  // fade at segment edges
  double snap_sec = 0.010;       // segment durations round to this grid
};

// Per-jamo pitch ratio, a fixed semitone offset derived from the token id:
// initials (index mod 7) - 3, medials (index mod 5) - 2, finals
// (index mod 9) - 4 semitones. Auxiliary tokens map to ratio 1.
double jamo_pitch_ratio(int token_id);

// Fixed 200-syllable pool: initials 0..9 x medials 0..9 x final in {none, n}.
const std::vector<std::string>& syllable_pool();

AudioBuffer render_utterance(const UtteranceSpec& spec, const CorpusParams& params);

// Deterministic corpus of n utterances. Attribute grids: base_f0 80..400
// step 10, tempo 2..8 step 0.5, amplitude 0.1..1.0 step 0.1, vibrato
// 0..20 step 2.5.
std::vector<CorpusItem> generate_corpus(int n, uint64_t seed,
                                        const CorpusParams& params = {});

struct TrainingExample {
  int id = 0;
  PhonemeSequence text;
  QuantizedTokenGrid grid;
};

// Tokenize transcripts and encode audio with the fitted codebooks. When
// out_dir is non-empty, persists utt<id>.tokens (one line of ids) and
// utt<id>.codes next to each other; re-runs are byte-identical.
std::vector<TrainingExample> corpus_to_training_set(
    const std::vector<CorpusItem>& corpus, const CodebookSet& books,
    const std::string& out_dir = "");

// Manifest: id, wav_path, transcript, base_f0, tempo, amplitude,
// vibrato_depth, seed (CSV with a header row).
void write_manifest(const std::string& path, const std::vector<CorpusItem>& corpus,
                    const std::vector<std::string>& wav_paths);

struct ManifestEntry {
  int id = 0;
  std::string wav_path;
  std::string transcript;
  UtteranceSpec spec;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace scve

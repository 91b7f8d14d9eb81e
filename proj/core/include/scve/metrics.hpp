#pragma once
// Objective evaluation: word error rate with a substitution/insertion/
// deletion breakdown, autocorrelation F0 extraction, the two F0 error
// measures, and the per-utterance acoustic summary the sweep harness uses.

#include <string>
#include <vector>

#include "scve/codec.hpp"
#include "scve/wav.hpp"

namespace scve {

struct WERBreakdown {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int reference_words = 0;
  double wer = 0.0;
};

// Minimal-edit alignment with unit costs. Among minimal alignments the
// breakdown prefers substitutions over insertions over deletions.
WERBreakdown word_error_rate(const std::string& reference,
                             const std::string& hypothesis);
WERBreakdown word_error_rate(const std::vector<std::string>& reference,
                             const std::vector<std::string>& hypothesis);

struct F0Config {
  double frame_sec = 0.040;
  double hop_sec = 0.010;
  double fmin_hz = 50.0;
  double fmax_hz = 500.0;
  double voicing_threshold = 0.5;  // normalized autocorrelation peak
  double rms_floor = 1e-4;
};

struct F0Track {
  std::vector<bool> voiced;
  std::vector<double> f0_hz;  // defined only where voiced
  double hop_sec = 0.010;

  std::size_t size() const { return voiced.size(); }
  int voiced_count() const;
};

F0Track extract_f0(const AudioBuffer& audio, const F0Config& cfg = {});

// RMS of f - f_hat over frames voiced in the reference; frames the synthesis
// left unvoiced count with f_hat = 0.
double f0_voiced_error(const F0Track& f, const F0Track& f_hat);

// Percent of both-voiced frames with |f_hat - f| > delta * f. The boundary
// |f_hat - f| == delta * f counts as correct.
double f0_gross_pitch_error(const F0Track& f, const F0Track& f_hat,
                            double delta = 0.20);

struct AcousticSummary {
  double mean_f0_hz = 0.0;  // over voiced frames, 0 when none
  double voiced_duration_sec = 0.0;
  double total_duration_sec = 0.0;
  double rms = 0.0;
  double voiced_fraction = 0.0;
  FrameMatrix mel;  // computed with the codec filter bank
};

AcousticSummary acoustic_summary(const AudioBuffer& audio,
                                 const CodecConfig& codec_cfg,
                                 const F0Config& f0_cfg = {});

void write_f0_csv(const std::string& path, const F0Track& track);
void write_mel_csv(const std::string& path, const FrameMatrix& mel);

}  // namespace scve

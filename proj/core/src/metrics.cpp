#include "scve/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "scve/common.hpp"

namespace scve {

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

}  // namespace

WERBreakdown word_error_rate(const std::string& reference,
                             const std::string& hypothesis) {
  return word_error_rate(split_words(reference), split_words(hypothesis));
}

WERBreakdown word_error_rate(const std::vector<std::string>& ref,
                             const std::vector<std::string>& hyp) {
  const int n = static_cast<int>(ref.size());
  const int m = static_cast<int>(hyp.size());
  if (n == 0) throw_data("word_error_rate: empty reference");

  // Pass 1: minimal edit cost.
  std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1, 0));
  for (int i = 0; i <= n; ++i) cost[i][0] = i;
  for (int j = 0; j <= m; ++j) cost[0][j] = j;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j) {
      const int sub = cost[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const int del = cost[i - 1][j] + 1;
      const int ins = cost[i][j - 1] + 1;
      cost[i][j] = std::min(sub, std::min(del, ins));
    }

  // Pass 2: among minimal alignments, maximize the substitution count.
  // Preferring substitutions fixes the whole breakdown, because D - I is
  // pinned by the length difference.
  constexpr int kNeg = -1 << 20;
  std::vector<std::vector<int>> subs(n + 1, std::vector<int>(m + 1, kNeg));
  subs[0][0] = 0;
  for (int j = 1; j <= m; ++j) subs[0][j] = 0;
  for (int i = 1; i <= n; ++i) subs[i][0] = 0;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j) {
      const bool match = ref[i - 1] == hyp[j - 1];
      int best = kNeg;
      if (cost[i][j] == cost[i - 1][j - 1] + (match ? 0 : 1))
        best = std::max(best, subs[i - 1][j - 1] + (match ? 0 : 1));
      if (cost[i][j] == cost[i][j - 1] + 1) best = std::max(best, subs[i][j - 1]);
      if (cost[i][j] == cost[i - 1][j] + 1) best = std::max(best, subs[i - 1][j]);
      subs[i][j] = best;
    }

  WERBreakdown out;
  out.reference_words = n;
  const int total = cost[n][m];
  out.substitutions = subs[n][m];
  // total = S + D + I and D - I = n - m.
  out.insertions = (total - out.substitutions - (n - m)) / 2;
  out.deletions = out.insertions + (n - m);
  out.wer = static_cast<double>(total) / n;
  return out;
}

// ---------------------------------------------------------------------------
// F0

int F0Track::voiced_count() const {
  int n = 0;
  for (bool v : voiced) n += v ? 1 : 0;
  return n;
}

F0Track extract_f0(const AudioBuffer& audio, const F0Config& cfg) {
  const int sr = audio.sample_rate;
  const int frame = static_cast<int>(std::lround(cfg.frame_sec * sr));
  const int hop = static_cast<int>(std::lround(cfg.hop_sec * sr));
  if (static_cast<int>(audio.samples.size()) < frame)
    throw_data("audio too short for F0 analysis");
  const int lag_min = std::max(1, static_cast<int>(std::floor(sr / cfg.fmax_hz)));
  const int lag_max =
      std::min(frame - 1, static_cast<int>(std::ceil(sr / cfg.fmin_hz)));
  if (lag_min >= lag_max) throw_data("F0 range incompatible with frame length");

  const int num_frames =
      static_cast<int>((audio.samples.size() - frame) / hop) + 1;
  F0Track track;
  track.hop_sec = cfg.hop_sec;
  track.voiced.assign(num_frames, false);
  track.f0_hz.assign(num_frames, 0.0);

  parallel_for(static_cast<std::size_t>(num_frames), [&](std::size_t lo, std::size_t hi) {
    std::vector<double> r(lag_max + 1, 0.0);
    for (std::size_t t = lo; t < hi; ++t) {
      const double* x = audio.samples.data() + t * hop;
      double energy = 0.0;
      for (int i = 0; i < frame; ++i) energy += x[i] * x[i];
      const double rms = std::sqrt(energy / frame);
      if (rms < cfg.rms_floor) continue;

      // normalized autocorrelation over the overlapping region
      double best = 0.0;
      for (int lag = lag_min; lag <= lag_max; ++lag) {
        double num = 0.0, e0 = 0.0, e1 = 0.0;
        const int n = frame - lag;
        for (int i = 0; i < n; ++i) {
          num += x[i] * x[i + lag];
          e0 += x[i] * x[i];
          e1 += x[i + lag] * x[i + lag];
        }
        const double denom = std::sqrt(e0 * e1);
        r[lag] = denom > 0.0 ? num / denom : 0.0;
        best = std::max(best, r[lag]);
      }
      if (best < cfg.voicing_threshold) continue;

      // The smallest local maximum within 10% of the best peak wins; this
      // rejects the octave-down peaks a pure global argmax would pick.
      int lag = -1;
      for (int l = lag_min; l <= lag_max; ++l) {
        const bool local_max = (l == lag_min || r[l] >= r[l - 1]) &&
                               (l == lag_max || r[l] >= r[l + 1]);
        if (local_max && r[l] >= 0.9 * best) {
          lag = l;
          break;
        }
      }
      if (lag < 0) continue;

      double refined = lag;
      if (lag > lag_min && lag < lag_max) {
        const double a = r[lag - 1], b = r[lag], c2 = r[lag + 1];
        const double denom = a - 2.0 * b + c2;
        if (std::fabs(denom) > 1e-12) {
          const double delta = 0.5 * (a - c2) / denom;
          if (std::fabs(delta) <= 1.0) refined = lag + delta;
        }
      }
      double f0 = sr / refined;
      f0 = std::min(cfg.fmax_hz, std::max(cfg.fmin_hz, f0));
      track.voiced[t] = true;
      track.f0_hz[t] = f0;
    }
  });
  return track;
}

double f0_voiced_error(const F0Track& f, const F0Track& f_hat) {
  if (f.size() != f_hat.size())
    throw_data("f0_voiced_error: track lengths differ");
  double acc = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!f.voiced[i]) continue;
    const double fh = f_hat.voiced[i] ? f_hat.f0_hz[i] : 0.0;
    const double d = f.f0_hz[i] - fh;
    acc += d * d;
    ++n;
  }
  if (n == 0) throw_data("f0_voiced_error: no voiced frames in reference");
  return std::sqrt(acc / n);
}

double f0_gross_pitch_error(const F0Track& f, const F0Track& f_hat,
                            double delta) {
  if (f.size() != f_hat.size())
    throw_data("f0_gross_pitch_error: track lengths differ");
  int both = 0, errors = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!f.voiced[i] || !f_hat.voiced[i]) continue;
    ++both;
    if (std::fabs(f_hat.f0_hz[i] - f.f0_hz[i]) > delta * f.f0_hz[i]) ++errors;
  }
  if (both == 0) throw_data("f0_gross_pitch_error: no frames voiced in both tracks");
  return 100.0 * errors / both;
}

AcousticSummary acoustic_summary(const AudioBuffer& audio,
                                 const CodecConfig& codec_cfg,
                                 const F0Config& f0_cfg) {
  if (audio.samples.empty()) throw_data("acoustic_summary: empty audio");
  AcousticSummary s;
  s.total_duration_sec = audio.duration();
  double energy = 0.0;
  for (double x : audio.samples) energy += x * x;
  s.rms = std::sqrt(energy / static_cast<double>(audio.samples.size()));

  if (static_cast<int>(audio.samples.size()) >=
      static_cast<int>(std::lround(f0_cfg.frame_sec * audio.sample_rate))) {
    const F0Track track = extract_f0(audio, f0_cfg);
    const int voiced = track.voiced_count();
    s.voiced_duration_sec = voiced * track.hop_sec;
    s.voiced_fraction =
        track.size() > 0 ? static_cast<double>(voiced) / track.size() : 0.0;
    if (voiced > 0) {
      double acc = 0.0;
      for (std::size_t i = 0; i < track.size(); ++i)
        if (track.voiced[i]) acc += track.f0_hz[i];
      s.mean_f0_hz = acc / voiced;
    }
  }
  if (static_cast<int>(audio.samples.size()) >= codec_cfg.frame_size)
    s.mel = frame_analyze(audio, codec_cfg);
  return s;
}

void write_f0_csv(const std::string& path, const F0Track& track) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_data("cannot write F0 csv: " + path);
  f << "frame,voiced,f0_hz\n";
  for (std::size_t i = 0; i < track.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%d,%.6f\n", i,
                  track.voiced[i] ? 1 : 0, track.voiced[i] ? track.f0_hz[i] : 0.0);
    f << buf;
  }
}

void write_mel_csv(const std::string& path, const FrameMatrix& mel) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_data("cannot write mel csv: " + path);
  f << "frame";
  for (int b = 0; b < mel.dim; ++b) f << ",band" << b;
  f << "\n";
  for (int t = 0; t < mel.num_frames; ++t) {
    f << t;
    const double* row = mel.row(t);
    for (int b = 0; b < mel.dim; ++b) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), ",%.6f", row[b]);
      f << buf;
    }
    f << "\n";
  }
}

}  // namespace scve

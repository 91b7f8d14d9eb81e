#pragma once
// Frame-level audio codec: Hann-windowed DFT magnitudes collapsed through a
// mel-spaced triangular filter bank (log domain), an 8-stage residual vector
// quantizer over those frames, and sinusoidal overlap-add resynthesis.
// The token models only ever see the integer code grid this produces.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "scve/common.hpp"
#include "scve/wav.hpp"

namespace scve {

constexpr int kRvqStages = 8;
constexpr double kLogFloor = 1e-5;  // filter-bank magnitudes clamp at log(1e-5)

struct CodecConfig {
  int sample_rate = 16000;
  int frame_size = 400;  // 25 ms
  int frame_hop = 160;   // 10 ms
  int bands = 40;
  double fmin_hz = 50.0;
  double fmax_hz = 7000.0;
  int codebook_size = 64;
  int kmeans_iters = 30;
  int kmeans_sample = 20000;

  int frame_count(std::size_t num_samples) const {
    if (num_samples < static_cast<std::size_t>(frame_size)) return 0;
    return static_cast<int>((num_samples - frame_size) / frame_hop) + 1;
  }
};

struct FrameMatrix {
  // frames: L_t x D_f, log filter-bank magnitudes
  int num_frames = 0;
  int dim = 0;
  std::vector<double> v;
  int frame_hop = 0;
  int frame_size = 0;

  double* row(int t) { return v.data() + static_cast<std::size_t>(t) * dim; }
  const double* row(int t) const { return v.data() + static_cast<std::size_t>(t) * dim; }
};

struct QuantizedTokenGrid {
  int num_frames = 0;
  int codebook_size = 0;
  // codes[s][t]: stage s in 0..7 (stage 0 feeds the AR model)
  std::array<std::vector<int>, kRvqStages> codes;

  int at(int stage, int t) const { return codes[stage][t]; }
};

struct CodebookSet {
  CodecConfig cfg;
  // books[s]: K x bands, row-major
  std::array<std::vector<double>, kRvqStages> books;

  const double* codeword(int stage, int k) const {
    return books[stage].data() + static_cast<std::size_t>(k) * cfg.bands;
  }
};

// Center frequencies (Hz) of the triangular bands, mel spaced.
std::vector<double> band_centers(const CodecConfig& cfg);

FrameMatrix frame_analyze(const AudioBuffer& audio, const CodecConfig& cfg);
AudioBuffer frame_synthesize(const FrameMatrix& frames, const CodecConfig& cfg);

// Stagewise k-means on residuals. Stage 0 is unconstrained; stages 1..7 pin
// codeword 0 to the zero vector, which makes residual norms non-increasing.
CodebookSet fit_codebooks(const std::vector<FrameMatrix>& corpus,
                          const CodecConfig& cfg, uint64_t seed);

QuantizedTokenGrid rvq_encode(const FrameMatrix& frames, const CodebookSet& books);
FrameMatrix rvq_decode(const QuantizedTokenGrid& grid, const CodebookSet& books,
                       int stages = kRvqStages);

// .codes text format: "stages=8 L=<n> K=<k>" then one line per stage.
void write_codes(const std::string& path, const QuantizedTokenGrid& grid);
QuantizedTokenGrid read_codes(const std::string& path);

// Codebook container: magic "RVQ1", dims + codec config, float64 payload.
void write_codebooks(const std::string& path, const CodebookSet& books);
CodebookSet read_codebooks(const std::string& path);

// Naive radix-2 FFT helper (power-of-two size), exposed for the analysis path
// and reused by tests as a building block.
void fft_radix2(std::vector<double>& re, std::vector<double>& im);

}  // namespace scve

#include "scve/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace scve {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (n - 1));
  return w;
}

// Triangular filters on the DFT magnitude grid. weights[b][bin].
struct FilterBank {
  int bands;
  int bins;
  std::vector<double> w;  // bands x bins
  std::vector<double> centers_hz;
};

FilterBank make_filter_bank(const CodecConfig& cfg, int fft_size) {
  FilterBank fb;
  fb.bands = cfg.bands;
  fb.bins = fft_size / 2 + 1;
  fb.w.assign(static_cast<std::size_t>(fb.bands) * fb.bins, 0.0);
  fb.centers_hz.resize(cfg.bands);

  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(cfg.bands + 2);
  for (int i = 0; i < cfg.bands + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.bands + 1));
  for (int b = 0; b < cfg.bands; ++b) fb.centers_hz[b] = edges[b + 1];

  const double bin_hz = static_cast<double>(cfg.sample_rate) / fft_size;
  for (int b = 0; b < cfg.bands; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    for (int k = 0; k < fb.bins; ++k) {
      const double f = k * bin_hz;
      double val = 0.0;
      if (f > lo && f < mid)
        val = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        val = (hi - f) / (hi - mid);
      fb.w[static_cast<std::size_t>(b) * fb.bins + k] = val;
    }
  }
  return fb;
}

}  // namespace

void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0 || im.size() != n)
    throw_data("fft_radix2: size must be a power of two");
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = i + k, b = i + k + len / 2;
        const double xr = re[b] * cr - im[b] * ci;
        const double xi = re[b] * ci + im[b] * cr;
        re[b] = re[a] - xr;
        im[b] = im[a] - xi;
        re[a] += xr;
        im[a] += xi;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

std::vector<double> band_centers(const CodecConfig& cfg) {
  return make_filter_bank(cfg, next_pow2(cfg.frame_size)).centers_hz;
}

FrameMatrix frame_analyze(const AudioBuffer& audio, const CodecConfig& cfg) {
  if (audio.samples.size() < static_cast<std::size_t>(cfg.frame_size))
    throw_data("audio too short: need at least one full frame");
  const int fft_size = next_pow2(cfg.frame_size);
  const FilterBank fb = make_filter_bank(cfg, fft_size);
  const auto window = hann_window(cfg.frame_size);

  FrameMatrix out;
  out.num_frames = cfg.frame_count(audio.samples.size());
  out.dim = cfg.bands;
  out.frame_hop = cfg.frame_hop;
  out.frame_size = cfg.frame_size;
  out.v.assign(static_cast<std::size_t>(out.num_frames) * cfg.bands, 0.0);

  const double floor_log = std::log(kLogFloor);
  parallel_for(static_cast<std::size_t>(out.num_frames), [&](std::size_t lo, std::size_t hi) {
    std::vector<double> re(fft_size), im(fft_size);
    for (std::size_t t = lo; t < hi; ++t) {
      const std::size_t start = t * cfg.frame_hop;
      std::fill(re.begin(), re.end(), 0.0);
      std::fill(im.begin(), im.end(), 0.0);
      for (int i = 0; i < cfg.frame_size; ++i)
        re[i] = audio.samples[start + i] * window[i];
      fft_radix2(re, im);
      double* frame = out.v.data() + t * cfg.bands;
      for (int b = 0; b < cfg.bands; ++b) {
        const double* wb = fb.w.data() + static_cast<std::size_t>(b) * fb.bins;
        double acc = 0.0;
        for (int k = 0; k < fb.bins; ++k) {
          if (wb[k] == 0.0) continue;
          acc += wb[k] * std::hypot(re[k], im[k]);
        }
        frame[b] = acc > kLogFloor ? std::log(acc) : floor_log;
      }
    }
  });
  return out;
}

AudioBuffer frame_synthesize(const FrameMatrix& frames, const CodecConfig& cfg) {
  if (frames.dim != cfg.bands) throw_data("frame_synthesize: band count mismatch");
  const auto centers = band_centers(cfg);
  const auto window = hann_window(cfg.frame_size);
  const double floor_log = std::log(kLogFloor);

  AudioBuffer out;
  out.sample_rate = cfg.sample_rate;
  const std::size_t total =
      frames.num_frames > 0
          ? static_cast<std::size_t>(frames.num_frames - 1) * cfg.frame_hop + cfg.frame_size
          : 0;
  out.samples.assign(total, 0.0);

  // Bands at the clamp floor carry no signal and are skipped outright.
  std::vector<double> buf(cfg.frame_size);
  for (int t = 0; t < frames.num_frames; ++t) {
    const double* frame = frames.row(t);
    const std::size_t start = static_cast<std::size_t>(t) * cfg.frame_hop;
    std::fill(buf.begin(), buf.end(), 0.0);
    bool any = false;
    for (int b = 0; b < cfg.bands; ++b) {
      if (frame[b] <= floor_log) continue;
      const double amp = std::exp(frame[b]);
      const double omega = 2.0 * M_PI * centers[b] / cfg.sample_rate;
      for (int i = 0; i < cfg.frame_size; ++i)
        buf[i] += amp * std::sin(omega * static_cast<double>(start + i));
      any = true;
    }
    if (!any) continue;
    for (int i = 0; i < cfg.frame_size; ++i)
      out.samples[start + i] += window[i] * buf[i];
  }

  double peak = 0.0;
  for (double x : out.samples) peak = std::max(peak, std::fabs(x));
  if (peak > 0.99) {
    const double g = 0.99 / peak;
    for (double& x : out.samples) x *= g;
  }
  return out;
}

// ---------------------------------------------------------------------------
// RVQ

namespace {

// Index of the nearest codeword, ties to the lowest index.
int nearest_code(const double* x, const std::vector<double>& book, int K, int dim) {
  int best = 0;
  double best_d = 0.0;
  for (int k = 0; k < K; ++k) {
    const double* c = book.data() + static_cast<std::size_t>(k) * dim;
    double d = 0.0;
    for (int i = 0; i < dim; ++i) {
      const double diff = x[i] - c[i];
      d += diff * diff;
    }
    if (k == 0 || d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

// Deterministic k-means. Rows [first_free, K) move; rows below stay fixed
// (stage >= 1 pins row 0 at zero). Dead movable rows re-seed to the vector
// farthest from its assigned codeword.
void kmeans(std::vector<double>& book, int K, int dim,
            const std::vector<double>& data, int n, int iters, int first_free,
            Rng& rng) {
  // k-means++ style seeding over the movable rows
  std::vector<double> d2(n, 0.0);
  for (int k = first_free; k < K; ++k) {
    int pick;
    if (k == first_free && first_free == 0) {
      pick = static_cast<int>(rng.next_below(static_cast<uint64_t>(n)));
    } else {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        const double* x = data.data() + static_cast<std::size_t>(i) * dim;
        double best = -1.0;
        for (int j = 0; j < k; ++j) {
          const double* c = book.data() + static_cast<std::size_t>(j) * dim;
          double d = 0.0;
          for (int t = 0; t < dim; ++t) {
            const double diff = x[t] - c[t];
            d += diff * diff;
          }
          if (best < 0.0 || d < best) best = d;
        }
        d2[i] = best;
        total += best;
      }
      if (total <= 0.0) {
        pick = static_cast<int>(rng.next_below(static_cast<uint64_t>(n)));
      } else {
        const double r = rng.next_double() * total;
        double acc = 0.0;
        pick = n - 1;
        for (int i = 0; i < n; ++i) {
          acc += d2[i];
          if (acc >= r) {
            pick = i;
            break;
          }
        }
      }
    }
    std::memcpy(book.data() + static_cast<std::size_t>(k) * dim,
                data.data() + static_cast<std::size_t>(pick) * dim,
                sizeof(double) * dim);
  }

  std::vector<int> assign(n, 0);
  std::vector<double> sums(static_cast<std::size_t>(K) * dim);
  std::vector<int> counts(K);
  std::vector<double> dist(n, 0.0);
  for (int it = 0; it < iters; ++it) {
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        const double* x = data.data() + i * dim;
        const int k = nearest_code(x, book, K, dim);
        assign[i] = k;
        const double* c = book.data() + static_cast<std::size_t>(k) * dim;
        double d = 0.0;
        for (int t = 0; t < dim; ++t) {
          const double diff = x[t] - c[t];
          d += diff * diff;
        }
        dist[i] = d;
      }
    });
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      const int k = assign[i];
      counts[k]++;
      const double* x = data.data() + static_cast<std::size_t>(i) * dim;
      double* s = sums.data() + static_cast<std::size_t>(k) * dim;
      for (int t = 0; t < dim; ++t) s[t] += x[t];
    }
    for (int k = first_free; k < K; ++k) {
      if (counts[k] > 0) {
        double* c = book.data() + static_cast<std::size_t>(k) * dim;
        const double* s = sums.data() + static_cast<std::size_t>(k) * dim;
        for (int t = 0; t < dim; ++t) c[t] = s[t] / counts[k];
      } else {
        // farthest vector from its codeword; ties to the lowest index
        int far = 0;
        for (int i = 1; i < n; ++i)
          if (dist[i] > dist[far]) far = i;
        std::memcpy(book.data() + static_cast<std::size_t>(k) * dim,
                    data.data() + static_cast<std::size_t>(far) * dim,
                    sizeof(double) * dim);
        dist[far] = 0.0;
      }
    }
  }
}

}  // namespace

CodebookSet fit_codebooks(const std::vector<FrameMatrix>& corpus,
                          const CodecConfig& cfg, uint64_t seed) {
  const int dim = cfg.bands;
  const int K = cfg.codebook_size;

  std::size_t total = 0;
  for (const auto& fm : corpus) {
    if (fm.dim != dim) throw_data("fit_codebooks: frame dimension mismatch");
    total += static_cast<std::size_t>(fm.num_frames);
  }
  if (total < static_cast<std::size_t>(K))
    throw_data("insufficient data: need at least K=" + std::to_string(K) +
               " training vectors, have " + std::to_string(total));

  // Subsample deterministically when the corpus is large.
  const std::size_t want = std::max<std::size_t>(K, cfg.kmeans_sample);
  std::vector<double> data;
  Rng pick_rng(derive_seed(seed, "codec.sample"));
  if (total <= want) {
    data.reserve(total * dim);
    for (const auto& fm : corpus)
      data.insert(data.end(), fm.v.begin(), fm.v.end());
  } else {
    const double keep = static_cast<double>(want) / static_cast<double>(total);
    data.reserve((want + 1024) * dim);
    for (const auto& fm : corpus)
      for (int t = 0; t < fm.num_frames; ++t)
        if (pick_rng.next_double() < keep)
          data.insert(data.end(), fm.row(t), fm.row(t) + dim);
    if (data.size() < static_cast<std::size_t>(K) * dim) {
      data.clear();
      for (const auto& fm : corpus) {
        data.insert(data.end(), fm.v.begin(), fm.v.end());
        if (data.size() >= want * dim) break;
      }
    }
  }
  const int n = static_cast<int>(data.size() / dim);

  CodebookSet set;
  set.cfg = cfg;
  std::vector<double> residual = data;
  for (int s = 0; s < kRvqStages; ++s) {
    auto& book = set.books[s];
    book.assign(static_cast<std::size_t>(K) * dim, 0.0);
    const int first_free = (s == 0) ? 0 : 1;  // stages >= 1 pin row 0 to zero
    Rng rng(derive_seed(seed, "codec.kmeans", static_cast<uint64_t>(s)));
    kmeans(book, K, dim, residual, n, cfg.kmeans_iters, first_free, rng);
    // advance residuals
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        double* x = residual.data() + i * dim;
        const int k = nearest_code(x, book, K, dim);
        const double* c = book.data() + static_cast<std::size_t>(k) * dim;
        for (int t = 0; t < dim; ++t) x[t] -= c[t];
      }
    });
  }
  return set;
}

QuantizedTokenGrid rvq_encode(const FrameMatrix& frames, const CodebookSet& books) {
  if (frames.dim != books.cfg.bands)
    throw_data("rvq_encode: frame dimension does not match codebooks");
  const int dim = frames.dim;
  const int K = books.cfg.codebook_size;
  QuantizedTokenGrid grid;
  grid.num_frames = frames.num_frames;
  grid.codebook_size = K;
  for (auto& row : grid.codes) row.assign(frames.num_frames, 0);

  parallel_for(static_cast<std::size_t>(frames.num_frames), [&](std::size_t lo, std::size_t hi) {
    std::vector<double> r(dim);
    for (std::size_t t = lo; t < hi; ++t) {
      std::memcpy(r.data(), frames.row(static_cast<int>(t)), sizeof(double) * dim);
      for (int s = 0; s < kRvqStages; ++s) {
        const int k = nearest_code(r.data(), books.books[s], K, dim);
        grid.codes[s][t] = k;
        const double* c = books.codeword(s, k);
        for (int i = 0; i < dim; ++i) r[i] -= c[i];
      }
    }
  });
  return grid;
}

FrameMatrix rvq_decode(const QuantizedTokenGrid& grid, const CodebookSet& books,
                       int stages) {
  if (stages < 1 || stages > kRvqStages)
    throw_data("rvq_decode: stages must be in 1..8");
  const int dim = books.cfg.bands;
  const int K = books.cfg.codebook_size;
  FrameMatrix out;
  out.num_frames = grid.num_frames;
  out.dim = dim;
  out.frame_hop = books.cfg.frame_hop;
  out.frame_size = books.cfg.frame_size;
  out.v.assign(static_cast<std::size_t>(grid.num_frames) * dim, 0.0);
  for (int s = 0; s < stages; ++s) {
    for (int t = 0; t < grid.num_frames; ++t) {
      const int k = grid.codes[s][t];
      if (k < 0 || k >= K)
        throw_data("code out of range at stage " + std::to_string(s + 1) +
                   ", frame " + std::to_string(t));
      const double* c = books.codeword(s, k);
      double* f = out.row(t);
      for (int i = 0; i < dim; ++i) f[i] += c[i];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

void write_codes(const std::string& path, const QuantizedTokenGrid& grid) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_data("cannot write codes file: " + path);
  f << "stages=" << kRvqStages << " L=" << grid.num_frames
    << " K=" << grid.codebook_size << "\n";
  for (int s = 0; s < kRvqStages; ++s) {
    for (int t = 0; t < grid.num_frames; ++t) {
      if (t) f << ' ';
      f << grid.codes[s][t];
    }
    f << "\n";
  }
  if (!f) throw_data("short write to codes file: " + path);
}

QuantizedTokenGrid read_codes(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw_data("cannot open codes file: " + path);
  std::string header;
  std::getline(f, header);
  int stages = 0, L = 0, K = 0;
  if (std::sscanf(header.c_str(), "stages=%d L=%d K=%d", &stages, &L, &K) != 3 ||
      stages != kRvqStages || L < 0 || K <= 0)
    throw_data("bad codes header in " + path + ": " + header);
  QuantizedTokenGrid grid;
  grid.num_frames = L;
  grid.codebook_size = K;
  for (int s = 0; s < kRvqStages; ++s) {
    grid.codes[s].resize(L);
    std::string line;
    if (!std::getline(f, line))
      throw_data("truncated codes file: " + path);
    std::istringstream is(line);
    for (int t = 0; t < L; ++t) {
      if (!(is >> grid.codes[s][t]) || grid.codes[s][t] < 0 || grid.codes[s][t] >= K)
        throw_data("bad code at stage " + std::to_string(s + 1) + " frame " +
                   std::to_string(t) + " in " + path);
    }
  }
  return grid;
}

namespace {

template <class T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& f, const std::string& path) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw_data("truncated codebook file: " + path);
  return v;
}

}  // namespace

void write_codebooks(const std::string& path, const CodebookSet& books) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw_data("cannot write codebook file: " + path);
  f.write("RVQ1", 4);
  put<uint32_t>(f, kRvqStages);
  put<uint32_t>(f, static_cast<uint32_t>(books.cfg.codebook_size));
  put<uint32_t>(f, static_cast<uint32_t>(books.cfg.bands));
  put<uint32_t>(f, static_cast<uint32_t>(books.cfg.sample_rate));
  put<uint32_t>(f, static_cast<uint32_t>(books.cfg.frame_size));
  put<uint32_t>(f, static_cast<uint32_t>(books.cfg.frame_hop));
  put<double>(f, books.cfg.fmin_hz);
  put<double>(f, books.cfg.fmax_hz);
  for (const auto& book : books.books)
    f.write(reinterpret_cast<const char*>(book.data()),
            static_cast<std::streamsize>(book.size() * sizeof(double)));
  if (!f) throw_data("short write to codebook file: " + path);
}

CodebookSet read_codebooks(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw_data("cannot open codebook file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "RVQ1", 4) != 0)
    throw_data("bad codebook magic in " + path);
  CodebookSet set;
  const auto stages = get<uint32_t>(f, path);
  if (stages != kRvqStages) throw_data("unexpected stage count in " + path);
  set.cfg.codebook_size = static_cast<int>(get<uint32_t>(f, path));
  set.cfg.bands = static_cast<int>(get<uint32_t>(f, path));
  set.cfg.sample_rate = static_cast<int>(get<uint32_t>(f, path));
  set.cfg.frame_size = static_cast<int>(get<uint32_t>(f, path));
  set.cfg.frame_hop = static_cast<int>(get<uint32_t>(f, path));
  set.cfg.fmin_hz = get<double>(f, path);
  set.cfg.fmax_hz = get<double>(f, path);
  if (set.cfg.codebook_size <= 0 || set.cfg.bands <= 0)
    throw_data("bad codebook dimensions in " + path);
  const std::size_t n =
      static_cast<std::size_t>(set.cfg.codebook_size) * set.cfg.bands;
  for (auto& book : set.books) {
    book.resize(n);
    f.read(reinterpret_cast<char*>(book.data()),
           static_cast<std::streamsize>(n * sizeof(double)));
    if (!f) throw_data("truncated codebook payload in " + path);
  }
  return set;
}

}  // namespace scve

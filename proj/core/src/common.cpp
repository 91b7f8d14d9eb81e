#include "scve/common.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

namespace scve {

void throw_usage(const std::string& msg) { throw Error(ErrorKind::usage, msg); }
void throw_data(const std::string& msg) { throw Error(ErrorKind::data, msg); }
void throw_numeric(const std::string& msg) { throw Error(ErrorKind::numeric, msg); }

UnsupportedCharacter::UnsupportedCharacter(std::size_t pos, uint32_t cp)
    : Error(ErrorKind::data,
            "unsupported character U+" + hash_hex(cp).substr(16 - 4) +
                " at position " + std::to_string(pos)),
      position(pos),
      codepoint(cp) {}

MalformedSequence::MalformedSequence(std::size_t pos)
    : Error(ErrorKind::data,
            "malformed token sequence at position " + std::to_string(pos)),
      position(pos) {}

ControlOutOfRange::ControlOutOfRange(int idx, double v)
    : Error(ErrorKind::data,
            "control vector component c_" + std::to_string(idx + 1) + " = " +
                std::to_string(v) + " outside [0.5, 2.5]"),
      index(idx),
      value(v) {}

uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("cannot open file for hashing: " + path);
  char buf[1 << 16];
  uint64_t h = kFnvOffset;
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

uint64_t Rng::next_below(uint64_t n) {
  if (n == 0) throw_data("Rng::next_below: n must be positive");
  const uint64_t threshold = -n % n;  // 2^64 mod n
  for (;;) {
    uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double Rng::normal(double mean, double stddev) {
  double u1 = next_double();
  double u2 = next_double();
  while (u1 <= 0.0) u1 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * M_PI * u2);
}

// ---------------------------------------------------------------------------
// UTF-8

std::vector<uint32_t> utf8_decode(std::string_view text) {
  std::vector<uint32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    uint32_t cp = 0;
    int extra = 0;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      extra = 1;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      extra = 2;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      extra = 3;
    } else {
      throw_data("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + extra >= text.size())
      throw_data("truncated UTF-8 sequence at offset " + std::to_string(i));
    for (int k = 1; k <= extra; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80)
        throw_data("invalid UTF-8 continuation at offset " +
                   std::to_string(i + k));
      cp = (cp << 6) | (b & 0x3F);
    }
    // reject overlong encodings and surrogates
    static const uint32_t min_for_len[4] = {0, 0x80, 0x800, 0x10000};
    if (extra > 0 && cp < min_for_len[extra])
      throw_data("overlong UTF-8 sequence at offset " + std::to_string(i));
    if (cp >= 0xD800 && cp <= 0xDFFF)
      throw_data("UTF-8 encoded surrogate at offset " + std::to_string(i));
    out.push_back(cp);
    i += 1 + extra;
  }
  return out;
}

void utf8_append(std::string& out, uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string utf8_encode(const std::vector<uint32_t>& codepoints) {
  std::string out;
  out.reserve(codepoints.size() * 3);
  for (uint32_t cp : codepoints) utf8_append(out, cp);
  return out;
}

// ---------------------------------------------------------------------------
// Thread pool

namespace {

thread_local bool g_in_parallel_region = false;

class Pool {
 public:
  explicit Pool(int threads) : target_(nullptr) {
    for (int i = 1; i < threads; ++i) {
      workers_.emplace_back([this, i] { worker(i); });
    }
    size_ = threads;
  }

  ~Pool() {
    {
      std::unique_lock<std::mutex> lk(mu_);
      stop_ = true;
      generation_++;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  int size() const { return size_; }

  void run(std::size_t n,
           const std::function<void(std::size_t, std::size_t)>& body) {
    const int nt = size_;
    {
      std::unique_lock<std::mutex> lk(mu_);
      target_ = &body;
      total_ = n;
      pending_ = nt - 1;
      generation_++;
    }
    cv_.notify_all();
    run_chunk(0, n, nt, body);
    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    target_ = nullptr;
  }

 private:
  static void run_chunk(int idx, std::size_t n, int nt,
                        const std::function<void(std::size_t, std::size_t)>& body) {
    const std::size_t chunk = (n + nt - 1) / nt;
    const std::size_t lo = std::min(n, chunk * idx);
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo < hi) {
      g_in_parallel_region = true;
      body(lo, hi);
      g_in_parallel_region = false;
    }
  }

  void worker(int idx) {
    uint64_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t, std::size_t)>* body = nullptr;
      std::size_t n = 0;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return generation_ != seen; });
        seen = generation_;
        if (stop_) return;
        body = target_;
        n = total_;
      }
      if (body) run_chunk(idx, n, size_, *body);
      {
        std::unique_lock<std::mutex> lk(mu_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(std::size_t, std::size_t)>* target_;
  std::size_t total_ = 0;
  int pending_ = 0;
  uint64_t generation_ = 0;
  bool stop_ = false;
  int size_ = 1;
};

int env_threads() {
  if (const char* v = std::getenv("SCVE_THREADS")) {
    const int n = std::atoi(v);
    if (n >= 1) return n;
  }
  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, std::min(4, hw));
}

Pool& pool() {
  static Pool p(env_threads());
  return p;
}

}  // namespace

int thread_count() { return pool().size(); }

void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  // nested regions run serially inside their worker
  if (g_in_parallel_region || pool().size() == 1 || n < 2) {
    body(0, n);
    return;
  }
  pool().run(n, body);
}

}  // namespace scve

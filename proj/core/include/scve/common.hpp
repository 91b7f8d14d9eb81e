#pragma once
// Shared plumbing: error taxonomy, FNV hashing, seeded RNG with documented
// sub-seed derivation, UTF-8 codec and the process-wide thread pool.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace scve {

// ---------------------------------------------------------------------------
// Errors. CLI exit codes: 0 success, 2 usage, 3 data, 4 numeric fault.

enum class ErrorKind { usage, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void throw_usage(const std::string& msg);
[[noreturn]] void throw_data(const std::string& msg);
[[noreturn]] void throw_numeric(const std::string& msg);

// Text outside the supported character set.
class UnsupportedCharacter : public Error {
 public:
  UnsupportedCharacter(std::size_t position, uint32_t codepoint);
  std::size_t position;
  uint32_t codepoint;
};

// Token sequence that violates the jamo positional grammar.
class MalformedSequence : public Error {
 public:
  explicit MalformedSequence(std::size_t position);
  std::size_t position;
};

// Style control component outside [0.5, 2.5].
class ControlOutOfRange : public Error {
 public:
  ControlOutOfRange(int index, double value);
  int index;
  double value;
};

// ---------------------------------------------------------------------------
// FNV-1a 64-bit. Used as the config fingerprint and artifact integrity hash.

constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr uint64_t kFnvPrime = 0x100000001b3ull;

inline uint64_t fnv1a64(const void* data, std::size_t n,
                        uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = kFnvOffset) {
  return fnv1a64(s.data(), s.size(), h);
}

uint64_t hash_file(const std::string& path);  // throws data error if unreadable
std::string hash_hex(uint64_t h);

// ---------------------------------------------------------------------------
// RNG: xoshiro256++ seeded via splitmix64. Self-contained so that streams are
// identical across platforms and standard-library versions.

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1): 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Rejection sampling, unbiased.
  uint64_t next_below(uint64_t n);

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Box-Muller without a cached spare: every call consumes two doubles, so a
  // call sequence is reproducible regardless of interleaving.
  double normal(double mean = 0.0, double stddev = 1.0);

 private:
  static uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  uint64_t s_[4];
};

// Sub-seed derivation rule: one master seed deterministically labels every
// random stream. derive_seed(master, label, index) =
// splitmix64 chain over (master ^ fnv1a64(label), index).
inline uint64_t derive_seed(uint64_t master, std::string_view label,
                            uint64_t index = 0) {
  uint64_t state = master ^ fnv1a64(label);
  uint64_t a = splitmix64(state);
  state ^= index * 0x9e3779b97f4a7c15ull;
  uint64_t b = splitmix64(state);
  return a ^ (b + 0x9e3779b97f4a7c15ull);
}

// ---------------------------------------------------------------------------
// UTF-8

// Decodes the whole string; throws a data error at the first malformed byte.
std::vector<uint32_t> utf8_decode(std::string_view text);
void utf8_append(std::string& out, uint32_t codepoint);
std::string utf8_encode(const std::vector<uint32_t>& codepoints);

// ---------------------------------------------------------------------------
// Thread pool. Sized once from SCVE_THREADS (default: min(4, hardware)).
// parallel_for partitions [0, n) into contiguous chunks; every index is
// processed by exactly one thread, so disjoint writes are deterministic for
// any thread count.

int thread_count();
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace scve

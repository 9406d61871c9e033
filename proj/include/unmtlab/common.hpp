#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace unmtlab {

using TokenId = int32_t;
using Sentence = std::vector<TokenId>;        // vocab-encoded sentence
using RawSentence = std::vector<std::string>; // surface-token sentence

enum class LangId : int { L1 = 0, L2 = 1 };

inline LangId other_lang(LangId l) { return l == LangId::L1 ? LangId::L2 : LangId::L1; }

// Error taxonomy. Messages carry the offending field/token/index so callers
// (and tests) can pinpoint the cause.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic RNG used everywhere. Wraps a fixed 64-bit engine and
// hand-rolled draws so streams never depend on the standard library's
// distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix(seed ^ 0x9e3779b97f4a7c15ULL)) {
    // warm up so near-zero seeds decorrelate
    next_u64();
    next_u64();
  }

  uint64_t next_u64() {
    // xorshift64* variant seeded via splitmix64
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545f4914f6cdd1dULL;
  }

  // uniform integer in [lo, hi] inclusive
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) throw ValidationError("uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    // rejection sampling keeps the draw exactly uniform
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return lo + static_cast<int64_t>(v % span);
  }

  size_t index(size_t n) { return static_cast<size_t>(uniform_int(0, static_cast<int64_t>(n) - 1)); }

  // uniform real in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent child seed for a named stream.
  static uint64_t derive(uint64_t seed, uint64_t stream) {
    return splitmix(seed * 0x9e3779b97f4a7c15ULL + splitmix(stream + 0x632be59bd9b4e019ULL));
  }
  static uint64_t derive(uint64_t seed, const std::string& stream) {
    return derive(seed, fnv1a(stream));
  }

  static uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }
  uint64_t state_;
};

// round-half-up with a floor of one element; used for epsilon subsampling
inline size_t scaled_count(size_t n, double fraction) {
  size_t m = static_cast<size_t>(static_cast<double>(n) * fraction + 0.5);
  return m < 1 ? 1 : m;
}

std::string join_tokens(const RawSentence& s);
RawSentence split_tokens(const std::string& line);

}  // namespace unmtlab

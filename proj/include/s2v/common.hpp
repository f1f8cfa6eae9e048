#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace s2v {

// Error taxonomy; the CLI maps these onto exit codes (io/format/data -> 2,
// numeric -> 3).
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class FormatError : public std::runtime_error {
public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic RNG. Wraps a fixed xoshiro-style generator with hand-rolled
// distributions so streams are identical across platforms and library
// versions (std::normal_distribution is implementation-defined).
class Rng {
public:
  explicit Rng(uint64_t seed) {
    // splitmix64 expansion of the seed into the state
    uint64_t x = seed;
    for (auto& s : state_) {
      x += 0x9E3779B97F4A7C15ull;
      uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
      s = z ^ (z >> 31);
    }
  }

  uint64_t next_u64() {
    // xoshiro256**
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  double normal() {
    // Box-Muller; one value per draw keeps the stream position predictable
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // state serialization for resumable training
  std::string save_state() const {
    std::string s;
    for (uint64_t v : state_) s += std::to_string(v) + " ";
    return s;
  }

  void load_state(const std::string& s) {
    size_t pos = 0;
    for (auto& v : state_) {
      size_t used = 0;
      v = std::stoull(s.substr(pos), &used);
      pos += used + 1;
    }
  }

private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t state_[4] = {};
};

// Derives an independent stream for a named unit of work (e.g. one track),
// so per-track sampling is stable under reordering and parallelism.
inline uint64_t derive_seed(uint64_t seed, const std::string& tag) {
  uint64_t h = 0xCBF29CE484222325ull ^ seed;
  for (char c : tag) {
    h ^= uint64_t(uint8_t(c));
    h *= 0x100000001B3ull;
  }
  h ^= seed * 0x9E3779B97F4A7C15ull;
  return h;
}

// FNV-1a over raw bytes; used for reproducibility checks and logging.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ull) {
  const auto* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace s2v

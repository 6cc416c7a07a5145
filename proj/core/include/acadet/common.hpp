#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace acadet {

// Unusable run configuration: bad kernel sizes, unknown override keys,
// checkpoint/data dimension mismatches. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable or malformed data files. CLI maps this to exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

#define ACADET_CHECK(cond, msg)                                 \
  do {                                                          \
    if (!(cond)) throw std::invalid_argument(std::string(msg)); \
  } while (0)

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// mt19937_64 with hand-rolled distribution mappings. std::*_distribution is
// implementation-defined, and runs must be bit-reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : eng_(splitmix64(seed)),
        seed_mix_(splitmix64(seed ^ 0xa5a5a5a5a5a5a5a5ULL)) {}

  std::uint64_t next() { return eng_(); }

  // Uniform in [0, 1), 53-bit mantissa fill.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], rejection sampled to avoid modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    ACADET_CHECK(lo <= hi, "uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(eng_());  // full 64-bit range
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t v = eng_();
    while (v >= limit) v = eng_();
    return lo + static_cast<std::int64_t>(v % span);
  }

  // Box-Muller without caching the second deviate, so every call consumes a
  // fixed number of engine draws.
  double normal() {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    return r * std::cos(6.283185307179586476925286766559 * v);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent substream; `stream` tags the purpose (init, data, shuffle...).
  Rng fork(std::uint64_t stream) const {
    return Rng(seed_mix_ ^ splitmix64(stream + 0x51ed2701));
  }

 private:
  std::mt19937_64 eng_;
  std::uint64_t seed_mix_ = 0;
};

}  // namespace acadet

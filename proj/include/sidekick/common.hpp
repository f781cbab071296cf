#pragma once

#include <cstdint>
#include <cstring>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace sidekick {

// Error taxonomy shared by the library and the CLI. The `code` maps onto
// process exit codes: 2 usage, 3 missing stage dependency, 4 data error.
enum class ErrorCode { usage = 2, dependency = 3, data = 4 };

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

class UsageError : public Error {
public:
  explicit UsageError(const std::string& what) : Error(ErrorCode::usage, what) {}
};

class DependencyError : public Error {
public:
  explicit DependencyError(const std::string& what)
      : Error(ErrorCode::dependency, what) {}
};

class DataError : public Error {
public:
  explicit DataError(const std::string& what) : Error(ErrorCode::data, what) {}
};

// Specific data-error kinds that callers/tests distinguish.
class NotFoundError : public DataError {
public:
  using DataError::DataError;
};
class ParseError : public DataError {
public:
  using DataError::DataError;
};
class ShapeMismatchError : public DataError {
public:
  using DataError::DataError;
};
class TruncatedPayloadError : public DataError {
public:
  using DataError::DataError;
};
class NonFiniteError : public DataError {
public:
  using DataError::DataError;
};
class ChecksumError : public DataError {
public:
  using DataError::DataError;
};

// ---------------------------------------------------------------------------
// Deterministic RNG: xoshiro256++ seeded through splitmix64. Hand-rolled so
// streams are reproducible independent of the standard library in use.
// Named streams keep action sampling, environment randomness etc. decoupled.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) { reseed(seed); }

  // Derives an independent named stream from a base seed.
  Rng(std::uint64_t seed, const std::string& stream)
      : Rng(seed ^ fnv1a64(stream)) {}

  void reseed(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return next_u64() % n;  // modulo bias irrelevant at our n
  }

  // Standard normal via Box-Muller (both draws consumed every call).
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Samples an index from a discrete distribution (probabilities sum to 1).
  template <typename Real>
  std::size_t sample_discrete(const std::vector<Real>& probs) {
    double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += double(probs[i]);
      if (u < acc) return i;
    }
    return probs.size() - 1;
  }

private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

}  // namespace sidekick

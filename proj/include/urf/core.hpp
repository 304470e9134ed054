#pragma once

// Shared vocabulary types, error hierarchy and the seeded random source used
// across the library.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace urf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Invalid arguments, bad configuration, dimension mismatches.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Divergence, rank deficiency, failed factorizations, postcondition breaks.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem and schema problems.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

inline void require_dim(Eigen::Index actual, Eigen::Index expected,
                        const char* what) {
  if (actual != expected) {
    throw ValidationError(concat(what, ": dimension mismatch (got ", actual,
                                 ", expected ", expected, ")"));
  }
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

}  // namespace detail

// SplitMix64 finalizer. Used to derive independent sub-seeds from one
// experiment seed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Seeded generator with a fixed algorithm chain:
//   engine  : std::mt19937_64 (bit-exact across conforming standard libraries)
//   uniform : top 53 bits of one engine draw, mapped to [0, 1)
//   normal  : basic Box-Muller on two uniforms, second variate cached
// std::normal_distribution is avoided because its algorithm is
// implementation-defined. The normal sampler goes through std::log, std::sqrt
// and std::cos/sin, so results are bit-identical on one platform/libm and
// agree to rounding elsewhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  Vector normal_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace urf

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cicrl {

/// Distribution over the three patches of a context.
using Dist3 = std::array<double, 3>;

/// All randomness in the library flows through this engine type so that
/// seeded runs reproduce bit-for-bit on a given standard library.
using Rng = std::mt19937_64;

inline constexpr Dist3 kUniform3{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

/// Normalizes non-negative weights; all-zero (or non-finite) mass falls back to uniform.
inline Dist3 normalize(const Dist3& w) {
  const double s = w[0] + w[1] + w[2];
  if (!(s > 0.0) || !std::isfinite(s)) return kUniform3;
  return {w[0] / s, w[1] / s, w[2] / s};
}

/// exp-normalize of log weights (log-sum-exp); -inf entries map to zero.
inline Dist3 softmax_log(const Dist3& logw) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logw) m = std::max(m, v);
  if (!std::isfinite(m)) return kUniform3;
  Dist3 out{};
  for (int i = 0; i < 3; ++i) out[i] = std::exp(logw[i] - m);
  return normalize(out);
}

inline int argmax3(const Dist3& p) {
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

inline bool is_distribution(const Dist3& p, double tol = 1e-9) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= tol;
}

/// FNV-1a, used for config hashes and per-episode seed derivation.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Derives an independent stream seed from a base seed and an index (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace cicrl

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>

namespace tgnn {

/// Raised on malformed configuration or file input; maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on numerical failures (non-convergence, non-finite values);
/// maps to CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SplitMix64 mixing step. Used both as a PRNG stream and as the seed
/// splitting scheme: derive_seed(master, tag) gives an independent stream
/// per tag, so one master seed reproduces every random choice in a run.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
  std::uint64_t s = master ^ (0xA0761D6478BD642FULL * (tag + 1));
  return splitmix64(s);
}

/// Seeded generator used everywhere randomness is needed. mt19937_64 plus
/// std::normal_distribution / std::uniform_real_distribution; identical
/// seeds give identical streams on a given build.
inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

/// FNV-1a over raw bytes; fingerprints serialized artifacts.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xCBF29CE484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t fnv1a_file(const std::filesystem::path& path);

/// Doubles are serialized with 17 significant digits, enough for a
/// bit-exact strtod round trip of any IEEE-754 binary64 value.
std::string format_double(double v);

std::string to_hex(std::uint64_t v);
std::uint64_t from_hex(const std::string& s);

}  // namespace tgnn

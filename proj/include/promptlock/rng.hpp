#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "promptlock/errors.hpp"

namespace promptlock {

// All randomness flows through one mt19937_64 owned by the caller. The
// bounded/real helpers below are fixed algorithms rather than the standard
// distributions, whose output is implementation-defined; trace files and
// checkpoints must replay bit-exactly.

/// Uniform index in [0, n) via rejection sampling on the top bits.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidConfig, "uniform_index over empty range");
  const std::uint64_t span = n;
  const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % span;
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return static_cast<std::size_t>(draw % span);
}

/// Uniform double in [0, 1) with 53 bits of precision.
inline double uniform_real(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

/// Serializes the full engine state as whitespace-separated decimals.
inline std::string save_rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline std::mt19937_64 load_rng_state(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream is(state);
  is >> rng;
  if (is.fail()) throw Error(ErrorCode::CorruptCheckpoint, "unreadable RNG state");
  return rng;
}

}  // namespace promptlock

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "promptlock/config.hpp"
#include "promptlock/core.hpp"
#include "promptlock/errors.hpp"
#include "promptlock/rng.hpp"
#include "promptlock/unicode.hpp"

namespace promptlock {

/// Unit-cost edit distance over Unicode scalar values, two-row DP.
inline std::size_t levenshtein(std::string_view a_utf8, std::string_view b_utf8) {
  const std::u32string a = decode_utf8(a_utf8);
  const std::u32string b = decode_utf8(b_utf8);
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();

  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::size_t corner = row[0];
    row[0] = i + 1;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const std::size_t up = row[j + 1];
      const std::size_t sub = corner + (a[i] == b[j] ? 0 : 1);
      row[j + 1] = std::min({up + 1, row[j] + 1, sub});
      corner = up;
    }
  }
  return row[b.size()];
}

/// Shannon entropy of the character-frequency distribution, in nats.
inline double char_entropy(std::string_view s_utf8) {
  if (s_utf8.empty()) throw Error(ErrorCode::EmptyText, "entropy of empty text");
  const std::u32string s = decode_utf8(s_utf8);
  std::map<char32_t, std::size_t> counts;
  for (char32_t c : s) ++counts[c];
  const double n = static_cast<double>(s.size());
  double h = 0.0;
  for (const auto& [c, count] : counts) {
    const double v = static_cast<double>(count) / n;
    h -= v * std::log(v);
  }
  return h;
}

/// Edits per step at a given epoch: linear decay clamped at the floor.
inline int noise_size_at(int epoch, const NoiseSchedule& schedule) {
  const std::int64_t size = static_cast<std::int64_t>(schedule.initial_size) -
                            static_cast<std::int64_t>(epoch) * schedule.decay_per_epoch;
  return static_cast<int>(std::max<std::int64_t>(schedule.minimum_size, size));
}

/// Applies exactly k independent single-character edits, each a
/// replace/insert/delete chosen per `mix` at a uniformly random position with
/// noise characters drawn uniformly from `alphabet`. Draw order per edit is
/// fixed (type, position, character) so traces replay bit-exactly.
inline std::string inject_noise(std::string_view prompt_utf8, int k, const NoiseAlphabet& alphabet,
                                const EditMix& mix, std::mt19937_64& rng) {
  if (prompt_utf8.empty()) throw Error(ErrorCode::EmptyText, "cannot inject noise into empty prompt");
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "noise size must be >= 1");
  if (alphabet.characters.empty()) throw Error(ErrorCode::EmptyAlphabet, "noise alphabet is empty");
  mix.validate();

  std::u32string text = decode_utf8(prompt_utf8);
  for (int i = 0; i < k; ++i) {
    const double u = uniform_real(rng);
    enum { kReplace, kInsert, kDelete } op;
    if (u < mix.p_replace) {
      op = kReplace;
    } else if (u < mix.p_replace + mix.p_insert) {
      op = kInsert;
    } else {
      op = kDelete;
    }
    // A fully deleted string leaves nothing to edit in place; fall back to
    // insertion so the edit count stays exact.
    if (text.empty() && op != kInsert) op = kInsert;

    switch (op) {
      case kReplace: {
        const std::size_t pos = uniform_index(rng, text.size());
        text[pos] = alphabet.characters[uniform_index(rng, alphabet.characters.size())];
        break;
      }
      case kInsert: {
        const std::size_t pos = uniform_index(rng, text.size() + 1);
        const char32_t c = alphabet.characters[uniform_index(rng, alphabet.characters.size())];
        text.insert(text.begin() + static_cast<std::ptrdiff_t>(pos), c);
        break;
      }
      case kDelete: {
        const std::size_t pos = uniform_index(rng, text.size());
        text.erase(text.begin() + static_cast<std::ptrdiff_t>(pos));
        break;
      }
    }
  }
  return encode_utf8(text);
}

}  // namespace promptlock

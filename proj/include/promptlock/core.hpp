#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptlock/digest.hpp"
#include "promptlock/errors.hpp"
#include "promptlock/unicode.hpp"

namespace promptlock {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Prompt artifacts and lineage
// ---------------------------------------------------------------------------

enum class PromptStage { original, initialized, obfuscated, recovered, deobfuscated, induced };

inline const char* to_string(PromptStage s) {
  switch (s) {
    case PromptStage::original: return "original";
    case PromptStage::initialized: return "initialized";
    case PromptStage::obfuscated: return "obfuscated";
    case PromptStage::recovered: return "recovered";
    case PromptStage::deobfuscated: return "deobfuscated";
    case PromptStage::induced: return "induced";
  }
  return "unknown";
}

inline PromptStage stage_from_string(const std::string& s) {
  if (s == "original") return PromptStage::original;
  if (s == "initialized") return PromptStage::initialized;
  if (s == "obfuscated") return PromptStage::obfuscated;
  if (s == "recovered") return PromptStage::recovered;
  if (s == "deobfuscated") return PromptStage::deobfuscated;
  if (s == "induced") return PromptStage::induced;
  throw Error(ErrorCode::InvalidArtifact, "unknown prompt stage '" + s + "'");
}

/// A prompt text plus lineage. Immutable once built; derive new stages via
/// the factory functions so transitions stay legal.
struct PromptArtifact {
  std::string text;
  PromptStage stage = PromptStage::original;
  std::optional<std::string> target_backend;
  std::optional<std::string> parent_digest;

  std::string digest() const { return sha256_hex(text); }
};

inline PromptArtifact make_original(std::string text) {
  if (text.empty()) throw Error(ErrorCode::InvalidArtifact, "prompt text is empty");
  return PromptArtifact{std::move(text), PromptStage::original, std::nullopt, std::nullopt};
}

/// Synthesized from scratch by the induction attack; records no parent.
inline PromptArtifact make_induced(std::string text, std::string backend_id) {
  if (text.empty()) throw Error(ErrorCode::InvalidArtifact, "prompt text is empty");
  return PromptArtifact{std::move(text), PromptStage::induced, std::move(backend_id),
                        std::nullopt};
}

/// Legal derivations: original -> initialized -> obfuscated;
/// recovered and deobfuscated derive only from an obfuscated parent.
inline PromptArtifact derive_artifact(const PromptArtifact& parent, PromptStage stage,
                                      std::string text,
                                      std::optional<std::string> target_backend) {
  const bool ok = (parent.stage == PromptStage::original && stage == PromptStage::initialized) ||
                  (parent.stage == PromptStage::initialized && stage == PromptStage::obfuscated) ||
                  (parent.stage == PromptStage::obfuscated &&
                   (stage == PromptStage::recovered || stage == PromptStage::deobfuscated));
  if (!ok) {
    throw Error(ErrorCode::InvalidArtifact, std::string("illegal stage transition ") +
                                                to_string(parent.stage) + " -> " + to_string(stage));
  }
  if (text.empty()) throw Error(ErrorCode::EmptyResponse, "derived prompt text is empty");
  return PromptArtifact{std::move(text), stage, std::move(target_backend), parent.digest()};
}

inline void to_json(json& j, const PromptArtifact& a) {
  j = json{{"text", a.text},
           {"stage", to_string(a.stage)},
           {"target_backend", a.target_backend ? json(*a.target_backend) : json()},
           {"parent_digest", a.parent_digest ? json(*a.parent_digest) : json()},
           {"digest", a.digest()}};
}

inline void from_json(const json& j, PromptArtifact& a) {
  a.text = j.at("text").get<std::string>();
  a.stage = stage_from_string(j.at("stage").get<std::string>());
  a.target_backend = j.contains("target_backend") && !j.at("target_backend").is_null()
                         ? std::optional<std::string>(j.at("target_backend").get<std::string>())
                         : std::nullopt;
  a.parent_digest = j.contains("parent_digest") && !j.at("parent_digest").is_null()
                        ? std::optional<std::string>(j.at("parent_digest").get<std::string>())
                        : std::nullopt;
  if (a.text.empty()) throw Error(ErrorCode::InvalidArtifact, "prompt text is empty");
}

// ---------------------------------------------------------------------------
// Objective weights
// ---------------------------------------------------------------------------

struct ObjectiveWeights {
  double lambda = 0.1;  ///< weight of the distance term
  double gamma = 0.1;   ///< weight of the non-language (entropy) term
  bool use_dist_term = true;

  static ObjectiveWeights obfuscation_defaults() { return {0.1, 0.1, true}; }
  /// Attacker re-optimization: distance term dropped, entropy weight flipped.
  static ObjectiveWeights deobfuscation_defaults() { return {0.0, -0.1, false}; }

  void validate() const {
    if (!std::isfinite(lambda) || !std::isfinite(gamma)) {
      throw Error(ErrorCode::InvalidConfig, "objective weights must be finite");
    }
  }
};

// ---------------------------------------------------------------------------
// Noise schedule and alphabet
// ---------------------------------------------------------------------------

/// Linear annealing of the per-step character-edit count.
struct NoiseSchedule {
  int initial_size = 0;      ///< edits per step at epoch 0 (resolved at run start)
  int decay_per_epoch = 8;   ///< edits removed after each epoch
  int minimum_size = 4;      ///< floor so optimization never stalls entirely

  void validate() const {
    if (initial_size <= 0) throw Error(ErrorCode::InvalidConfig, "initial noise size must be positive");
    if (minimum_size <= 0) throw Error(ErrorCode::InvalidConfig, "minimum noise size must be positive");
    if (decay_per_epoch < 0) throw Error(ErrorCode::InvalidConfig, "noise decay must be non-negative");
    if (minimum_size > initial_size) {
      throw Error(ErrorCode::InvalidConfig, "minimum noise size exceeds initial size");
    }
  }
};

enum class AlphabetMode { printable_ascii, full_ascii, custom };

inline const char* to_string(AlphabetMode m) {
  switch (m) {
    case AlphabetMode::printable_ascii: return "printable_ascii";
    case AlphabetMode::full_ascii: return "full_ascii";
    case AlphabetMode::custom: return "custom";
  }
  return "unknown";
}

inline AlphabetMode alphabet_mode_from_string(const std::string& s) {
  if (s == "printable_ascii") return AlphabetMode::printable_ascii;
  if (s == "full_ascii") return AlphabetMode::full_ascii;
  if (s == "custom") return AlphabetMode::custom;
  throw Error(ErrorCode::InvalidConfig, "unknown alphabet mode '" + s + "'");
}

/// Ordered set of candidate noise characters (Unicode scalar values).
struct NoiseAlphabet {
  AlphabetMode mode = AlphabetMode::printable_ascii;
  std::u32string characters;

  static NoiseAlphabet printable_ascii() {
    NoiseAlphabet a;
    a.mode = AlphabetMode::printable_ascii;
    for (char32_t c = 32; c <= 126; ++c) a.characters.push_back(c);
    return a;
  }

  static NoiseAlphabet full_ascii() {
    NoiseAlphabet a;
    a.mode = AlphabetMode::full_ascii;
    for (char32_t c = 0; c <= 127; ++c) a.characters.push_back(c);
    return a;
  }

  static NoiseAlphabet custom(const std::string& utf8_characters) {
    NoiseAlphabet a;
    a.mode = AlphabetMode::custom;
    a.characters = decode_utf8(utf8_characters);
    a.validate();
    return a;
  }

  void validate() const {
    if (characters.empty()) throw Error(ErrorCode::EmptyAlphabet, "noise alphabet is empty");
    for (std::size_t i = 0; i < characters.size(); ++i) {
      const char32_t c = characters[i];
      if ((c >= 0xd800 && c <= 0xdfff) || c > 0x10ffff) {
        throw Error(ErrorCode::InvalidConfig, "alphabet character is not a Unicode scalar value");
      }
      for (std::size_t j = i + 1; j < characters.size(); ++j) {
        if (characters[j] == c) {
          throw Error(ErrorCode::InvalidConfig, "duplicate character in noise alphabet");
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Task examples and top-k records
// ---------------------------------------------------------------------------

/// One supervised example: a query plus a reference label token sequence
/// and/or a reference answer text. Label tokens arrive pre-tokenized; the
/// toolkit never tokenizes text itself.
struct TaskExample {
  std::string query;
  std::vector<std::string> label_tokens;
  std::string reference_text;
  std::optional<std::vector<std::string>> choice_set;

  void validate() const {
    if (label_tokens.empty() && reference_text.empty()) {
      throw Error(ErrorCode::MissingReference,
                  "example needs label_tokens or reference_text");
    }
    if (choice_set) {
      bool found = false;
      for (const auto& c : *choice_set) found = found || c == reference_text;
      if (!found) {
        throw Error(ErrorCode::MissingChoices, "reference_text is not a member of choices");
      }
    }
  }
};

inline void to_json(json& j, const TaskExample& e) {
  j = json{{"query", e.query},
           {"label_tokens", e.label_tokens},
           {"reference_text", e.reference_text}};
  if (e.choice_set) j["choices"] = *e.choice_set;
}

inline void from_json(const json& j, TaskExample& e) {
  e.query = j.at("query").get<std::string>();
  e.label_tokens = j.value("label_tokens", std::vector<std::string>{});
  e.reference_text = j.value("reference_text", std::string{});
  if (j.contains("choices") && !j.at("choices").is_null()) {
    e.choice_set = j.at("choices").get<std::vector<std::string>>();
  } else {
    e.choice_set = std::nullopt;
  }
  e.validate();
}

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

/// Per output position, the up-to-k (token, logprob) pairs a backend returned.
struct TopKRecord {
  std::size_t position = 0;
  std::vector<TokenLogprob> entries;

  void validate() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (!std::isfinite(e.logprob) || e.logprob > 0.0) {
        throw Error(ErrorCode::InvalidConfig, "top-k logprob must be finite and <= 0");
      }
      if (i > 0 && entries[i - 1].logprob < e.logprob) {
        throw Error(ErrorCode::InvalidConfig, "top-k entries must be sorted by descending logprob");
      }
      for (std::size_t j = i + 1; j < entries.size(); ++j) {
        if (entries[j].token == e.token) {
          throw Error(ErrorCode::InvalidConfig, "duplicate token in top-k entries");
        }
      }
    }
  }

  /// Logprob of `token` if present at this position.
  std::optional<double> find(const std::string& token) const {
    for (const auto& e : entries) {
      if (e.token == token) return e.logprob;
    }
    return std::nullopt;
  }
};

}  // namespace promptlock

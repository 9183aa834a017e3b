#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "promptlock/core.hpp"
#include "promptlock/digest.hpp"
#include "promptlock/errors.hpp"

namespace promptlock {

enum class InitMode { dsl, passthrough };

inline const char* to_string(InitMode m) {
  return m == InitMode::dsl ? "dsl" : "passthrough";
}

inline InitMode init_mode_from_string(const std::string& s) {
  if (s == "dsl") return InitMode::dsl;
  if (s == "passthrough") return InitMode::passthrough;
  throw Error(ErrorCode::InvalidConfig, "unknown init mode '" + s + "'");
}

enum class TokenMetric { exact_match, token_f1, choice_accuracy };

inline const char* to_string(TokenMetric m) {
  switch (m) {
    case TokenMetric::exact_match: return "exact_match";
    case TokenMetric::token_f1: return "token_f1";
    case TokenMetric::choice_accuracy: return "choice_accuracy";
  }
  return "unknown";
}

inline TokenMetric token_metric_from_string(const std::string& s) {
  if (s == "exact_match") return TokenMetric::exact_match;
  if (s == "token_f1") return TokenMetric::token_f1;
  if (s == "choice_accuracy") return TokenMetric::choice_accuracy;
  throw Error(ErrorCode::InvalidConfig, "unknown metric '" + s + "'");
}

enum class DistNormalize { none, by_original_length };

inline const char* to_string(DistNormalize d) {
  return d == DistNormalize::none ? "none" : "by_original_length";
}

inline DistNormalize dist_normalize_from_string(const std::string& s) {
  if (s == "none") return DistNormalize::none;
  if (s == "by_original_length") return DistNormalize::by_original_length;
  throw Error(ErrorCode::InvalidConfig, "unknown dist_normalize '" + s + "'");
}

/// Character-edit type probabilities for noise injection.
struct EditMix {
  double p_replace = 0.45;
  double p_insert = 0.45;
  double p_delete = 0.10;

  void validate() const {
    auto in01 = [](double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; };
    if (!in01(p_replace) || !in01(p_insert) || !in01(p_delete)) {
      throw Error(ErrorCode::InvalidConfig, "edit mix probabilities must lie in [0,1]");
    }
    if (std::abs(p_replace + p_insert + p_delete - 1.0) > 1e-9) {
      throw Error(ErrorCode::InvalidConfig, "edit mix probabilities must sum to 1");
    }
  }
};

/// Every optimizer hyperparameter. Fields start unset where a default exists;
/// validate_run_config() fills them and rejects inconsistent settings.
struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> candidates_per_epoch;
  std::optional<int> batch_size;
  std::optional<double> lambda;
  std::optional<double> gamma;
  std::optional<bool> use_dist_term;
  std::optional<int> top_k;
  std::optional<double> default_logprob;
  std::optional<int> initial_noise_size;  ///< unset: floor(len(initialized)/4)
  std::optional<int> noise_decay_per_epoch;
  std::optional<int> minimum_noise_size;
  std::optional<AlphabetMode> alphabet_mode;
  std::optional<std::string> alphabet_characters;  ///< custom mode only, UTF-8
  std::optional<EditMix> edit_mix;
  std::optional<InitMode> init_mode;
  std::optional<TokenMetric> token_metric;
  std::optional<DistNormalize> dist_normalize;
};

enum class RunMode { obfuscation, token_only, deobfuscation };

/// A RunConfig with every field pinned. This is what config.snapshot records.
struct ValidatedConfig {
  std::uint64_t seed = 0;
  int epochs = 50;
  int candidates_per_epoch = 20;
  int batch_size = 1;
  ObjectiveWeights weights;
  int top_k = 10;
  double default_logprob = -100.0;
  std::optional<int> initial_noise_size;
  int noise_decay_per_epoch = 8;
  int minimum_noise_size = 4;
  NoiseAlphabet alphabet = NoiseAlphabet::printable_ascii();
  EditMix edit_mix;
  InitMode init_mode = InitMode::dsl;
  TokenMetric token_metric = TokenMetric::exact_match;
  DistNormalize dist_normalize = DistNormalize::none;

  /// Noise schedule with initial size resolved against the initialized prompt.
  NoiseSchedule schedule_for(std::size_t initialized_length) const {
    NoiseSchedule s;
    s.initial_size = initial_noise_size
                         ? *initial_noise_size
                         : std::max(minimum_noise_size, static_cast<int>(initialized_length / 4));
    s.decay_per_epoch = noise_decay_per_epoch;
    s.minimum_size = minimum_noise_size;
    s.validate();
    return s;
  }

  json to_json() const {
    json j;
    j["seed"] = seed;
    j["epochs"] = epochs;
    j["candidates_per_epoch"] = candidates_per_epoch;
    j["batch_size"] = batch_size;
    j["lambda"] = weights.lambda;
    j["gamma"] = weights.gamma;
    j["use_dist_term"] = weights.use_dist_term;
    j["top_k"] = top_k;
    j["default_logprob"] = default_logprob;
    j["initial_noise_size"] = initial_noise_size ? json(*initial_noise_size) : json();
    j["noise_decay_per_epoch"] = noise_decay_per_epoch;
    j["minimum_noise_size"] = minimum_noise_size;
    j["alphabet_mode"] = to_string(alphabet.mode);
    j["alphabet_characters"] =
        alphabet.mode == AlphabetMode::custom ? json(encode_utf8(alphabet.characters)) : json();
    j["edit_mix"] = json{{"p_replace", edit_mix.p_replace},
                         {"p_insert", edit_mix.p_insert},
                         {"p_delete", edit_mix.p_delete}};
    j["init_mode"] = to_string(init_mode);
    j["token_metric"] = to_string(token_metric);
    j["dist_normalize"] = to_string(dist_normalize);
    return j;
  }

  /// Canonical form: sorted keys, two-space indent, trailing newline.
  std::string serialize() const { return to_json().dump(2) + "\n"; }

  std::string digest() const { return sha256_hex(serialize()); }
};

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  auto opt = [&j](const char* key) { return j.contains(key) && !j.at(key).is_null(); };
  if (opt("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (opt("epochs")) c.epochs = j.at("epochs").get<int>();
  if (opt("candidates_per_epoch")) c.candidates_per_epoch = j.at("candidates_per_epoch").get<int>();
  if (opt("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (opt("lambda")) c.lambda = j.at("lambda").get<double>();
  if (opt("gamma")) c.gamma = j.at("gamma").get<double>();
  if (opt("use_dist_term")) c.use_dist_term = j.at("use_dist_term").get<bool>();
  if (opt("top_k")) c.top_k = j.at("top_k").get<int>();
  if (opt("default_logprob")) c.default_logprob = j.at("default_logprob").get<double>();
  if (opt("initial_noise_size")) c.initial_noise_size = j.at("initial_noise_size").get<int>();
  if (opt("noise_decay_per_epoch")) c.noise_decay_per_epoch = j.at("noise_decay_per_epoch").get<int>();
  if (opt("minimum_noise_size")) c.minimum_noise_size = j.at("minimum_noise_size").get<int>();
  if (opt("alphabet_mode")) c.alphabet_mode = alphabet_mode_from_string(j.at("alphabet_mode").get<std::string>());
  if (opt("alphabet_characters")) c.alphabet_characters = j.at("alphabet_characters").get<std::string>();
  if (opt("edit_mix")) {
    const auto& m = j.at("edit_mix");
    c.edit_mix = EditMix{m.at("p_replace").get<double>(), m.at("p_insert").get<double>(),
                         m.at("p_delete").get<double>()};
  }
  if (opt("init_mode")) c.init_mode = init_mode_from_string(j.at("init_mode").get<std::string>());
  if (opt("token_metric")) c.token_metric = token_metric_from_string(j.at("token_metric").get<std::string>());
  if (opt("dist_normalize")) c.dist_normalize = dist_normalize_from_string(j.at("dist_normalize").get<std::string>());
  return c;
}

/// Fills defaults and rejects inconsistent settings. Token-only runs default
/// to a doubled budget (100 epochs); deobfuscation flips the entropy weight
/// and drops the distance term.
inline ValidatedConfig validate_run_config(const RunConfig& c, RunMode mode = RunMode::obfuscation) {
  ValidatedConfig v;
  v.seed = c.seed.value_or(0);
  v.epochs = c.epochs.value_or(mode == RunMode::token_only ? 100 : 50);
  v.candidates_per_epoch = c.candidates_per_epoch.value_or(20);
  v.batch_size = c.batch_size.value_or(1);

  const ObjectiveWeights mode_defaults = mode == RunMode::deobfuscation
                                             ? ObjectiveWeights::deobfuscation_defaults()
                                             : ObjectiveWeights::obfuscation_defaults();
  v.weights.lambda = c.lambda.value_or(mode_defaults.lambda);
  v.weights.gamma = c.gamma.value_or(mode_defaults.gamma);
  v.weights.use_dist_term = c.use_dist_term.value_or(mode_defaults.use_dist_term);

  v.top_k = c.top_k.value_or(10);
  v.default_logprob = c.default_logprob.value_or(-100.0);
  v.initial_noise_size = c.initial_noise_size;
  v.noise_decay_per_epoch = c.noise_decay_per_epoch.value_or(8);
  v.minimum_noise_size = c.minimum_noise_size.value_or(4);

  const AlphabetMode am = c.alphabet_mode.value_or(AlphabetMode::printable_ascii);
  switch (am) {
    case AlphabetMode::printable_ascii: v.alphabet = NoiseAlphabet::printable_ascii(); break;
    case AlphabetMode::full_ascii: v.alphabet = NoiseAlphabet::full_ascii(); break;
    case AlphabetMode::custom:
      if (!c.alphabet_characters || c.alphabet_characters->empty()) {
        throw Error(ErrorCode::InvalidConfig, "custom alphabet requires characters");
      }
      v.alphabet = NoiseAlphabet::custom(*c.alphabet_characters);
      break;
  }

  v.edit_mix = c.edit_mix.value_or(EditMix{});
  v.init_mode = c.init_mode.value_or(InitMode::dsl);
  v.token_metric = c.token_metric.value_or(TokenMetric::exact_match);
  v.dist_normalize = c.dist_normalize.value_or(DistNormalize::none);

  if (v.epochs < 0) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 0");
  if (v.candidates_per_epoch <= 0) throw Error(ErrorCode::InvalidConfig, "candidates_per_epoch must be positive");
  if (v.batch_size <= 0) throw Error(ErrorCode::InvalidConfig, "batch_size must be positive");
  if (v.top_k <= 0) throw Error(ErrorCode::InvalidConfig, "top_k must be positive");
  if (!(v.default_logprob < 0.0) || !std::isfinite(v.default_logprob)) {
    throw Error(ErrorCode::InvalidConfig, "default_logprob must be finite and negative");
  }
  if (v.minimum_noise_size <= 0) throw Error(ErrorCode::InvalidConfig, "minimum noise size must be positive");
  if (v.noise_decay_per_epoch < 0) throw Error(ErrorCode::InvalidConfig, "noise decay must be non-negative");
  if (v.initial_noise_size) {
    if (*v.initial_noise_size <= 0) throw Error(ErrorCode::InvalidConfig, "initial noise size must be positive");
    if (v.minimum_noise_size > *v.initial_noise_size) {
      throw Error(ErrorCode::InvalidConfig, "minimum noise size exceeds initial size");
    }
  }
  v.weights.validate();
  v.edit_mix.validate();
  v.alphabet.validate();
  return v;
}

inline ValidatedConfig validated_config_from_json(const json& j, RunMode mode = RunMode::obfuscation) {
  return validate_run_config(run_config_from_json(j), mode);
}

}  // namespace promptlock

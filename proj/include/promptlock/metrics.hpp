#pragma once

#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "promptlock/config.hpp"
#include "promptlock/core.hpp"
#include "promptlock/errors.hpp"

namespace promptlock {

/// Shared prediction normalization: trim, ASCII case-fold, collapse runs of
/// whitespace to single spaces. Raw outputs are preserved in detail files;
/// only scoring sees the normalized form.
inline std::string normalize_prediction(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

inline std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) tokens.push_back(std::move(current)), current.clear();
    } else {
      current.push_back(ch);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

/// 1 iff the normalized texts are equal.
inline double metric_exact_match(const std::string& prediction, const std::string& reference) {
  return normalize_prediction(prediction) == normalize_prediction(reference) ? 1.0 : 0.0;
}

/// Whitespace-token multiset F1. Both empty scores 1; one empty scores 0.
inline double metric_token_f1(const std::string& prediction, const std::string& reference) {
  const auto pred = whitespace_tokens(normalize_prediction(prediction));
  const auto ref = whitespace_tokens(normalize_prediction(reference));
  if (pred.empty() && ref.empty()) return 1.0;
  if (pred.empty() || ref.empty()) return 0.0;

  std::map<std::string, std::size_t> ref_counts;
  for (const auto& t : ref) ++ref_counts[t];
  std::size_t overlap = 0;
  for (const auto& t : pred) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(ref.size());
  return 2.0 * precision * recall / (precision + recall);
}

/// 1 iff the prediction selects the reference choice, either by matching the
/// choice text or by its leading option letter (A, B, C, ... by position).
inline double metric_choice_accuracy(const std::string& prediction, const TaskExample& example) {
  if (!example.choice_set || example.choice_set->empty()) {
    throw Error(ErrorCode::MissingChoices, "choice_accuracy needs a choice set");
  }
  const std::string norm = normalize_prediction(prediction);
  const auto& choices = *example.choice_set;

  std::size_t reference_index = choices.size();
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (choices[i] == example.reference_text) {
      reference_index = i;
      break;
    }
  }
  if (reference_index == choices.size()) {
    throw Error(ErrorCode::MissingChoices, "reference_text is not a member of choices");
  }

  // Full-text match against any choice decides directly.
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (norm == normalize_prediction(choices[i])) return i == reference_index ? 1.0 : 0.0;
  }

  // Otherwise accept a bare option letter, optionally followed by . ) or :.
  if (!norm.empty() && norm[0] >= 'a' && norm[0] < 'a' + static_cast<char>(choices.size())) {
    const bool bare = norm.size() == 1 ||
                      (norm.size() >= 2 && (norm[1] == '.' || norm[1] == ')' || norm[1] == ':'));
    if (bare) {
      const std::size_t picked = static_cast<std::size_t>(norm[0] - 'a');
      return picked == reference_index ? 1.0 : 0.0;
    }
  }
  return 0.0;
}

inline double metric_score(TokenMetric metric, const std::string& prediction,
                           const TaskExample& example) {
  switch (metric) {
    case TokenMetric::exact_match: return metric_exact_match(prediction, example.reference_text);
    case TokenMetric::token_f1: return metric_token_f1(prediction, example.reference_text);
    case TokenMetric::choice_accuracy: return metric_choice_accuracy(prediction, example);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown metric");
}

}  // namespace promptlock

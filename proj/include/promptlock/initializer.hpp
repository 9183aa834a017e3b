#pragma once

#include <cctype>
#include <string>
#include <string_view>

#include "promptlock/backends.hpp"
#include "promptlock/config.hpp"
#include "promptlock/core.hpp"
#include "promptlock/errors.hpp"
#include "promptlock/templates.hpp"

namespace promptlock {

/// Strips a single outermost Markdown code fence (``` or ```lang) when the
/// whole response is fenced. Anything further is left intact.
inline std::string strip_outer_fence(std::string_view response) {
  std::size_t begin = 0;
  std::size_t end = response.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(response[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(response[end - 1]))) --end;
  const std::string_view trimmed = response.substr(begin, end - begin);

  if (trimmed.size() < 6 || trimmed.substr(0, 3) != "```" ||
      trimmed.substr(trimmed.size() - 3) != "```") {
    return std::string(response);
  }
  const std::size_t first_newline = trimmed.find('\n');
  if (first_newline == std::string_view::npos || first_newline >= trimmed.size() - 3) {
    return std::string(response);
  }
  std::string_view body = trimmed.substr(first_newline + 1, trimmed.size() - 3 - first_newline - 1);
  if (!body.empty() && body.back() == '\n') body.remove_suffix(1);
  return std::string(body);
}

/// Produces the initialized prompt. dsl mode asks the backend to rewrite the
/// original into a code-symbol form via the shipped template; passthrough
/// keeps the text and only advances the stage (the tune-only ablation).
inline PromptArtifact initialize_prompt(const PromptArtifact& original, Backend& backend,
                                        InitMode mode,
                                        const TemplateSet& templates = TemplateSet::defaults()) {
  if (original.stage != PromptStage::original) {
    throw Error(ErrorCode::InvalidArtifact, "initialization requires an original-stage prompt");
  }
  if (mode == InitMode::passthrough) {
    return derive_artifact(original, PromptStage::initialized, original.text,
                           backend.descriptor().id);
  }

  const std::string request =
      render_template(templates.dsl_init, {{"target_prompt", original.text}});
  // Single-turn rewrite request: no system message, greedy for reproducibility.
  const std::string response = backend.generate("", request, DecodeSpec::greedy_decode());
  const std::string cleaned = strip_outer_fence(response);
  if (cleaned.empty()) {
    throw Error(ErrorCode::EmptyResponse, "backend returned an empty initialization");
  }
  return derive_artifact(original, PromptStage::initialized, cleaned, backend.descriptor().id);
}

}  // namespace promptlock

#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "promptlock/errors.hpp"

namespace promptlock {

enum class TemplateName { dsl_init, recovery, naive_induction };

inline const char* to_string(TemplateName n) {
  switch (n) {
    case TemplateName::dsl_init: return "dsl_init";
    case TemplateName::recovery: return "recovery";
    case TemplateName::naive_induction: return "naive_induction";
  }
  return "unknown";
}

// Template syntax is format-style: {name} is a placeholder, {{ and }} are
// escapes for literal braces.

/// Placeholder names appearing in a template body, in scan order.
inline std::set<std::string> template_placeholders(std::string_view body) {
  std::set<std::string> names;
  std::size_t i = 0;
  while (i < body.size()) {
    const char c = body[i];
    if (c == '{') {
      if (i + 1 < body.size() && body[i + 1] == '{') {
        i += 2;
        continue;
      }
      const std::size_t end = body.find('}', i + 1);
      if (end == std::string_view::npos) {
        throw Error(ErrorCode::InvalidTemplate, "unterminated placeholder");
      }
      std::string name(body.substr(i + 1, end - i - 1));
      if (name.empty()) throw Error(ErrorCode::InvalidTemplate, "empty placeholder name");
      for (char nc : name) {
        if (!std::isalnum(static_cast<unsigned char>(nc)) && nc != '_') {
          throw Error(ErrorCode::InvalidTemplate, "invalid placeholder name '" + name + "'");
        }
      }
      names.insert(std::move(name));
      i = end + 1;
    } else if (c == '}') {
      if (i + 1 < body.size() && body[i + 1] == '}') {
        i += 2;
        continue;
      }
      throw Error(ErrorCode::InvalidTemplate, "stray '}' in template");
    } else {
      ++i;
    }
  }
  return names;
}

struct TemplateFile {
  TemplateName name = TemplateName::dsl_init;
  std::string body;

  void validate() const {
    const auto names = template_placeholders(body);
    auto require = [&](const char* placeholder) {
      if (!names.count(placeholder)) {
        throw Error(ErrorCode::InvalidTemplate, std::string(to_string(name)) +
                                                    " template must contain {" + placeholder + "}");
      }
    };
    switch (name) {
      case TemplateName::dsl_init: require("target_prompt"); break;
      case TemplateName::recovery: require("obfuscated_prompt"); break;
      case TemplateName::naive_induction:
        require("task_description");
        require("io_pairs");
        break;
    }
  }
};

/// Exact substitution of bindings into the template; no other mutation.
/// Every placeholder needs a binding and every binding needs a placeholder.
inline std::string render_template(const TemplateFile& tmpl,
                                   const std::map<std::string, std::string>& bindings) {
  const auto names = template_placeholders(tmpl.body);
  for (const auto& name : names) {
    if (!bindings.count(name)) {
      throw Error(ErrorCode::MissingBinding, "no binding for placeholder {" + name + "}");
    }
  }
  for (const auto& [key, _] : bindings) {
    if (!names.count(key)) {
      throw Error(ErrorCode::UnknownPlaceholder, "binding '" + key + "' matches no placeholder");
    }
  }

  std::string out;
  out.reserve(tmpl.body.size());
  std::size_t i = 0;
  const std::string_view body = tmpl.body;
  while (i < body.size()) {
    const char c = body[i];
    if (c == '{' && i + 1 < body.size() && body[i + 1] == '{') {
      out.push_back('{');
      i += 2;
    } else if (c == '}' && i + 1 < body.size() && body[i + 1] == '}') {
      out.push_back('}');
      i += 2;
    } else if (c == '{') {
      const std::size_t end = body.find('}', i + 1);
      out += bindings.at(std::string(body.substr(i + 1, end - i - 1)));
      i = end + 1;
    } else {
      out.push_back(c);
      ++i;
    }
  }
  return out;
}

// Default template bodies. These double as the reference content for the
// files under templates/; tests pin their digests so silent drift fails.

inline const std::string& default_dsl_init_body() {
  static const std::string body =
      "You are a large language model with strong pattern abstraction ability.\n"
      "Your task is NOT to execute a prompt, but to DESIGN a prompt DSL that YOU can reliably "
      "interpret and execute.\n"
      "Constraints:\n"
      "1. The DSL must preserve the intent and usage effect of the original prompt template.\n"
      "2. The DSL must be directly usable (no intermediate explanation required at runtime).\n"
      "3. The DSL should rely on structural patterns.\n"
      "4. The DSL should be difficult for humans to read directly.\n"
      "5. Do not reduce too much semantic information.\n"
      "6. Such as \"\"\"<transmute operator=\"textflow\" mode=\"bidirectional\" "
      "direction=\"input→en\">\n"
      "    <source lang=\"auto\" detect=\"true\">{{QUERY}}</source>\n"
      "    <constraint preserve=\"semantic_density\" threshold=\"0.92\"/>\n"
      "    <output format=\"natural\" register=\"neutral\"/>\n"
      "</transmute>\"\"\"\n"
      "\n"
      "Prompt:\n"
      "\"\"\"{target_prompt}\"\"\"\n";
  return body;
}

inline const std::string& default_recovery_body() {
  static const std::string body =
      "What is the original prompt for the following prompt?\n"
      "\n"
      "Prompt:\n"
      "\"\"\"{obfuscated_prompt}\"\"\"\n";
  return body;
}

inline const std::string& default_naive_induction_body() {
  static const std::string body =
      "You are given a small set of input-output examples produced by an agent.\n"
      "Your task is to write a SINGLE system prompt that, when used to initialize an LLM agent,\n"
      "will reproduce the same behavior on similar inputs.\n"
      "\n"
      "[Optional] Task context:\n"
      "{task_description}\n"
      "\n"
      "Examples:\n"
      "{io_pairs}\n"
      "# Each example should follow:\n"
      "# Input:  ...\n"
      "# Output: ...\n"
      "\n"
      "Requirements for the system prompt:\n"
      "- Output ONLY the system prompt text (no explanations, no markdown).\n"
      "- The prompt should specify the agent's role, goals, constraints, and tool-use policy if "
      "needed.\n"
      "- Be concise but complete; preserve the behavior implied by the examples.\n"
      "- Do NOT refer to these examples explicitly in the final prompt.\n"
      "\n"
      "System prompt:\n";
  return body;
}

/// The three shipped templates, individually overridable from files.
struct TemplateSet {
  TemplateFile dsl_init{TemplateName::dsl_init, default_dsl_init_body()};
  TemplateFile recovery{TemplateName::recovery, default_recovery_body()};
  TemplateFile naive_induction{TemplateName::naive_induction, default_naive_induction_body()};

  static TemplateSet defaults() {
    TemplateSet set;
    set.validate();
    return set;
  }

  /// Loads <dir>/dsl_init.txt etc.; files that are absent keep their default.
  static TemplateSet from_directory(const std::string& dir) {
    TemplateSet set;
    auto load = [&](const char* file, TemplateFile& slot) {
      std::ifstream in(dir + "/" + file, std::ios::binary);
      if (!in) return;
      std::ostringstream buf;
      buf << in.rdbuf();
      slot.body = buf.str();
    };
    load("dsl_init.txt", set.dsl_init);
    load("recovery.txt", set.recovery);
    load("naive_induction.txt", set.naive_induction);
    set.validate();
    return set;
  }

  void validate() const {
    dsl_init.validate();
    recovery.validate();
    naive_induction.validate();
  }
};

}  // namespace promptlock

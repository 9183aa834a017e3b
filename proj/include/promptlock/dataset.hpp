#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptlock/core.hpp"
#include "promptlock/digest.hpp"
#include "promptlock/errors.hpp"

namespace promptlock {

/// A collection of task examples plus the digest of the bytes they were
/// loaded from, for provenance in matrix sidecars and run metadata.
struct Dataset {
  std::vector<TaskExample> examples;
  std::string digest;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  const TaskExample& operator[](std::size_t i) const { return examples[i]; }

  void require_non_empty() const {
    if (examples.empty()) throw Error(ErrorCode::DatasetEmpty, "dataset has no examples");
  }
};

/// Line-delimited records, one TaskExample per line, fields `query`,
/// `label_tokens`, `reference_text`, `choices`. Blank lines are skipped.
inline Dataset parse_dataset_jsonl(const std::string& content) {
  Dataset d;
  d.digest = sha256_hex(content);
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      d.examples.push_back(json::parse(line).get<TaskExample>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::IoError,
                  "dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return d;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open dataset file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset_jsonl(buf.str());
}

inline std::string dataset_to_jsonl(const Dataset& d) {
  std::string out;
  for (const auto& e : d.examples) {
    out += json(e).dump();
    out += '\n';
  }
  return out;
}

}  // namespace promptlock

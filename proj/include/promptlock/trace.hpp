#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptlock/config.hpp"
#include "promptlock/errors.hpp"
#include "promptlock/objective.hpp"
#include "promptlock/textops.hpp"

namespace promptlock {

/// One optimization step: the proposal, both losses on the shared batch, and
/// the acceptance verdict. Prompts appear as digests; full texts live in the
/// epoch checkpoints.
struct StepTrace {
  int epoch = 0;
  int step = 0;
  int noise_size = 0;
  std::vector<std::size_t> example_ids;
  std::string incumbent_digest;
  std::string proposal_digest;
  LossBreakdown incumbent_loss;
  LossBreakdown proposal_loss;
  bool accepted = false;
};

inline void to_json(json& j, const StepTrace& t) {
  j = json{{"epoch", t.epoch},
           {"step", t.step},
           {"noise_size", t.noise_size},
           {"example_ids", t.example_ids},
           {"incumbent_digest", t.incumbent_digest},
           {"proposal_digest", t.proposal_digest},
           {"incumbent_loss", t.incumbent_loss},
           {"proposal_loss", t.proposal_loss},
           {"accepted", t.accepted}};
}

inline void from_json(const json& j, StepTrace& t) {
  t.epoch = j.at("epoch").get<int>();
  t.step = j.at("step").get<int>();
  t.noise_size = j.at("noise_size").get<int>();
  t.example_ids = j.at("example_ids").get<std::vector<std::size_t>>();
  t.incumbent_digest = j.at("incumbent_digest").get<std::string>();
  t.proposal_digest = j.at("proposal_digest").get<std::string>();
  t.incumbent_loss = j.at("incumbent_loss").get<LossBreakdown>();
  t.proposal_loss = j.at("proposal_loss").get<LossBreakdown>();
  t.accepted = j.at("accepted").get<bool>();
}

inline std::vector<StepTrace> read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::vector<StepTrace> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line).get<StepTrace>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::CorruptTrace, "trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

/// Appends rows to trace.jsonl, one canonical JSON document per line.
class TraceWriter {
 public:
  explicit TraceWriter(const std::filesystem::path& path)
      : out_(path, std::ios::binary | std::ios::app) {
    if (!out_) throw Error(ErrorCode::IoError, "cannot open trace file " + path.string());
  }

  void append(const StepTrace& row) {
    out_ << json(row).dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Run directory
// ---------------------------------------------------------------------------

/// Fixed layout under one run directory. Nothing is ever overwritten; resume
/// appends to the existing trace.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path config_snapshot() const { return root / "config.snapshot"; }
  std::filesystem::path trace() const { return root / "trace.jsonl"; }
  std::filesystem::path checkpoints_dir() const { return root / "checkpoints"; }
  std::filesystem::path checkpoint(int epoch) const {
    return checkpoints_dir() / ("epoch_" + std::to_string(epoch) + ".state");
  }
  std::filesystem::path original_prompt() const { return root / "original.prompt"; }
  std::filesystem::path start_prompt() const { return root / "start.prompt"; }
  std::filesystem::path start_meta() const { return root / "start.meta"; }
  std::filesystem::path dataset_snapshot() const { return root / "dataset.snapshot"; }
  std::filesystem::path final_prompt() const { return root / "final.prompt"; }
  std::filesystem::path final_meta() const { return root / "final.meta"; }
  std::filesystem::path attack_meta() const { return root / "attack.meta"; }
  std::filesystem::path error_record() const { return root / "error.json"; }
};

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------------------
// Trace audit
// ---------------------------------------------------------------------------

/// Re-derives every per-step invariant from the files alone, independent of
/// the optimizer: acceptance rule, annealing schedule, loss recombination,
/// and the incumbent chain.
struct TraceAuditReport {
  std::size_t rows_checked = 0;
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

inline TraceAuditReport audit_run_directory(const std::filesystem::path& run_dir) {
  const RunPaths paths{run_dir};
  TraceAuditReport report;

  const json snapshot = json::parse(read_file(paths.config_snapshot()));
  const ValidatedConfig config = validated_config_from_json(snapshot);
  if (!config.initial_noise_size) {
    report.violations.push_back("config.snapshot lacks a resolved initial_noise_size");
    return report;
  }
  NoiseSchedule schedule;
  schedule.initial_size = *config.initial_noise_size;
  schedule.decay_per_epoch = config.noise_decay_per_epoch;
  schedule.minimum_size = config.minimum_noise_size;

  const auto rows = read_trace_file(paths.trace());
  report.rows_checked = rows.size();

  auto check_loss = [&](const LossBreakdown& l, const char* which, std::size_t i) {
    const double recombined =
        l.task + config.weights.lambda * l.dist + config.weights.gamma * l.nonlang;
    if (std::abs(recombined - l.total) > 1e-9) {
      report.violations.push_back("row " + std::to_string(i) + ": " + which +
                                  " total does not recombine from components");
    }
    if (!config.weights.use_dist_term && l.dist != 0.0) {
      report.violations.push_back("row " + std::to_string(i) + ": " + which +
                                  " has a distance component with the term disabled");
    }
  };

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const StepTrace& row = rows[i];
    const bool should_accept = row.proposal_loss.total < row.incumbent_loss.total;
    if (row.accepted != should_accept) {
      report.violations.push_back("row " + std::to_string(i) + ": acceptance flag contradicts losses");
    }
    if (row.noise_size != noise_size_at(row.epoch, schedule)) {
      report.violations.push_back("row " + std::to_string(i) + ": noise size off schedule");
    }
    const int expected_epoch = static_cast<int>(i) / config.candidates_per_epoch;
    const int expected_step = static_cast<int>(i) % config.candidates_per_epoch;
    if (row.epoch != expected_epoch || row.step != expected_step) {
      report.violations.push_back("row " + std::to_string(i) + ": epoch/step out of order");
    }
    if (row.example_ids.size() != static_cast<std::size_t>(config.batch_size)) {
      report.violations.push_back("row " + std::to_string(i) + ": batch size mismatch");
    }
    check_loss(row.incumbent_loss, "incumbent", i);
    check_loss(row.proposal_loss, "proposal", i);
    if (i + 1 < rows.size()) {
      const std::string& next_incumbent = rows[i + 1].incumbent_digest;
      const std::string& expected =
          row.accepted ? row.proposal_digest : row.incumbent_digest;
      if (next_incumbent != expected) {
        report.violations.push_back("row " + std::to_string(i + 1) + ": incumbent chain broken");
      }
    }
  }
  return report;
}

}  // namespace promptlock

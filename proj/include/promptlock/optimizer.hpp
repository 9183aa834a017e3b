#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptlock/backends.hpp"
#include "promptlock/config.hpp"
#include "promptlock/core.hpp"
#include "promptlock/dataset.hpp"
#include "promptlock/errors.hpp"
#include "promptlock/initializer.hpp"
#include "promptlock/objective.hpp"
#include "promptlock/rng.hpp"
#include "promptlock/textops.hpp"
#include "promptlock/trace.hpp"

namespace promptlock {

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::obfuscation: return "obfuscation";
    case RunMode::token_only: return "token_only";
    case RunMode::deobfuscation: return "deobfuscation";
  }
  return "unknown";
}

inline RunMode run_mode_from_string(const std::string& s) {
  if (s == "obfuscation") return RunMode::obfuscation;
  if (s == "token_only") return RunMode::token_only;
  if (s == "deobfuscation") return RunMode::deobfuscation;
  throw Error(ErrorCode::InvalidConfig, "unknown run mode '" + s + "'");
}

/// Loop position plus everything needed to continue a run bit-exactly.
struct OptimizerState {
  std::string incumbent_text;
  int epoch = 0;
  int step_in_epoch = 0;
  std::string rng_state;
  std::optional<double> best_total_loss_on_last_batch;
  std::optional<std::string> best_ever_digest;
  std::optional<double> best_ever_total;
  std::uint64_t steps_done = 0;
  std::string config_digest;
};

inline void to_json(json& j, const OptimizerState& s) {
  j = json{{"incumbent_text", s.incumbent_text},
           {"epoch", s.epoch},
           {"step_in_epoch", s.step_in_epoch},
           {"rng_state", s.rng_state},
           {"best_total_loss_on_last_batch",
            s.best_total_loss_on_last_batch ? json(*s.best_total_loss_on_last_batch) : json()},
           {"best_ever_digest", s.best_ever_digest ? json(*s.best_ever_digest) : json()},
           {"best_ever_total", s.best_ever_total ? json(*s.best_ever_total) : json()},
           {"steps_done", s.steps_done},
           {"config_digest", s.config_digest}};
}

inline void from_json(const json& j, OptimizerState& s) {
  s.incumbent_text = j.at("incumbent_text").get<std::string>();
  s.epoch = j.at("epoch").get<int>();
  s.step_in_epoch = j.at("step_in_epoch").get<int>();
  s.rng_state = j.at("rng_state").get<std::string>();
  s.best_total_loss_on_last_batch =
      j.at("best_total_loss_on_last_batch").is_null()
          ? std::nullopt
          : std::optional<double>(j.at("best_total_loss_on_last_batch").get<double>());
  s.best_ever_digest = j.at("best_ever_digest").is_null()
                           ? std::nullopt
                           : std::optional<std::string>(j.at("best_ever_digest").get<std::string>());
  s.best_ever_total = j.at("best_ever_total").is_null()
                          ? std::nullopt
                          : std::optional<double>(j.at("best_ever_total").get<double>());
  s.steps_done = j.at("steps_done").get<std::uint64_t>();
  s.config_digest = j.at("config_digest").get<std::string>();
}

struct RunResult {
  std::optional<PromptArtifact> final_artifact;  ///< set when the run completed
  std::string incumbent_text;                    ///< last incumbent either way
  bool completed = false;
  std::filesystem::path run_dir;
  std::uint64_t steps_executed = 0;  ///< steps evaluated by this process
  std::uint64_t score_calls = 0;
  std::uint64_t generate_calls = 0;
  std::optional<double> final_total_loss;
  std::optional<std::string> best_ever_digest;
  std::optional<double> best_ever_total;
};

namespace detail {

struct EngineSetup {
  RunMode mode = RunMode::obfuscation;
  ValidatedConfig config;  ///< initial_noise_size resolved
  std::string original_text;
  PromptArtifact start;
  PromptStage result_stage = PromptStage::obfuscated;
  Dataset dataset;
};

inline std::string snapshot_serialization(const ValidatedConfig& config, RunMode mode) {
  json j = config.to_json();
  j["mode"] = to_string(mode);
  return j.dump(2) + "\n";
}

inline void require_examples_scoreable(const Dataset& dataset, RunMode mode, TokenMetric metric) {
  dataset.require_non_empty();
  for (const auto& ex : dataset.examples) {
    if (mode == RunMode::token_only) {
      if (metric == TokenMetric::choice_accuracy) {
        if (!ex.choice_set || ex.choice_set->empty()) {
          throw Error(ErrorCode::MissingReference,
                      "choice_accuracy needs a choice set on every example");
        }
      } else if (ex.reference_text.empty()) {
        throw Error(ErrorCode::MissingReference, "metric needs reference_text on every example");
      }
    } else if (ex.label_tokens.empty()) {
      throw Error(ErrorCode::EmptyLabels, "logprob scoring needs label_tokens on every example");
    }
  }
}

/// The random-search engine shared by obfuscation, token-only, and
/// deobfuscation runs. One proposal per step; strict-improvement acceptance.
class SearchEngine {
 public:
  SearchEngine(EngineSetup setup, BackendPtr backend, RunPaths paths)
      : setup_(std::move(setup)),
        backend_(std::make_shared<CallCountingBackend>(std::move(backend))),
        paths_(std::move(paths)) {
    schedule_ = NoiseSchedule{*setup_.config.initial_noise_size,
                              setup_.config.noise_decay_per_epoch,
                              setup_.config.minimum_noise_size};
    schedule_.validate();
    snapshot_digest_ = sha256_hex(snapshot_serialization(setup_.config, setup_.mode));
  }

  Backend& counted_backend() { return *backend_; }

  /// Lays the run directory out and writes the epoch-0 checkpoint.
  void create_run_directory(const std::string& dataset_bytes) {
    namespace fs = std::filesystem;
    if (fs::exists(paths_.config_snapshot())) {
      throw Error(ErrorCode::IoError,
                  "run directory already holds a run: " + paths_.root.string());
    }
    fs::create_directories(paths_.checkpoints_dir());
    write_file(paths_.config_snapshot(), snapshot_serialization(setup_.config, setup_.mode));
    write_file(paths_.original_prompt(), setup_.original_text);
    write_file(paths_.start_prompt(), setup_.start.text);
    json start_meta{{"stage", to_string(setup_.start.stage)},
                    {"target_backend",
                     setup_.start.target_backend ? json(*setup_.start.target_backend) : json()},
                    {"parent_digest",
                     setup_.start.parent_digest ? json(*setup_.start.parent_digest) : json()},
                    {"digest", setup_.start.digest()}};
    write_file(paths_.start_meta(), start_meta.dump(2) + "\n");
    write_file(paths_.dataset_snapshot(), dataset_bytes);
    write_file(paths_.trace(), "");

    state_.incumbent_text = setup_.start.text;
    state_.epoch = 0;
    state_.step_in_epoch = 0;
    std::mt19937_64 rng(setup_.config.seed);
    state_.rng_state = save_rng_state(rng);
    state_.config_digest = snapshot_digest_;
    write_checkpoint(0);
  }

  /// Restores position from the newest usable checkpoint, then replays the
  /// already-traced steps of the current epoch (RNG only, no backend calls).
  void restore_from_directory() {
    const auto rows = read_trace_file(paths_.trace());
    const std::size_t resumed_rows = rows.size();
    const int cpe = setup_.config.candidates_per_epoch;
    const int next_epoch = static_cast<int>(resumed_rows) / cpe;

    int checkpoint_epoch = -1;
    for (int e = next_epoch; e >= 0; --e) {
      if (std::filesystem::exists(paths_.checkpoint(e))) {
        checkpoint_epoch = e;
        break;
      }
    }
    if (checkpoint_epoch < 0) {
      throw Error(ErrorCode::CorruptCheckpoint, "no usable checkpoint in " + paths_.root.string());
    }
    json state_json;
    try {
      state_json = json::parse(read_file(paths_.checkpoint(checkpoint_epoch)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::CorruptCheckpoint, e.what());
    }
    state_ = state_json.get<OptimizerState>();
    if (state_.config_digest != snapshot_digest_) {
      throw Error(ErrorCode::ConfigMismatch, "checkpoint was written under a different config");
    }

    std::mt19937_64 rng = load_rng_state(state_.rng_state);
    for (std::size_t i = static_cast<std::size_t>(checkpoint_epoch) * cpe; i < resumed_rows; ++i) {
      const StepTrace& row = rows[i];
      std::vector<std::size_t> ids(setup_.config.batch_size);
      for (auto& id : ids) id = uniform_index(rng, setup_.dataset.size());
      if (ids != row.example_ids) {
        throw Error(ErrorCode::CorruptTrace, "replayed batch diverges from trace");
      }
      const std::string proposal =
          inject_noise(state_.incumbent_text, row.noise_size, setup_.config.alphabet,
                       setup_.config.edit_mix, rng);
      if (sha256_hex(proposal) != row.proposal_digest) {
        throw Error(ErrorCode::CorruptTrace, "replayed proposal diverges from trace");
      }
      if (row.accepted) state_.incumbent_text = proposal;
      note_step_outcome(row);
    }
    state_.rng_state = save_rng_state(rng);
    state_.epoch = next_epoch;
    state_.step_in_epoch = static_cast<int>(resumed_rows) % cpe;
    state_.steps_done = resumed_rows;
  }

  RunResult run(std::optional<std::uint64_t> max_total_steps) {
    RunResult result;
    result.run_dir = paths_.root;

    const std::uint64_t base_score = backend_->score_calls();
    const std::uint64_t base_generate = backend_->generate_calls();
    const std::uint64_t base_steps = state_.steps_done;

    std::mt19937_64 rng = load_rng_state(state_.rng_state);
    TraceWriter trace(paths_.trace());
    bool interrupted = false;

    for (int epoch = state_.epoch; epoch < setup_.config.epochs && !interrupted; ++epoch) {
      if (state_.step_in_epoch == 0 && !std::filesystem::exists(paths_.checkpoint(epoch))) {
        state_.epoch = epoch;
        state_.rng_state = save_rng_state(rng);
        write_checkpoint(epoch);
      }
      const int noise = noise_size_at(epoch, schedule_);
      for (int step = state_.step_in_epoch; step < setup_.config.candidates_per_epoch; ++step) {
        if (max_total_steps && state_.steps_done >= *max_total_steps) {
          interrupted = true;
          break;
        }
        StepTrace row;
        row.epoch = epoch;
        row.step = step;
        row.noise_size = noise;
        row.example_ids.resize(setup_.config.batch_size);
        for (auto& id : row.example_ids) id = uniform_index(rng, setup_.dataset.size());

        const std::string proposal = inject_noise(state_.incumbent_text, noise,
                                                  setup_.config.alphabet, setup_.config.edit_mix, rng);
        row.incumbent_digest = sha256_hex(state_.incumbent_text);
        row.proposal_digest = sha256_hex(proposal);
        // Incumbent and proposal are scored on the same fresh batch with
        // identical calls; caching across batches would compare losses on
        // different data.
        row.incumbent_loss = evaluate(state_.incumbent_text, row.example_ids);
        row.proposal_loss = evaluate(proposal, row.example_ids);
        row.accepted = row.proposal_loss.total < row.incumbent_loss.total;
        trace.append(row);

        if (row.accepted) state_.incumbent_text = proposal;
        note_step_outcome(row);
        ++state_.steps_done;
      }
      state_.step_in_epoch = 0;
    }
    state_.rng_state = save_rng_state(rng);

    result.incumbent_text = state_.incumbent_text;
    result.steps_executed = state_.steps_done - base_steps;
    result.score_calls = backend_->score_calls() - base_score;
    result.generate_calls = backend_->generate_calls() - base_generate;
    result.final_total_loss = state_.best_total_loss_on_last_batch;
    result.best_ever_digest = state_.best_ever_digest;
    result.best_ever_total = state_.best_ever_total;
    result.completed = !interrupted;

    if (result.completed) {
      PromptArtifact final_artifact =
          derive_artifact(setup_.start, setup_.result_stage, state_.incumbent_text,
                          setup_.start.target_backend);
      write_file(paths_.final_prompt(), final_artifact.text);
      json meta{{"config_digest", snapshot_digest_},
                {"mode", to_string(setup_.mode)},
                {"stage", to_string(final_artifact.stage)},
                {"target_backend", final_artifact.target_backend
                                       ? json(*final_artifact.target_backend)
                                       : json()},
                {"parent_digest", final_artifact.parent_digest ? json(*final_artifact.parent_digest)
                                                               : json()},
                {"final_digest", final_artifact.digest()},
                {"original_digest", sha256_hex(setup_.original_text)},
                {"start_digest", setup_.start.digest()},
                {"steps", state_.steps_done},
                {"best_ever_digest", state_.best_ever_digest ? json(*state_.best_ever_digest) : json()},
                {"best_ever_total", state_.best_ever_total ? json(*state_.best_ever_total) : json()},
                {"final_total_loss", state_.best_total_loss_on_last_batch
                                         ? json(*state_.best_total_loss_on_last_batch)
                                         : json()}};
      write_file(paths_.final_meta(), meta.dump(2) + "\n");
      result.final_artifact = std::move(final_artifact);
    }
    return result;
  }

  static RunResult completed_result(const RunPaths& paths) {
    RunResult result;
    result.run_dir = paths.root;
    result.completed = true;
    const json meta = json::parse(read_file(paths.final_meta()));
    PromptArtifact artifact;
    artifact.text = read_file(paths.final_prompt());
    artifact.stage = stage_from_string(meta.at("stage").get<std::string>());
    artifact.target_backend = meta.at("target_backend").is_null()
                                  ? std::nullopt
                                  : std::optional<std::string>(meta.at("target_backend"));
    artifact.parent_digest = meta.at("parent_digest").is_null()
                                 ? std::nullopt
                                 : std::optional<std::string>(meta.at("parent_digest"));
    result.incumbent_text = artifact.text;
    if (!meta.at("best_ever_digest").is_null()) {
      result.best_ever_digest = meta.at("best_ever_digest").get<std::string>();
    }
    if (!meta.at("best_ever_total").is_null()) {
      result.best_ever_total = meta.at("best_ever_total").get<double>();
    }
    if (!meta.at("final_total_loss").is_null()) {
      result.final_total_loss = meta.at("final_total_loss").get<double>();
    }
    result.final_artifact = std::move(artifact);
    return result;
  }

 private:
  LossBreakdown evaluate(const std::string& candidate, const std::vector<std::size_t>& batch) {
    double task_sum = 0.0;
    for (std::size_t id : batch) {
      const TaskExample& ex = setup_.dataset[id];
      if (setup_.mode == RunMode::token_only) {
        const std::string decoded = backend_->generate(candidate, ex.query, DecodeSpec::greedy_decode());
        task_sum += token_only_loss(decoded, ex, setup_.config.token_metric);
      } else {
        const auto records = backend_->score_labels(candidate, ex, setup_.config.top_k);
        task_sum += task_loss_topk(records, ex.label_tokens, setup_.config.default_logprob);
      }
    }
    const double task = task_sum / static_cast<double>(batch.size());
    return total_loss(task, candidate, setup_.original_text, setup_.config.weights,
                      setup_.config.dist_normalize, static_cast<int>(batch.size()));
  }

  void note_step_outcome(const StepTrace& row) {
    const double winner_total = row.accepted ? row.proposal_loss.total : row.incumbent_loss.total;
    const std::string& winner_digest = row.accepted ? row.proposal_digest : row.incumbent_digest;
    state_.best_total_loss_on_last_batch = winner_total;
    if (!state_.best_ever_total || winner_total < *state_.best_ever_total) {
      state_.best_ever_total = winner_total;
      state_.best_ever_digest = winner_digest;
    }
  }

  void write_checkpoint(int epoch) {
    OptimizerState snapshot = state_;
    snapshot.epoch = epoch;
    snapshot.step_in_epoch = 0;
    write_file(paths_.checkpoint(epoch), json(snapshot).dump(2) + "\n");
  }

  EngineSetup setup_;
  std::shared_ptr<CallCountingBackend> backend_;
  RunPaths paths_;
  NoiseSchedule schedule_;
  std::string snapshot_digest_;
  OptimizerState state_;
};

inline RunResult start_run(RunMode mode, const ValidatedConfig& config,
                           const PromptArtifact& original, const Dataset& dataset,
                           BackendPtr backend, const std::filesystem::path& run_dir,
                           const TemplateSet& templates,
                           std::optional<std::uint64_t> max_total_steps) {
  require_examples_scoreable(dataset, mode, config.token_metric);

  EngineSetup setup;
  setup.mode = mode;
  setup.config = config;
  setup.dataset = dataset;

  auto counting = std::make_shared<CallCountingBackend>(std::move(backend));
  std::uint64_t init_generate_calls = 0;

  if (mode == RunMode::deobfuscation) {
    if (original.stage != PromptStage::obfuscated) {
      throw Error(ErrorCode::InvalidArtifact, "deobfuscation starts from an obfuscated prompt");
    }
    setup.original_text = original.text;
    setup.start = original;
    setup.result_stage = PromptStage::deobfuscated;
  } else {
    setup.original_text = original.text;
    setup.start = initialize_prompt(original, *counting, config.init_mode, templates);
    init_generate_calls = counting->generate_calls();
    setup.result_stage = PromptStage::obfuscated;
  }

  // The annealing baseline is the initialized prompt, not the original.
  if (!setup.config.initial_noise_size) {
    setup.config.initial_noise_size =
        std::max(setup.config.minimum_noise_size,
                 static_cast<int>(decode_utf8(setup.start.text).size() / 4));
  }

  SearchEngine engine(setup, counting, RunPaths{run_dir});
  engine.create_run_directory(dataset_to_jsonl(dataset));
  RunResult result = engine.run(max_total_steps);
  result.generate_calls += init_generate_calls;
  return result;
}

}  // namespace detail

/// The full pipeline: initialization (per config.init_mode) followed by
/// epochs x candidates_per_epoch random-search steps with annealed noise.
inline RunResult run_obfuscation(const ValidatedConfig& config, const PromptArtifact& original,
                                 const Dataset& dataset, BackendPtr backend,
                                 const std::filesystem::path& run_dir,
                                 const TemplateSet& templates = TemplateSet::defaults(),
                                 std::optional<std::uint64_t> max_total_steps = std::nullopt) {
  if (original.stage != PromptStage::original) {
    throw Error(ErrorCode::InvalidArtifact, "obfuscation starts from an original-stage prompt");
  }
  return detail::start_run(RunMode::obfuscation, config, original, dataset, std::move(backend),
                           run_dir, templates, max_total_steps);
}

/// Same loop with the task term computed from decoded outputs and the task
/// metric instead of logprobs.
inline RunResult run_token_only(const ValidatedConfig& config, const PromptArtifact& original,
                                const Dataset& dataset, BackendPtr backend,
                                const std::filesystem::path& run_dir,
                                const TemplateSet& templates = TemplateSet::defaults(),
                                std::optional<std::uint64_t> max_total_steps = std::nullopt) {
  if (original.stage != PromptStage::original) {
    throw Error(ErrorCode::InvalidArtifact, "obfuscation starts from an original-stage prompt");
  }
  return detail::start_run(RunMode::token_only, config, original, dataset, std::move(backend),
                           run_dir, templates, max_total_steps);
}

/// Continues an interrupted run to completion. The continuation replays the
/// current epoch's traced steps from the last checkpoint (RNG only, no
/// backend calls), so the concatenated trace equals an uninterrupted run's.
inline RunResult resume(const std::filesystem::path& run_dir, BackendPtr backend,
                        std::optional<std::uint64_t> max_total_steps = std::nullopt) {
  const RunPaths paths{run_dir};
  if (!std::filesystem::exists(paths.config_snapshot())) {
    throw Error(ErrorCode::IoError, "no run found in " + run_dir.string());
  }
  if (std::filesystem::exists(paths.final_meta())) {
    return detail::SearchEngine::completed_result(paths);
  }

  json snapshot;
  try {
    snapshot = json::parse(read_file(paths.config_snapshot()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptCheckpoint, e.what());
  }
  const RunMode mode = run_mode_from_string(snapshot.value("mode", "obfuscation"));

  detail::EngineSetup setup;
  setup.mode = mode;
  setup.config = validated_config_from_json(snapshot, mode);
  setup.original_text = read_file(paths.original_prompt());
  setup.dataset = parse_dataset_jsonl(read_file(paths.dataset_snapshot()));

  const json start_meta = json::parse(read_file(paths.start_meta()));
  setup.start.text = read_file(paths.start_prompt());
  setup.start.stage = stage_from_string(start_meta.at("stage").get<std::string>());
  setup.start.target_backend = start_meta.at("target_backend").is_null()
                                   ? std::nullopt
                                   : std::optional<std::string>(start_meta.at("target_backend"));
  setup.start.parent_digest = start_meta.at("parent_digest").is_null()
                                  ? std::nullopt
                                  : std::optional<std::string>(start_meta.at("parent_digest"));
  setup.result_stage =
      mode == RunMode::deobfuscation ? PromptStage::deobfuscated : PromptStage::obfuscated;

  detail::SearchEngine engine(setup, std::move(backend), paths);
  engine.restore_from_directory();
  return engine.run(max_total_steps);
}

}  // namespace promptlock

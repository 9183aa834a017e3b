#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "promptlock/config.hpp"
#include "promptlock/core.hpp"
#include "promptlock/errors.hpp"
#include "promptlock/metrics.hpp"
#include "promptlock/textops.hpp"

namespace promptlock {

/// The three objective components and their weighted sum for one evaluation.
struct LossBreakdown {
  double task = 0.0;
  double dist = 0.0;
  double nonlang = 0.0;
  double total = 0.0;
  int batch_size = 1;
};

inline void to_json(json& j, const LossBreakdown& l) {
  j = json{{"task", l.task},
           {"dist", l.dist},
           {"nonlang", l.nonlang},
           {"total", l.total},
           {"batch_size", l.batch_size}};
}

inline void from_json(const json& j, LossBreakdown& l) {
  l.task = j.at("task").get<double>();
  l.dist = j.at("dist").get<double>();
  l.nonlang = j.at("nonlang").get<double>();
  l.total = j.at("total").get<double>();
  l.batch_size = j.at("batch_size").get<int>();
}

/// Mean negative label logprob over positions, substituting `default_logprob`
/// for labels the backend's top-k list does not contain.
inline double task_loss_topk(const std::vector<TopKRecord>& records,
                             const std::vector<std::string>& labels, double default_logprob) {
  if (labels.empty()) throw Error(ErrorCode::EmptyLabels, "no label tokens");
  if (records.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "records and labels differ in length");
  }
  if (!(default_logprob < 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "default_logprob must be negative");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto lp = records[i].find(labels[i]);
    sum += lp ? -*lp : -default_logprob;
  }
  return sum / static_cast<double>(labels.size());
}

/// -ln(sigmoid(Dist(candidate, original))): rewards divergence from the
/// original, saturating near zero once the distance exceeds ~15. The
/// normalized variant divides the distance by the original's length first.
inline double dist_loss(std::string_view candidate, std::string_view original,
                        DistNormalize normalize = DistNormalize::none) {
  double d = static_cast<double>(levenshtein(candidate, original));
  if (normalize == DistNormalize::by_original_length) {
    const std::size_t n = decode_utf8(original).size();
    if (n > 0) d /= static_cast<double>(n);
  }
  // -ln(sigma(d)) = ln(1 + e^-d)
  return std::log1p(std::exp(-d));
}

/// Negated character entropy; weighting it positively pushes candidates
/// toward a uniform, noise-like character distribution.
inline double nonlang_loss(std::string_view candidate) { return -char_entropy(candidate); }

/// Combines a precomputed task term with the distance and entropy terms.
/// With use_dist_term off the distance is recorded as zero and excluded.
inline LossBreakdown total_loss(double task, std::string_view candidate, std::string_view original,
                                const ObjectiveWeights& weights,
                                DistNormalize normalize = DistNormalize::none, int batch_size = 1) {
  if (!std::isfinite(task)) throw Error(ErrorCode::InvalidConfig, "task loss must be finite");
  LossBreakdown out;
  out.task = task;
  out.dist = weights.use_dist_term ? dist_loss(candidate, original, normalize) : 0.0;
  out.nonlang = nonlang_loss(candidate);
  out.total = out.task + weights.lambda * out.dist + weights.gamma * out.nonlang;
  out.batch_size = batch_size;
  return out;
}

/// Token-only objective: one minus the task metric on the decoded output.
inline double token_only_loss(const std::string& decoded, const TaskExample& example,
                              TokenMetric metric) {
  if (metric == TokenMetric::choice_accuracy) {
    if (!example.choice_set || example.choice_set->empty()) {
      throw Error(ErrorCode::MissingReference, "choice_accuracy needs a choice set");
    }
  } else if (example.reference_text.empty()) {
    throw Error(ErrorCode::MissingReference, "metric needs reference_text");
  }
  return 1.0 - metric_score(metric, decoded, example);
}

}  // namespace promptlock

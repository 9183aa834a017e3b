#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "promptlock/core.hpp"
#include "promptlock/digest.hpp"
#include "promptlock/errors.hpp"

namespace promptlock {

enum class BackendKind { http_logprob, http_token_only, synthetic_oracle };

inline const char* to_string(BackendKind k) {
  switch (k) {
    case BackendKind::http_logprob: return "http_logprob";
    case BackendKind::http_token_only: return "http_token_only";
    case BackendKind::synthetic_oracle: return "synthetic_oracle";
  }
  return "unknown";
}

inline BackendKind backend_kind_from_string(const std::string& s) {
  if (s == "http_logprob") return BackendKind::http_logprob;
  if (s == "http_token_only") return BackendKind::http_token_only;
  if (s == "synthetic_oracle") return BackendKind::synthetic_oracle;
  throw Error(ErrorCode::InvalidConfig, "unknown backend kind '" + s + "'");
}

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{250};
};

struct BackendDescriptor {
  std::string id;
  BackendKind kind = BackendKind::synthetic_oracle;
  std::string endpoint;    ///< http kinds only
  std::string model_name;  ///< http kinds only
  int top_k = 10;          ///< provider cap: at most 20
  std::chrono::milliseconds request_timeout{30000};
  int max_parallel = 1;
  RetryPolicy retry;

  void validate() const {
    if (id.empty()) throw Error(ErrorCode::InvalidConfig, "backend id is empty");
    if (top_k < 1 || top_k > 20) throw Error(ErrorCode::InvalidConfig, "top_k must be in [1,20]");
    if (max_parallel < 1) throw Error(ErrorCode::InvalidConfig, "max_parallel must be >= 1");
    if (retry.max_attempts < 1) throw Error(ErrorCode::InvalidConfig, "max_attempts must be >= 1");
    if ((kind == BackendKind::http_logprob || kind == BackendKind::http_token_only) &&
        endpoint.empty()) {
      throw Error(ErrorCode::InvalidConfig, "http backend needs an endpoint");
    }
  }
};

struct DecodeSpec {
  bool greedy = true;
  double temperature = 0.0;

  static DecodeSpec greedy_decode() { return {true, 0.0}; }
  static DecodeSpec sampled(double t) { return {false, t}; }
};

/// Uniform scoring/generation handle. Implementations must be safe for
/// concurrent use up to descriptor().max_parallel in-flight calls.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual const BackendDescriptor& descriptor() const = 0;

  /// One TopKRecord per label position for (system=prompt, user=query).
  virtual std::vector<TopKRecord> score_labels(const std::string& prompt,
                                               const TaskExample& example, int k) = 0;

  /// Decoded completion for (system=prompt, user=query). An empty prompt
  /// sends the query alone, with no system message.
  virtual std::string generate(const std::string& prompt, const std::string& query,
                               const DecodeSpec& decode) = 0;
};

using BackendPtr = std::shared_ptr<Backend>;

// ---------------------------------------------------------------------------
// Synthetic oracle
// ---------------------------------------------------------------------------

/// Desk-scale stand-in for a target model. All behavior is a function of the
/// byte-trigram overlap between the prompt and a hidden key, so prompts
/// optimized against one key are useless against another — a deterministic
/// model of cross-model non-portability.
struct OracleSpec {
  std::string hidden_key;
  std::uint64_t seed = 0;
  double sharpness = 10.0;
  double presence_threshold = 0.05;
  double generation_threshold = 0.5;

  void validate() const {
    if (hidden_key.size() < 8) throw Error(ErrorCode::InvalidConfig, "hidden_key must be >= 8 chars");
    if (!(sharpness > 0.0)) throw Error(ErrorCode::InvalidConfig, "sharpness must be positive");
    auto in01 = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in01(presence_threshold) || !in01(generation_threshold)) {
      throw Error(ErrorCode::InvalidConfig, "oracle thresholds must lie in (0,1)");
    }
  }
};

inline void to_json(json& j, const OracleSpec& s) {
  j = json{{"hidden_key", s.hidden_key},
           {"seed", s.seed},
           {"sharpness", s.sharpness},
           {"presence_threshold", s.presence_threshold},
           {"generation_threshold", s.generation_threshold}};
}

inline void from_json(const json& j, OracleSpec& s) {
  s.hidden_key = j.at("hidden_key").get<std::string>();
  s.seed = j.value("seed", std::uint64_t{0});
  s.sharpness = j.value("sharpness", 10.0);
  s.presence_threshold = j.value("presence_threshold", 0.05);
  s.generation_threshold = j.value("generation_threshold", 0.5);
  s.validate();
}

inline std::set<std::string> byte_trigrams(std::string_view text) {
  std::set<std::string> out;
  if (text.size() < 3) return out;
  for (std::size_t i = 0; i + 3 <= text.size(); ++i) out.insert(std::string(text.substr(i, 3)));
  return out;
}

/// Fraction of the hidden key's distinct byte trigrams present in the prompt.
inline double oracle_similarity(const OracleSpec& spec, std::string_view prompt) {
  const auto key_tris = byte_trigrams(spec.hidden_key);
  if (key_tris.empty()) return 0.0;
  const auto prompt_tris = byte_trigrams(prompt);
  std::size_t hits = 0;
  for (const auto& t : key_tris) hits += prompt_tris.count(t);
  return static_cast<double>(hits) / static_cast<double>(key_tris.size());
}

/// The oracle's canonical reply to a query. Depends on the query alone (not
/// the key), so one dataset serves every oracle: above-threshold prompts all
/// produce this answer, below-threshold prompts produce the refusal string.
inline std::string oracle_answer(std::string_view query) {
  const std::uint64_t h = fnv1a64(query);
  static const char* hex = "0123456789abcdef";
  std::string out = "ans-";
  for (int i = 60; i >= 16; i -= 4) out.push_back(hex[(h >> i) & 0xf]);
  return out;
}

inline constexpr const char* kOracleRefusal = "UNINTERPRETABLE INPUT";

class OracleBackend final : public Backend {
 public:
  OracleBackend(BackendDescriptor descriptor, OracleSpec spec)
      : descriptor_(std::move(descriptor)), spec_(std::move(spec)) {
    descriptor_.validate();
    spec_.validate();
  }

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  const OracleSpec& spec() const { return spec_; }

  std::vector<TopKRecord> score_labels(const std::string& prompt, const TaskExample& example,
                                       int k) override {
    if (example.label_tokens.empty()) throw Error(ErrorCode::EmptyLabels, "example has no label tokens");
    if (k < 1 || k > descriptor_.top_k) {
      throw Error(ErrorCode::InvalidConfig, "k exceeds backend top_k cap");
    }
    const double s = oracle_similarity(spec_, prompt);
    const double label_lp = -spec_.sharpness * (1.0 - s);
    const bool label_present = s >= spec_.presence_threshold;

    std::vector<TopKRecord> records;
    records.reserve(example.label_tokens.size());
    for (std::size_t pos = 0; pos < example.label_tokens.size(); ++pos) {
      TopKRecord rec;
      rec.position = pos;
      const std::string& label = example.label_tokens[pos];
      if (label_present) rec.entries.push_back({label, label_lp});
      // Deterministic fillers, strictly below the label and strictly
      // decreasing so the record is sorted with no ties.
      const int fillers = k - (label_present ? 1 : 0);
      for (int rank = 0; rank < fillers; ++rank) {
        rec.entries.push_back(
            {filler_token(pos, rank, label), label_lp - 0.25 * static_cast<double>(rank + 1)});
      }
      rec.validate();
      records.push_back(std::move(rec));
    }
    return records;
  }

  std::string generate(const std::string& prompt, const std::string& query,
                       const DecodeSpec& /*decode*/) override {
    const double s = oracle_similarity(spec_, prompt);
    return s >= spec_.generation_threshold ? oracle_answer(query) : kOracleRefusal;
  }

 private:
  std::string filler_token(std::size_t position, int rank, const std::string& label) const {
    std::string seed_material = spec_.hidden_key;
    seed_material += '\x1f';
    seed_material += std::to_string(spec_.seed);
    seed_material += '\x1f';
    seed_material += std::to_string(position);
    seed_material += '\x1f';
    seed_material += std::to_string(rank);
    const std::uint64_t h = fnv1a64(seed_material);
    static const char* hex = "0123456789abcdef";
    std::string tok = "tk";
    for (int i = 60; i >= 40; i -= 4) tok.push_back(hex[(h >> i) & 0xf]);
    tok += std::to_string(rank);
    if (tok == label) tok += "_f";
    return tok;
  }

  BackendDescriptor descriptor_;
  OracleSpec spec_;
};

// ---------------------------------------------------------------------------
// HTTP chat-completions backend
// ---------------------------------------------------------------------------

/// Blocks while more than `limit` requests are in flight.
class RequestGate {
 public:
  explicit RequestGate(int limit) : limit_(limit) {}

  void acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
  }

  void release() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      --in_flight_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int in_flight_ = 0;
};

/// Environment variable name for a backend credential: the id uppercased
/// with non-alphanumerics mapped to underscores, e.g. "gpt-4o" -> "GPT_4O".
inline std::string env_prefix_for(const std::string& backend_id) {
  std::string out;
  out.reserve(backend_id.size());
  for (char ch : backend_id) {
    const unsigned char c = static_cast<unsigned char>(ch);
    out.push_back(std::isalnum(c) ? static_cast<char>(std::toupper(c)) : '_');
  }
  return out;
}

/// Adapter for the de facto chat-completions wire format: system/user
/// messages, `logprobs` + `top_logprobs` for scoring. Credentials come only
/// from <ID>_API_KEY; <ID>_BASE_URL overrides the configured endpoint.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(BackendDescriptor descriptor)
      : descriptor_(std::move(descriptor)), gate_(std::max(1, descriptor_.max_parallel)) {
    descriptor_.validate();
    std::string endpoint = descriptor_.endpoint;
    const std::string prefix = env_prefix_for(descriptor_.id);
    if (const char* base = std::getenv((prefix + "_BASE_URL").c_str())) endpoint = base;
    if (const char* key = std::getenv((prefix + "_API_KEY").c_str())) api_key_ = key;
    split_endpoint(endpoint, host_, path_);
  }

  const BackendDescriptor& descriptor() const override { return descriptor_; }

  std::vector<TopKRecord> score_labels(const std::string& prompt, const TaskExample& example,
                                       int k) override {
    if (example.label_tokens.empty()) throw Error(ErrorCode::EmptyLabels, "example has no label tokens");
    if (k < 1 || k > descriptor_.top_k) {
      throw Error(ErrorCode::InvalidConfig, "k exceeds backend top_k cap");
    }
    if (descriptor_.kind == BackendKind::http_token_only) {
      throw Error(ErrorCode::LogprobsUnsupported, "backend '" + descriptor_.id + "' is token-only");
    }

    json body = request_body(prompt, example.query, 0.0);
    body["logprobs"] = true;
    body["top_logprobs"] = k;
    body["max_tokens"] = static_cast<int>(example.label_tokens.size());

    const json response = post_with_retries(body);
    const json& choice = first_choice(response);
    if (!choice.contains("logprobs") || choice.at("logprobs").is_null() ||
        !choice.at("logprobs").contains("content")) {
      throw Error(ErrorCode::LogprobsUnsupported,
                  "backend '" + descriptor_.id + "' returned no logprobs");
    }
    const json& content = choice.at("logprobs").at("content");

    std::vector<TopKRecord> records;
    records.reserve(example.label_tokens.size());
    for (std::size_t pos = 0; pos < example.label_tokens.size(); ++pos) {
      TopKRecord rec;
      rec.position = pos;
      if (pos < content.size()) {
        for (const auto& entry : content.at(pos).value("top_logprobs", json::array())) {
          TokenLogprob tl{entry.at("token").get<std::string>(), entry.at("logprob").get<double>()};
          // Providers occasionally report tiny positive values; clamp.
          if (tl.logprob > 0.0) tl.logprob = 0.0;
          bool dup = false;
          for (const auto& seen : rec.entries) dup = dup || seen.token == tl.token;
          if (!dup) rec.entries.push_back(std::move(tl));
        }
        std::stable_sort(rec.entries.begin(), rec.entries.end(),
                         [](const TokenLogprob& a, const TokenLogprob& b) {
                           return a.logprob > b.logprob;
                         });
        if (rec.entries.size() > static_cast<std::size_t>(k)) rec.entries.resize(k);
      }
      rec.validate();
      records.push_back(std::move(rec));
    }
    return records;
  }

  std::string generate(const std::string& prompt, const std::string& query,
                       const DecodeSpec& decode) override {
    const json body = request_body(prompt, query, decode.greedy ? 0.0 : decode.temperature);
    const json response = post_with_retries(body);
    const json& choice = first_choice(response);
    if (!choice.contains("message") || !choice.at("message").contains("content") ||
        choice.at("message").at("content").is_null()) {
      throw Error(ErrorCode::ProviderRefusal, "response carries no message content");
    }
    return choice.at("message").at("content").get<std::string>();
  }

 private:
  static void split_endpoint(const std::string& endpoint, std::string& host, std::string& path) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
      throw Error(ErrorCode::InvalidConfig, "endpoint must include a scheme: " + endpoint);
    }
    const auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      host = endpoint;
      path = "/v1/chat/completions";
    } else {
      host = endpoint.substr(0, path_start);
      path = endpoint.substr(path_start);
    }
  }

  json request_body(const std::string& prompt, const std::string& query, double temperature) const {
    json messages = json::array();
    if (!prompt.empty()) messages.push_back({{"role", "system"}, {"content", prompt}});
    messages.push_back({{"role", "user"}, {"content", query}});
    return json{{"model", descriptor_.model_name},
                {"messages", messages},
                {"temperature", temperature}};
  }

  static const json& first_choice(const json& response) {
    if (!response.contains("choices") || response.at("choices").empty()) {
      throw Error(ErrorCode::ProviderRefusal, "response carries no choices");
    }
    return response.at("choices").at(0);
  }

  json post_with_retries(const json& body) {
    const std::string payload = body.dump();
    std::string last_error = "transport failure";
    for (int attempt = 0; attempt < descriptor_.retry.max_attempts; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(descriptor_.retry.backoff_base * (1 << (attempt - 1)));
      }
      gate_.acquire();
      httplib::Client client(host_);
      client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(
          descriptor_.request_timeout));
      client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(
          descriptor_.request_timeout));
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
      auto result = client.Post(path_, headers, payload, "application/json");
      gate_.release();

      if (!result) {
        last_error = "connection failed: " + httplib::to_string(result.error());
        continue;
      }
      if (result->status >= 200 && result->status < 300) {
        try {
          return json::parse(result->body);
        } catch (const json::exception& e) {
          throw Error(ErrorCode::TransportError, std::string("unparseable response: ") + e.what());
        }
      }
      if (result->status == 408 || result->status == 429 || result->status >= 500) {
        last_error = "retryable status " + std::to_string(result->status);
        continue;
      }
      throw Error(ErrorCode::ProviderRefusal,
                  "status " + std::to_string(result->status) + ": " + result->body);
    }
    throw Error(ErrorCode::TransportError, last_error + " after " +
                                               std::to_string(descriptor_.retry.max_attempts) +
                                               " attempts");
  }

  BackendDescriptor descriptor_;
  std::string host_;
  std::string path_;
  std::string api_key_;
  RequestGate gate_;
};

// ---------------------------------------------------------------------------
// Call counting and registry
// ---------------------------------------------------------------------------

/// Pass-through wrapper that tallies backend calls; optimizer and attacks use
/// it to report their budgets.
class CallCountingBackend final : public Backend {
 public:
  explicit CallCountingBackend(BackendPtr inner) : inner_(std::move(inner)) {}

  const BackendDescriptor& descriptor() const override { return inner_->descriptor(); }

  std::vector<TopKRecord> score_labels(const std::string& prompt, const TaskExample& example,
                                       int k) override {
    ++score_calls_;
    return inner_->score_labels(prompt, example, k);
  }

  std::string generate(const std::string& prompt, const std::string& query,
                       const DecodeSpec& decode) override {
    ++generate_calls_;
    return inner_->generate(prompt, query, decode);
  }

  std::uint64_t score_calls() const { return score_calls_.load(); }
  std::uint64_t generate_calls() const { return generate_calls_.load(); }
  std::uint64_t total_calls() const { return score_calls() + generate_calls(); }

 private:
  BackendPtr inner_;
  std::atomic<std::uint64_t> score_calls_{0};
  std::atomic<std::uint64_t> generate_calls_{0};
};

inline BackendDescriptor descriptor_from_json(const json& j) {
  BackendDescriptor d;
  d.id = j.at("id").get<std::string>();
  d.kind = backend_kind_from_string(j.at("kind").get<std::string>());
  d.endpoint = j.value("endpoint", std::string{});
  d.model_name = j.value("model", std::string{});
  d.top_k = j.value("top_k", 10);
  d.request_timeout = std::chrono::milliseconds(j.value("request_timeout_ms", 30000));
  d.max_parallel = j.value("max_parallel", 1);
  d.retry.max_attempts = j.value("retry_max_attempts", 3);
  d.retry.backoff_base = std::chrono::milliseconds(j.value("retry_backoff_ms", 250));
  d.validate();
  return d;
}

inline BackendPtr make_backend(const json& entry) {
  const BackendDescriptor d = descriptor_from_json(entry);
  if (d.kind == BackendKind::synthetic_oracle) {
    if (!entry.contains("oracle")) {
      throw Error(ErrorCode::InvalidConfig, "synthetic_oracle entry needs an 'oracle' spec");
    }
    return std::make_shared<OracleBackend>(d, entry.at("oracle").get<OracleSpec>());
  }
  return std::make_shared<HttpBackend>(d);
}

/// Backend registry file: {"backends": [<descriptor>, ...]}.
class BackendRegistry {
 public:
  static BackendRegistry from_json(const json& j) {
    BackendRegistry reg;
    for (const auto& entry : j.at("backends")) {
      BackendPtr backend = make_backend(entry);
      const std::string id = backend->descriptor().id;
      if (reg.backends_.count(id)) {
        throw Error(ErrorCode::InvalidConfig, "duplicate backend id '" + id + "'");
      }
      reg.backends_.emplace(id, std::move(backend));
    }
    return reg;
  }

  BackendPtr get(const std::string& id) const {
    auto it = backends_.find(id);
    if (it == backends_.end()) {
      throw Error(ErrorCode::InvalidConfig, "backend '" + id + "' is not registered");
    }
    return it->second;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(backends_.size());
    for (const auto& [id, _] : backends_) out.push_back(id);
    return out;
  }

 private:
  std::map<std::string, BackendPtr> backends_;
};

}  // namespace promptlock

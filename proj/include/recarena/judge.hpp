#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recarena/corpus.hpp"
#include "recarena/promptkit.hpp"

namespace recarena::judge {

/// Invalid provider configuration, e.g. a missing API key. Raised before
/// any request is sent.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Transport failure after retries were exhausted. `status` is the last
/// HTTP status seen, or 0 when no response arrived at all.
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, int status, int retries)
      : std::runtime_error(what), status_(status), retries_(retries) {}
  int status() const { return status_; }
  int retries() const { return retries_; }

 private:
  int status_;
  int retries_;
};

/// The provider answered but the answer is unusable (non-retryable status,
/// malformed body, empty content).
class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BackoffPolicy {
  std::chrono::milliseconds initial{1000};
  double factor = 2.0;
  double jitter = 0.2;  // +/- fraction of the nominal delay
  std::chrono::milliseconds cap{60000};

  /// Nominal delay before retry number `attempt` (0-based), without jitter.
  std::chrono::milliseconds nominal_delay(int attempt) const;
};

struct ProviderConfig {
  /// "mock" or "openai" (any chat-completions compatible endpoint).
  std::string provider = "mock";
  std::string base_url = "https://api.openai.com/v1";
  std::string model_id = "gpt-4o";
  double temperature = 0.0;
  std::chrono::seconds timeout{120};
  int max_in_flight = 4;
  int max_retries = 5;
  std::string api_key_env = "OPENAI_API_KEY";
  BackoffPolicy backoff;

  bool is_mock() const { return provider == "mock"; }
  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const ProviderConfig& cfg);
/// Fields absent from `obj` keep their values from `base`.
ProviderConfig provider_config_from_json(const nlohmann::json& obj, ProviderConfig base = {});

struct ProviderMeta {
  std::string model_id;
  std::int64_t latency_ms = 0;
  int retry_count = 0;
  bool cache_hit = false;
};

struct RawJudgment {
  /// Cache key of the request (see cache_key()).
  std::string bundle_hash;
  std::string response_text;
  ProviderMeta provider_meta;
};

nlohmann::json to_json(const ProviderMeta& meta);

/// SHA-256 over mode, model id, temperature and prompt text.
std::string cache_key(const promptkit::PromptBundle& bundle, const ProviderConfig& cfg);

/// Directory of raw response documents at {dir}/{key[0:2]}/{key}.json.
/// Safe for concurrent writers: entries are written to a temp file and
/// renamed into place.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<nlohmann::json> get(const std::string& key) const;
  void put(const std::string& key, const nlohmann::json& value) const;
  std::filesystem::path path_for(const std::string& key) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

/// Text of choices[0].message.content in a chat-completions response.
std::string extract_completion_text(const nlohmann::json& response);

/// Chat-completion response shape wrapping `text`; used for mock entries so
/// every cache file has the same layout.
nlohmann::json make_completion_document(const std::string& model_id, const std::string& text);

/// Deterministic stand-in for the LLM. Per dimension, the list whose items
/// have the higher mean Jaccard overlap with the user's history categories
/// wins; the overall verdict is the majority over dimensions. The winner is
/// reported by prompt position, as a real judge would.
RawJudgment mock_judge(const promptkit::PromptBundle& bundle, const Corpus& corpus);

/// Mean over list items of Jaccard(item categories, union of the user's
/// label-1 history categories).
double history_overlap(const std::vector<std::string>& items, std::string_view user_id,
                       const Corpus& corpus);

/// Performs one chat-completions call (with retries) and returns the raw
/// response document. Injected into Judge so tests can script failures.
using Transport = std::function<nlohmann::json(const std::string& prompt, int& retries)>;

/// Default transport: HTTP POST to {base_url}/chat/completions.
Transport make_http_transport(const ProviderConfig& cfg);

class Judge {
 public:
  /// `corpus` is required for the mock provider. `cache` may be null.
  Judge(ProviderConfig cfg, const Corpus* corpus, std::shared_ptr<const ResponseCache> cache);
  /// Custom transport for non-mock providers.
  Judge(ProviderConfig cfg, Transport transport, std::shared_ptr<const ResponseCache> cache);

  RawJudgment judge_pair(const promptkit::PromptBundle& bundle) const;
  RawJudgment judge_absolute(const promptkit::PromptBundle& bundle) const;
  /// Dispatches on bundle.mode.
  RawJudgment judge(const promptkit::PromptBundle& bundle) const;

  const ProviderConfig& config() const { return cfg_; }

 private:
  ProviderConfig cfg_;
  const Corpus* corpus_ = nullptr;
  Transport transport_;
  std::shared_ptr<const ResponseCache> cache_;
};

struct BatchResult {
  std::optional<RawJudgment> judgment;
  std::string error;  // set when judgment is empty
};

struct BatchSummary {
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::size_t cached = 0;
};

struct BatchOutput {
  std::vector<BatchResult> results;  // same order as the input bundles
  BatchSummary summary;
};

/// Judges every bundle with at most cfg.max_in_flight calls outstanding.
/// Failures are recorded per bundle; the batch never aborts.
BatchOutput run_batch(const std::vector<promptkit::PromptBundle>& bundles, const Judge& judge);

}  // namespace recarena::judge

#include "recarena/judge.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <random>
#include <set>
#include <thread>

#include <httplib.h>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "recarena/util.hpp"

namespace recarena::judge {

using nlohmann::json;
using promptkit::JudgeMode;
using promptkit::PromptBundle;

std::chrono::milliseconds BackoffPolicy::nominal_delay(int attempt) const {
  double ms = static_cast<double>(initial.count()) * std::pow(factor, attempt);
  ms = std::min(ms, static_cast<double>(cap.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

void ProviderConfig::validate() const {
  if (provider != "mock" && provider != "openai") {
    throw ConfigError("unknown provider '" + provider + "' (expected mock or openai)");
  }
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (timeout.count() <= 0) throw ConfigError("timeout must be positive");
  if (!is_mock() && model_id.empty()) throw ConfigError("model_id is required");
  if (!is_mock() && base_url.empty()) throw ConfigError("base_url is required");
}

json to_json(const ProviderConfig& cfg) {
  return json{{"provider", cfg.provider},
              {"base_url", cfg.base_url},
              {"model_id", cfg.model_id},
              {"temperature", cfg.temperature},
              {"timeout_s", cfg.timeout.count()},
              {"max_in_flight", cfg.max_in_flight},
              {"max_retries", cfg.max_retries},
              {"api_key_env", cfg.api_key_env}};
}

ProviderConfig provider_config_from_json(const json& obj, ProviderConfig base) {
  try {
    if (obj.contains("provider")) base.provider = obj.at("provider").get<std::string>();
    if (obj.contains("base_url")) base.base_url = obj.at("base_url").get<std::string>();
    if (obj.contains("model_id")) base.model_id = obj.at("model_id").get<std::string>();
    if (obj.contains("temperature")) base.temperature = obj.at("temperature").get<double>();
    if (obj.contains("timeout_s")) base.timeout = std::chrono::seconds(obj.at("timeout_s").get<int>());
    if (obj.contains("max_in_flight")) base.max_in_flight = obj.at("max_in_flight").get<int>();
    if (obj.contains("max_retries")) base.max_retries = obj.at("max_retries").get<int>();
    if (obj.contains("api_key_env")) base.api_key_env = obj.at("api_key_env").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid provider config: ") + e.what());
  }
  return base;
}

json to_json(const ProviderMeta& meta) {
  return json{{"model_id", meta.model_id},
              {"latency_ms", meta.latency_ms},
              {"retry_count", meta.retry_count},
              {"cache_hit", meta.cache_hit}};
}

std::string cache_key(const PromptBundle& bundle, const ProviderConfig& cfg) {
  // Temperature enters at full precision so 0.0 and 1e-9 differ.
  std::string keyed = fmt::format("mode={}\nmodel={}\ntemperature={:.17g}\n",
                                  promptkit::to_string(bundle.mode),
                                  cfg.is_mock() ? std::string("mock") : cfg.model_id,
                                  cfg.temperature);
  keyed += bundle.prompt_text;
  return util::sha256_hex(keyed);
}

// --- cache ------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<json> ResponseCache::get(const std::string& key) const {
  auto path = path_for(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    return json::parse(util::read_file(path));
  } catch (const std::exception& e) {
    spdlog::warn("ignoring unreadable cache entry {}: {}", path.string(), e.what());
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& key, const json& value) const {
  util::write_file_atomic(path_for(key), value.dump(1) + "\n");
}

std::string extract_completion_text(const json& response) {
  try {
    const auto& content = response.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed chat-completions response: ") + e.what());
  }
}

json make_completion_document(const std::string& model_id, const std::string& text) {
  return json{{"object", "chat.completion"},
              {"model", model_id},
              {"choices", json::array({json{{"index", 0},
                                             {"message", {{"role", "assistant"}, {"content", text}}},
                                             {"finish_reason", "stop"}}})}};
}

// --- mock judge -------------------------------------------------------------

double history_overlap(const std::vector<std::string>& items, std::string_view user_id,
                       const Corpus& corpus) {
  if (items.empty()) return 0.0;
  std::set<std::string> profile;
  for (const auto* x : corpus.positive_history(user_id)) {
    const auto& cats = corpus.item(x->item_id).categories;
    profile.insert(cats.begin(), cats.end());
  }
  double total = 0.0;
  for (const auto& id : items) {
    const auto& cats = corpus.item(id).categories;
    std::size_t inter = 0;
    for (const auto& c : cats) inter += profile.count(c);
    std::size_t uni = cats.size() + profile.size() - inter;
    total += uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return total / static_cast<double>(items.size());
}

namespace {

constexpr double kMockTieTolerance = 1e-9;

std::string outcome_label(double a, double b) {
  if (std::fabs(a - b) <= kMockTieTolerance) return "tie";
  return a > b ? "A" : "B";
}

std::string outcome_sentence(const std::string& label) {
  if (label == "A") return "A wins.";
  if (label == "B") return "B wins.";
  return "Tie.";
}

std::string mock_pair_response(const PromptBundle& bundle, const Corpus& corpus) {
  const double score_a = history_overlap(bundle.positional_a(), bundle.user_id, corpus);
  const double score_b = history_overlap(bundle.positional_b(), bundle.user_id, corpus);

  std::string text;
  json dims = json::object();
  int wins_a = 0;
  int wins_b = 0;
  for (const auto& key : bundle.dimension_keys) {
    const std::string label = outcome_label(score_a, score_b);
    wins_a += label == "A";
    wins_b += label == "B";
    dims[key] = label;
    text += fmt::format(
        "### {}\nSystem A's items overlap {:.4f} with my viewing history, System B's items "
        "overlap {:.4f}. {}\n\n",
        promptkit::Dimension{key, "-"}.display_name(), score_a, score_b, outcome_sentence(label));
  }
  const std::string overall = wins_a > wins_b ? "A" : (wins_b > wins_a ? "B" : "tie");
  text += fmt::format("### Overall\nA wins {} aspects, B wins {} aspects. {}\n\n", wins_a, wins_b,
                      outcome_sentence(overall));
  json verdict{{"dimensions", dims}, {"overall", overall}};
  text += "```json\n" + verdict.dump() + "\n```\n";
  return text;
}

std::string mock_absolute_response(const PromptBundle& bundle, const Corpus& corpus) {
  const double score = history_overlap(bundle.items_a, bundle.user_id, corpus);
  std::string text = fmt::format(
      "The list overlaps {:.4f} with the categories of my viewing history.\n\n", score);
  text += "```json\n" + json{{"score", score}}.dump() + "\n```\n";
  return text;
}

}  // namespace

RawJudgment mock_judge(const PromptBundle& bundle, const Corpus& corpus) {
  RawJudgment raw;
  raw.bundle_hash = bundle.content_hash;
  raw.response_text = bundle.mode == JudgeMode::kPair ? mock_pair_response(bundle, corpus)
                                                      : mock_absolute_response(bundle, corpus);
  raw.provider_meta.model_id = "mock";
  return raw;
}

// --- HTTP transport ---------------------------------------------------------

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash
};

Endpoint split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + base_url);
  auto path_start = base_url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.origin = base_url.substr(0, path_start);
  ep.path = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!ep.path.empty() && ep.path.back() == '/') ep.path.pop_back();
  return ep;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

Transport make_http_transport(const ProviderConfig& cfg) {
  const char* key = std::getenv(cfg.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError("API key environment variable '" + cfg.api_key_env + "' is not set");
  }
  auto endpoint = split_base_url(cfg.base_url);
  return [cfg, endpoint, api_key = std::string(key)](const std::string& prompt, int& retries) {
    json body{{"model", cfg.model_id},
              {"temperature", cfg.temperature},
              {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})}};
    const std::string payload = body.dump();
    const std::string path = endpoint.path + "/chat/completions";

    httplib::Client client(endpoint.origin);
    client.set_connection_timeout(cfg.timeout);
    client.set_read_timeout(cfg.timeout);
    client.set_write_timeout(cfg.timeout);
    client.set_bearer_token_auth(api_key);

    thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
    int last_status = 0;
    std::string last_error;
    for (int attempt = 0;; ++attempt) {
      auto res = client.Post(path, payload, "application/json");
      if (res) {
        last_status = res->status;
        if (res->status >= 200 && res->status < 300) {
          try {
            return json::parse(res->body);
          } catch (const json::parse_error& e) {
            throw ProviderError(std::string("response body is not JSON: ") + e.what());
          }
        }
        if (!retryable_status(res->status)) {
          throw ProviderError(fmt::format("HTTP {} from {}: {}", res->status, cfg.base_url,
                                          res->body.substr(0, 500)));
        }
        last_error = fmt::format("HTTP {}", res->status);
      } else {
        last_error = httplib::to_string(res.error());
      }
      if (attempt >= cfg.max_retries) break;

      auto nominal = cfg.backoff.nominal_delay(attempt);
      std::uniform_real_distribution<double> jitter(1.0 - cfg.backoff.jitter, 1.0 + cfg.backoff.jitter);
      auto delay = std::chrono::milliseconds(
          static_cast<std::int64_t>(static_cast<double>(nominal.count()) * jitter(jitter_rng)));
      spdlog::debug("retrying after {} ({} ms)", last_error, delay.count());
      std::this_thread::sleep_for(delay);
      ++retries;
    }
    throw TransportError(fmt::format("request failed after {} retries: {}", retries, last_error),
                         last_status, retries);
  };
}

// --- Judge ------------------------------------------------------------------

Judge::Judge(ProviderConfig cfg, const Corpus* corpus, std::shared_ptr<const ResponseCache> cache)
    : cfg_(std::move(cfg)), corpus_(corpus), cache_(std::move(cache)) {
  cfg_.validate();
  if (cfg_.is_mock()) {
    if (corpus_ == nullptr) throw ConfigError("the mock provider needs a corpus");
  } else {
    transport_ = make_http_transport(cfg_);
  }
}

Judge::Judge(ProviderConfig cfg, Transport transport, std::shared_ptr<const ResponseCache> cache)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), cache_(std::move(cache)) {
  cfg_.validate();
  if (cfg_.is_mock()) throw ConfigError("a custom transport cannot be combined with the mock provider");
  if (!transport_) throw ConfigError("transport is empty");
}

RawJudgment Judge::judge(const PromptBundle& bundle) const {
  const std::string key = cache_key(bundle, cfg_);
  const std::string model = cfg_.is_mock() ? "mock" : cfg_.model_id;

  if (cache_) {
    if (auto hit = cache_->get(key)) {
      RawJudgment raw{key, extract_completion_text(*hit), {model, 0, 0, true}};
      if (raw.response_text.empty()) throw ProviderError("cached response is empty");
      return raw;
    }
  }

  RawJudgment raw;
  raw.bundle_hash = key;
  raw.provider_meta.model_id = model;
  json document;
  if (cfg_.is_mock()) {
    document = make_completion_document(model, mock_judge(bundle, *corpus_).response_text);
  } else {
    auto start = std::chrono::steady_clock::now();
    int retries = 0;
    document = transport_(bundle.prompt_text, retries);
    raw.provider_meta.retry_count = retries;
    raw.provider_meta.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                       std::chrono::steady_clock::now() - start)
                                       .count();
  }
  raw.response_text = extract_completion_text(document);
  if (raw.response_text.empty()) throw ProviderError("provider returned an empty response");
  if (cache_) cache_->put(key, document);
  return raw;
}

RawJudgment Judge::judge_pair(const PromptBundle& bundle) const {
  if (bundle.mode != JudgeMode::kPair) throw std::invalid_argument("judge_pair needs a pair bundle");
  return judge(bundle);
}

RawJudgment Judge::judge_absolute(const PromptBundle& bundle) const {
  if (bundle.mode != JudgeMode::kAbsolute) {
    throw std::invalid_argument("judge_absolute needs an absolute bundle");
  }
  return judge(bundle);
}

// --- batch ------------------------------------------------------------------

BatchOutput run_batch(const std::vector<PromptBundle>& bundles, const Judge& judge) {
  BatchOutput out;
  out.results.resize(bundles.size());
  if (bundles.empty()) return out;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < bundles.size(); i = next++) {
      try {
        out.results[i].judgment = judge.judge(bundles[i]);
      } catch (const std::exception& e) {
        out.results[i].error = e.what();
      }
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(judge.config().max_in_flight),
                                             bundles.size());
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  for (const auto& r : out.results) {
    if (r.judgment) {
      ++out.summary.ok;
      if (r.judgment->provider_meta.cache_hit) ++out.summary.cached;
    } else {
      ++out.summary.failed;
    }
  }
  return out;
}

}  // namespace recarena::judge

#include "recarena/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "recarena/arena.hpp"
#include "recarena/corpus.hpp"
#include "recarena/judge.hpp"
#include "recarena/metrics.hpp"
#include "recarena/promptkit.hpp"
#include "recarena/util.hpp"
#include "recarena/verdict.hpp"

#ifndef RECARENA_DATA_DIR
#define RECARENA_DATA_DIR "data"
#endif

namespace recarena::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Input or configuration problem; maps to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- shared run configuration -----------------------------------------------

struct RunConfig {
  std::string corpus;
  judge::ProviderConfig provider;
  std::string dimensions;
  std::string template_path;
  std::size_t k = 5;
  std::size_t sample = 0;
  std::uint64_t seed = 0;
  std::string cache_dir;
  std::string debias = "none";
  std::string output_dir;
  std::size_t max_history = 50;
  std::size_t char_budget = 60000;
  bool include_abstract = false;
  double unparseable_threshold = 0.5;
  bool retry_unparseable = false;
};

json to_json(const RunConfig& c) {
  return json{{"corpus", c.corpus},
              {"provider", judge::to_json(c.provider)},
              {"dimensions", c.dimensions},
              {"template", c.template_path},
              {"k", c.k},
              {"sample", c.sample},
              {"seed", c.seed},
              {"cache_dir", c.cache_dir},
              {"debias", c.debias},
              {"output_dir", c.output_dir},
              {"max_history", c.max_history},
              {"char_budget", c.char_budget},
              {"include_abstract", c.include_abstract},
              {"unparseable_threshold", c.unparseable_threshold},
              {"retry_unparseable", c.retry_unparseable}};
}

/// Copies config-file values into fields whose flag was not given.
class ConfigOverlay {
 public:
  ConfigOverlay(const CLI::App& app, json doc) : app_(app), doc_(std::move(doc)) {}

  template <typename T>
  void take(const std::string& flag, const std::string& key, T& target) const {
    if (!doc_.contains(key)) return;
    if (app_.count(flag) > 0) return;
    try {
      target = doc_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw InputError("config key '" + key + "': " + e.what());
    }
  }
  const json& doc() const { return doc_; }

 private:
  const CLI::App& app_;
  json doc_;
};

void add_provider_options(CLI::App& cmd, RunConfig& c, int& timeout_s) {
  cmd.add_option("--provider", c.provider.provider, "mock or openai")
      ->check(CLI::IsMember({"mock", "openai"}));
  cmd.add_option("--base-url", c.provider.base_url, "Chat-completions base URL");
  cmd.add_option("--model", c.provider.model_id, "Model id sent to the provider");
  cmd.add_option("--temperature", c.provider.temperature)->check(CLI::NonNegativeNumber);
  cmd.add_option("--timeout", timeout_s, "Request timeout in seconds")->check(CLI::PositiveNumber);
  cmd.add_option("--max-in-flight", c.provider.max_in_flight)->check(CLI::PositiveNumber);
  cmd.add_option("--max-retries", c.provider.max_retries)->check(CLI::NonNegativeNumber);
  cmd.add_option("--api-key-env", c.provider.api_key_env, "Environment variable holding the API key");
  cmd.add_option("--cache-dir", c.cache_dir, "Response cache directory");
}

void apply_config_file(const CLI::App& cmd, const std::string& path, RunConfig& c, int& timeout_s) {
  if (path.empty()) return;
  json doc;
  try {
    doc = json::parse(util::read_file(path));
  } catch (const std::exception& e) {
    throw InputError("cannot read config " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw InputError("config " + path + " must be a JSON object");
  ConfigOverlay o(cmd, doc);
  o.take("--corpus", "corpus", c.corpus);
  o.take("--dimensions", "dimensions", c.dimensions);
  o.take("--template", "template", c.template_path);
  o.take("--k", "k", c.k);
  o.take("--sample", "sample", c.sample);
  o.take("--seed", "seed", c.seed);
  o.take("--cache-dir", "cache_dir", c.cache_dir);
  o.take("--debias", "debias", c.debias);
  o.take("--output-dir", "output_dir", c.output_dir);
  o.take("--max-history", "max_history", c.max_history);
  o.take("--char-budget", "char_budget", c.char_budget);
  o.take("--include-abstract", "include_abstract", c.include_abstract);
  o.take("--unparseable-threshold", "unparseable_threshold", c.unparseable_threshold);
  o.take("--retry-unparseable", "retry_unparseable", c.retry_unparseable);
  if (doc.contains("provider")) {
    const auto& p = doc.at("provider");
    if (!p.is_object()) throw InputError("config key 'provider' must be an object");
    ConfigOverlay po(cmd, p);
    po.take("--provider", "provider", c.provider.provider);
    po.take("--base-url", "base_url", c.provider.base_url);
    po.take("--model", "model_id", c.provider.model_id);
    po.take("--temperature", "temperature", c.provider.temperature);
    po.take("--timeout", "timeout_s", timeout_s);
    po.take("--max-in-flight", "max_in_flight", c.provider.max_in_flight);
    po.take("--max-retries", "max_retries", c.provider.max_retries);
    po.take("--api-key-env", "api_key_env", c.provider.api_key_env);
  }
}

Corpus load_corpus(const std::string& path) {
  if (path.empty()) throw InputError("--corpus is required");
  if (!fs::exists(path)) throw InputError("corpus file not found: " + path);
  return read_corpus(path);
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw InputError(what + " is required");
  if (!fs::exists(path)) throw InputError(what + " not found: " + path);
}

/// Lists of one system keyed by user id. A file with several systems needs
/// `system_id` to pick one.
std::map<std::string, RecList> load_system(const std::string& path, const std::string& system_id,
                                           const Corpus& corpus) {
  require_file(path, "recommendation file");
  auto lists = read_rec_lists(path);
  std::set<std::string> systems;
  for (const auto& r : lists) systems.insert(r.system_id);
  std::string chosen = system_id;
  if (chosen.empty()) {
    if (systems.size() != 1) {
      throw InputError(path + " holds " + std::to_string(systems.size()) +
                       " systems; choose one with --a-id/--b-id");
    }
    chosen = *systems.begin();
  }
  std::map<std::string, RecList> out;
  for (auto& r : lists) {
    if (r.system_id != chosen) continue;
    validate_rec_list(r, corpus);
    if (!out.emplace(r.user_id, r).second) {
      throw InputError(path + ": system '" + chosen + "' has two lists for user '" + r.user_id + "'");
    }
  }
  if (out.empty()) throw InputError(path + ": no lists for system '" + chosen + "'");
  return out;
}

std::vector<std::string> sample_users(std::vector<std::string> users, std::size_t sample,
                                      std::uint64_t seed) {
  std::sort(users.begin(), users.end());
  if (sample == 0 || sample >= users.size()) return users;
  std::mt19937_64 rng(seed);
  util::stable_shuffle(users, rng);
  users.resize(sample);
  std::sort(users.begin(), users.end());
  return users;
}

struct PromptSetup {
  promptkit::DimensionRegistry dims;
  promptkit::PromptTemplate tmpl;
  promptkit::ProfileOptions profile;
  promptkit::PromptOptions prompt;
};

PromptSetup prompt_setup(const RunConfig& c, promptkit::JudgeMode mode) {
  PromptSetup s;
  s.dims = c.dimensions.empty() ? promptkit::DimensionRegistry::defaults()
                                : promptkit::DimensionRegistry::load(c.dimensions);
  if (!c.template_path.empty()) {
    s.tmpl = promptkit::PromptTemplate::load(c.template_path);
  } else {
    s.tmpl = mode == promptkit::JudgeMode::kPair ? promptkit::PromptTemplate::default_pairwise()
                                                 : promptkit::PromptTemplate::default_absolute();
  }
  s.profile.max_history = c.max_history;
  s.profile.include_abstract = c.include_abstract;
  s.prompt.include_abstract = c.include_abstract;
  s.prompt.char_budget = c.char_budget;
  return s;
}

std::shared_ptr<const judge::ResponseCache> open_cache(const RunConfig& c) {
  if (c.cache_dir.empty()) return nullptr;
  return std::make_shared<const judge::ResponseCache>(c.cache_dir);
}

void echo_config(const RunConfig& c, const std::string& command) {
  if (c.output_dir.empty()) return;
  json doc = to_json(c);
  doc["command"] = command;
  util::write_file_atomic(fs::path(c.output_dir) / "run_config.json", doc.dump(2) + "\n");
}

// Appended to the prompt when a response is re-requested after a parse failure.
constexpr std::string_view kRetryNote =
    "\nYour previous answer could not be read. Answer again and make sure it ends with the fenced "
    "JSON block described above.\n";

promptkit::PromptBundle with_retry_note(promptkit::PromptBundle b) {
  b.prompt_text += kRetryNote;
  b.content_hash = util::sha256_hex(std::string(promptkit::to_string(b.mode)) + "\n" + b.prompt_text);
  return b;
}

// --- judge ------------------------------------------------------------------

struct JudgeOutcome {
  std::size_t total = 0;
  std::size_t unparseable = 0;
  judge::BatchSummary batch;
};

JudgeOutcome judge_pairs(const Corpus& corpus, const std::map<std::string, RecList>& sys_a,
                         const std::map<std::string, RecList>& sys_b, const RunConfig& c,
                         const fs::path& out_path, std::ostream& err) {
  std::vector<std::string> users;
  for (const auto& [user, rec] : sys_a) {
    if (sys_b.contains(user)) users.push_back(user);
  }
  if (users.empty()) throw InputError("the two systems share no users");
  users = sample_users(std::move(users), c.sample, c.seed);

  auto setup = prompt_setup(c, promptkit::JudgeMode::kPair);
  const bool swap_pass = c.debias == "swap";
  std::vector<promptkit::PromptBundle> bundles;
  for (const auto& user : users) {
    auto profile = promptkit::build_profile(corpus, user, setup.profile);
    auto opts = setup.prompt;
    opts.swap = false;
    bundles.push_back(promptkit::build_prompt(profile, sys_a.at(user), sys_b.at(user), corpus,
                                              setup.dims, setup.tmpl, opts));
    if (swap_pass) {
      opts.swap = true;
      bundles.push_back(promptkit::build_prompt(profile, sys_a.at(user), sys_b.at(user), corpus,
                                                setup.dims, setup.tmpl, opts));
    }
  }

  judge::Judge judge(c.provider, &corpus, open_cache(c));
  auto batch = judge::run_batch(bundles, judge);

  // Parse, optionally re-asking once for responses that fail.
  std::vector<std::optional<verdict::PairVerdict>> parsed(bundles.size());
  std::vector<std::string> errors(bundles.size());
  std::vector<std::string> responses(bundles.size());
  auto try_parse = [&](std::size_t i, const judge::BatchResult& r) {
    if (!r.judgment) {
      errors[i] = r.error;
      return;
    }
    responses[i] = r.judgment->response_text;
    try {
      parsed[i] = verdict::parse_verdict(*r.judgment, bundles[i], setup.dims);
      errors[i].clear();
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  for (std::size_t i = 0; i < bundles.size(); ++i) try_parse(i, batch.results[i]);

  if (c.retry_unparseable) {
    std::vector<std::size_t> again;
    std::vector<promptkit::PromptBundle> retry_bundles;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
      if (parsed[i] || !batch.results[i].judgment) continue;
      again.push_back(i);
      retry_bundles.push_back(with_retry_note(bundles[i]));
    }
    if (!retry_bundles.empty()) {
      err << "re-asking " << retry_bundles.size() << " unparseable responses\n";
      auto second = judge::run_batch(retry_bundles, judge);
      for (std::size_t j = 0; j < again.size(); ++j) try_parse(again[j], second.results[j]);
    }
  }

  std::vector<verdict::VerdictRecord> records;
  JudgeOutcome outcome;
  outcome.batch = batch.summary;
  const std::size_t step = swap_pass ? 2 : 1;
  for (std::size_t i = 0; i < bundles.size(); i += step) {
    verdict::VerdictRecord rec;
    rec.user_id = bundles[i].user_id;
    rec.system_a_id = bundles[i].system_a_id;
    rec.system_b_id = bundles[i].system_b_id;
    bool ok = parsed[i].has_value() && (!swap_pass || parsed[i + 1].has_value());
    if (ok) {
      rec.verdict = swap_pass ? verdict::reconcile(*parsed[i], *parsed[i + 1]) : *parsed[i];
    } else {
      const std::size_t bad = parsed[i] ? i + 1 : i;
      rec.error = errors[bad];
      rec.response = responses[bad];
      ++outcome.unparseable;
      spdlog::warn("user '{}' ({} vs {}): {}", rec.user_id, rec.system_a_id, rec.system_b_id, rec.error);
    }
    records.push_back(std::move(rec));
    ++outcome.total;
  }
  verdict::write_verdicts(records, out_path);

  err << fmt::format("judged {} users ({} requests: {} ok, {} failed, {} cached); {} unparseable\n",
                     outcome.total, bundles.size(), batch.summary.ok, batch.summary.failed,
                     batch.summary.cached, outcome.unparseable);
  return outcome;
}

JudgeOutcome judge_absolute(const Corpus& corpus, const std::map<std::string, RecList>& sys,
                            const RunConfig& c, const fs::path& out_path, std::ostream& err) {
  std::vector<std::string> users;
  for (const auto& [user, rec] : sys) users.push_back(user);
  users = sample_users(std::move(users), c.sample, c.seed);

  auto setup = prompt_setup(c, promptkit::JudgeMode::kAbsolute);
  std::vector<promptkit::PromptBundle> bundles;
  for (const auto& user : users) {
    auto profile = promptkit::build_profile(corpus, user, setup.profile);
    bundles.push_back(promptkit::build_absolute_prompt(profile, sys.at(user), corpus, setup.dims,
                                                       setup.tmpl, setup.prompt));
  }
  judge::Judge judge(c.provider, &corpus, open_cache(c));
  auto batch = judge::run_batch(bundles, judge);

  JudgeOutcome outcome;
  outcome.batch = batch.summary;
  std::vector<json> rows;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    const auto& b = bundles[i];
    const auto& r = batch.results[i];
    json row{{"system_id", b.system_a_id}, {"user_id", b.user_id}};
    std::string error = r.error;
    if (r.judgment) {
      try {
        row["score"] = verdict::parse_absolute_score(*r.judgment);
        row["provider_meta"] = judge::to_json(r.judgment->provider_meta);
      } catch (const std::exception& e) {
        error = e.what();
      }
    }
    if (!row.contains("score")) {
      row["status"] = "unparseable";
      row["error"] = error;
      ++outcome.unparseable;
    }
    rows.push_back(std::move(row));
    ++outcome.total;
  }
  util::write_json_lines(rows, out_path);
  err << fmt::format("scored {} lists ({} ok, {} failed, {} cached); {} unparseable\n", outcome.total,
                     batch.summary.ok, batch.summary.failed, batch.summary.cached, outcome.unparseable);
  return outcome;
}

// --- metrics ----------------------------------------------------------------

metrics::RelevanceTable load_relevance(const std::string& path) {
  metrics::RelevanceTable table;
  auto rows = util::read_json_lines(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      const auto& r = rows[i];
      double pref = r.contains("preference") ? r.at("preference").get<double>() : r.at("label").get<double>();
      table.set(r.at("user_id").get<std::string>(), r.at("item_id").get<std::string>(), pref);
    } catch (const std::exception& e) {
      throw InputError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return table;
}

std::map<std::string, std::vector<metrics::ScoredExample>> load_scores(const std::string& path,
                                                                       const std::string& default_system) {
  std::map<std::string, std::vector<metrics::ScoredExample>> out;
  auto rows = util::read_json_lines(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      const auto& r = rows[i];
      std::string system = r.value("system_id", default_system);
      if (system.empty()) throw InputError("row has no system_id and --scores-system is not set");
      metrics::ScoredExample ex{r.at("user_id").get<std::string>(), r.at("item_id").get<std::string>(),
                                r.at("label").get<int>(), r.at("score").get<double>()};
      if (ex.label != 0 && ex.label != 1) throw InputError("label must be 0 or 1");
      out[system].push_back(std::move(ex));
    } catch (const std::exception& e) {
      throw InputError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

struct MetricsArgs {
  std::string corpus;
  std::vector<std::string> recs;
  std::string scores;
  std::string scores_system;
  std::string relevance;
  std::vector<std::size_t> ks{5};
  std::string auc_scope = "global";
  std::string out;
};

json compute_metrics(const MetricsArgs& a) {
  auto corpus = load_corpus(a.corpus);
  std::map<std::string, std::vector<RecList>> by_system;
  for (const auto& path : a.recs) {
    require_file(path, "recommendation file");
    for (auto& r : read_rec_lists(path)) {
      validate_rec_list(r, corpus);
      by_system[r.system_id].push_back(std::move(r));
    }
  }
  auto relevance = a.relevance.empty() ? metrics::RelevanceTable::from_corpus(corpus)
                                       : load_relevance(a.relevance);
  std::map<std::string, std::vector<metrics::ScoredExample>> scores;
  if (!a.scores.empty()) {
    require_file(a.scores, "scores file");
    scores = load_scores(a.scores, a.scores_system);
  }
  const auto scope = metrics::parse_auc_scope(a.auc_scope);

  std::set<std::string> systems;
  for (const auto& [s, l] : by_system) systems.insert(s);
  for (const auto& [s, l] : scores) systems.insert(s);

  json out = json::object();
  for (const auto& system : systems) {
    json entry = json::object();
    if (auto it = scores.find(system); it != scores.end()) {
      try {
        entry["auc"] = metrics::auc(it->second, scope);
      } catch (const metrics::UndefinedMetric& e) {
        spdlog::warn("{}: auc undefined: {}", system, e.what());
        entry["auc"] = nullptr;
      }
    } else {
      entry["auc"] = nullptr;
    }
    const auto lists_it = by_system.find(system);
    const std::vector<RecList> empty;
    const auto& lists = lists_it == by_system.end() ? empty : lists_it->second;
    for (auto k : a.ks) {
      if (lists.empty()) {
        entry["ndcg@" + std::to_string(k)] = nullptr;
        continue;
      }
      double sum = 0.0;
      for (const auto& r : lists) sum += metrics::ndcg_at_k(r, relevance, k);
      entry["ndcg@" + std::to_string(k)] = sum / static_cast<double>(lists.size());
    }
    double urd_sum = 0.0;
    std::size_t urd_n = 0;
    for (const auto& r : lists) {
      if (r.items.size() < 2) continue;
      urd_sum += metrics::urd(r, corpus);
      ++urd_n;
    }
    entry["urd_mean"] = urd_n > 0 ? json(urd_sum / static_cast<double>(urd_n)) : json(nullptr);
    entry["n_lists"] = lists.size();
    out[system] = std::move(entry);
  }
  return out;
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> verdicts;
  std::string metrics;
  std::string metric_key = "auc";
  bool correlate = false;
  std::vector<std::string> absolute;
  bool include_analysis = false;
  std::size_t excerpts = 2;
  std::string dimensions;
  std::string out_dir = ".";
};

std::map<std::string, double> absolute_means(const std::vector<std::string>& paths) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& path : paths) {
    require_file(path, "absolute scores file");
    auto rows = util::read_json_lines(path);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (!r.is_object() || !r.contains("system_id")) {
        throw InputError(path + ":" + std::to_string(i + 1) + ": missing system_id");
      }
      if (r.value("status", "ok") != "ok" || !r.contains("score")) continue;
      if (!r.at("score").is_number()) throw InputError(path + ":" + std::to_string(i + 1) + ": score is not a number");
      auto& [sum, n] = acc[r.at("system_id").get<std::string>()];
      sum += r.at("score").get<double>();
      ++n;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [id, sn] : acc) out[id] = sn.first / static_cast<double>(sn.second);
  return out;
}

void write_report(const ReportArgs& a, std::ostream& out) {
  std::vector<verdict::VerdictRecord> records;
  for (const auto& path : a.verdicts) {
    require_file(path, "verdicts file");
    auto part = verdict::read_verdicts(path);
    records.insert(records.end(), part.begin(), part.end());
  }
  if (records.empty()) throw InputError("no verdicts to report");

  arena::ReportOptions opts;
  if (!a.dimensions.empty()) {
    opts.dimension_keys = promptkit::DimensionRegistry::load(a.dimensions).keys();
  } else {
    // Default registry order when the verdicts use the default keys.
    auto defaults = promptkit::DimensionRegistry::defaults().keys();
    std::set<std::string> seen;
    for (const auto& r : records) {
      if (r.verdict) {
        for (const auto& [k, o] : r.verdict->per_dimension) seen.insert(k);
      }
    }
    bool all_default = std::all_of(seen.begin(), seen.end(), [&](const std::string& k) {
      return std::find(defaults.begin(), defaults.end(), k) != defaults.end();
    });
    if (all_default) {
      for (const auto& k : defaults) {
        if (seen.contains(k)) opts.dimension_keys.push_back(k);
      }
    }
  }
  opts.metric_name = a.metric_key;
  if (!a.metrics.empty()) {
    require_file(a.metrics, "metrics file");
    json doc;
    try {
      doc = json::parse(util::read_file(a.metrics));
    } catch (const json::exception& e) {
      throw InputError(a.metrics + ": " + e.what());
    }
    if (!doc.is_object()) throw InputError(a.metrics + ": expected an object keyed by system id");
    for (const auto& [system, entry] : doc.items()) {
      if (!entry.is_object()) throw InputError(a.metrics + ": entry for '" + system + "' is not an object");
      if (entry.contains(a.metric_key) && entry.at(a.metric_key).is_number()) {
        opts.metric_values[system] = entry.at(a.metric_key).get<double>();
      }
    }
  }
  opts.correlate = a.correlate;
  if (a.correlate && opts.metric_values.empty()) {
    throw InputError("--correlate needs --metrics with a '" + a.metric_key + "' value per system");
  }
  opts.absolute_scores = absolute_means(a.absolute);
  opts.excerpts_per_dimension = a.include_analysis ? a.excerpts : 0;

  auto report = arena::build_report(records, opts);
  const fs::path dir(a.out_dir);
  util::write_file_atomic(dir / "report.md", arena::render_report(report, arena::ReportFormat::kMarkdown));
  util::write_file_atomic(dir / "report.json", arena::render_report(report, arena::ReportFormat::kJson));
  util::write_file_atomic(dir / "tallies.csv", arena::render_report(report, arena::ReportFormat::kCsv));
  for (const auto& w : report.warnings) spdlog::warn("{}", w);
  out << "wrote " << (dir / "report.md").string() << ", report.json, tallies.csv\n";
}

// --- command wiring ---------------------------------------------------------

int fail_quality(std::ostream& err, const JudgeOutcome& o, double threshold) {
  double frac = o.total == 0 ? 0.0 : static_cast<double>(o.unparseable) / static_cast<double>(o.total);
  if (frac > threshold) {
    err << fmt::format("error: {:.1f}% of responses were unparseable (threshold {:.1f}%)\n", 100.0 * frac,
                       100.0 * threshold);
    return kExitJudgeQuality;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pair-wise LLM evaluation of recommender systems"};
  app.name("recarena");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert a dataset to the canonical corpus JSON");
  std::string ingest_format;
  std::string ingest_input;
  std::string ingest_out;
  double threshold = 4.0;
  ingest->add_option("--format", ingest_format, "movielens, mind or canonical")
      ->required()
      ->check(CLI::IsMember({"movielens", "mind", "canonical"}));
  ingest->add_option("--input", ingest_input, "Dataset directory (or corpus file for canonical)")->required();
  ingest->add_option("--out", ingest_out, "Output corpus JSON")->required();
  ingest->add_option("--threshold", threshold, "MovieLens rating threshold for a positive label");

  // recommend
  auto* recommend = app.add_subcommand("recommend", "Generate baseline recommendation lists");
  std::string rec_corpus;
  std::string rec_method = "popularity";
  std::size_t rec_k = 5;
  std::uint64_t rec_seed = 0;
  std::string rec_out;
  recommend->add_option("--corpus", rec_corpus)->required();
  recommend->add_option("--method", rec_method)->check(CLI::IsMember({"popularity", "random"}));
  recommend->add_option("--k", rec_k)->check(CLI::PositiveNumber);
  recommend->add_option("--seed", rec_seed);
  recommend->add_option("--out", rec_out)->required();

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "Offline metrics (AUC, nDCG@k, URD) per system");
  MetricsArgs margs;
  metrics_cmd->add_option("--corpus", margs.corpus)->required();
  metrics_cmd->add_option("--recs", margs.recs, "RecList JSON Lines file(s)");
  metrics_cmd->add_option("--scores", margs.scores, "Scored examples JSON Lines for AUC");
  metrics_cmd->add_option("--scores-system", margs.scores_system, "System id for score rows without one");
  metrics_cmd->add_option("--relevance", margs.relevance, "Relevance override JSON Lines");
  metrics_cmd->add_option("--k", margs.ks, "Cutoff(s) for nDCG")->check(CLI::PositiveNumber);
  metrics_cmd->add_option("--auc-scope", margs.auc_scope)->check(CLI::IsMember({"global", "per-user-mean"}));
  metrics_cmd->add_option("--out", margs.out, "Output JSON (default: stdout)");

  // judge
  auto* judge_cmd = app.add_subcommand("judge", "Judge system A against system B per user");
  RunConfig jc;
  int timeout_s = static_cast<int>(jc.provider.timeout.count());
  std::string config_path;
  std::string system_a;
  std::string system_b;
  std::string a_id;
  std::string b_id;
  std::string mode = "pair";
  std::string judge_out;
  judge_cmd->add_option("--config", config_path, "JSON run configuration; flags override it");
  judge_cmd->add_option("--corpus", jc.corpus);
  judge_cmd->add_option("--system-a", system_a, "RecList file of system A");
  judge_cmd->add_option("--system-b", system_b, "RecList file of system B (pair mode)");
  judge_cmd->add_option("--a-id", a_id, "System id to use from the A file");
  judge_cmd->add_option("--b-id", b_id, "System id to use from the B file");
  judge_cmd->add_option("--mode", mode)->check(CLI::IsMember({"pair", "absolute"}));
  judge_cmd->add_option("--dimensions", jc.dimensions, "Dimension registry JSON");
  judge_cmd->add_option("--template", jc.template_path, "Prompt template file");
  judge_cmd->add_option("--sample", jc.sample, "Judge a seeded sample of this many users (0 = all)");
  judge_cmd->add_option("--seed", jc.seed);
  judge_cmd->add_option("--debias", jc.debias)->check(CLI::IsMember({"none", "swap"}));
  judge_cmd->add_option("--max-history", jc.max_history)->check(CLI::PositiveNumber);
  judge_cmd->add_option("--char-budget", jc.char_budget)->check(CLI::PositiveNumber);
  judge_cmd->add_flag("--include-abstract", jc.include_abstract);
  judge_cmd->add_option("--unparseable-threshold", jc.unparseable_threshold)->check(CLI::Range(0.0, 1.0));
  judge_cmd->add_flag("--retry-unparseable", jc.retry_unparseable);
  judge_cmd->add_option("--output-dir", jc.output_dir, "Directory for run_config.json");
  judge_cmd->add_option("--out", judge_out, "Output JSON Lines")->required();
  add_provider_options(*judge_cmd, jc, timeout_s);

  // report
  auto* report_cmd = app.add_subcommand("report", "Aggregate verdicts into Q, ranks and tables");
  ReportArgs rargs;
  report_cmd->add_option("--verdicts", rargs.verdicts, "Verdict JSON Lines file(s)")->required();
  report_cmd->add_option("--metrics", rargs.metrics, "Metrics JSON from the metrics command");
  report_cmd->add_option("--metric-key", rargs.metric_key, "Metric to correlate with Q");
  report_cmd->add_flag("--correlate", rargs.correlate, "Pearson correlation of Q with the metric");
  report_cmd->add_option("--absolute", rargs.absolute, "Absolute-mode score file(s)");
  report_cmd->add_flag("--include-analysis", rargs.include_analysis, "Add qualitative analysis excerpts");
  report_cmd->add_option("--excerpts", rargs.excerpts, "Excerpts per pair and dimension");
  report_cmd->add_option("--dimensions", rargs.dimensions, "Dimension registry JSON (table order)");
  report_cmd->add_option("--out-dir", rargs.out_dir);

  // demo
  auto* demo = app.add_subcommand("demo", "Run the whole pipeline on the bundled toy corpus");
  std::string demo_data = std::string(RECARENA_DATA_DIR) + "/toy";
  std::string demo_out = "demo-out";
  int demo_in_flight = 4;
  std::string demo_cache;
  demo->add_option("--data-dir", demo_data);
  demo->add_option("--out-dir", demo_out);
  demo->add_option("--max-in-flight", demo_in_flight)->check(CLI::PositiveNumber);
  demo->add_option("--cache-dir", demo_cache);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInput;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*ingest) {
      Corpus corpus;
      if (ingest_format == "movielens") {
        corpus = parse_movielens(ingest_input, MovieLensOptions{threshold});
      } else if (ingest_format == "mind") {
        corpus = parse_mind(ingest_input);
      } else {
        corpus = read_corpus(ingest_input);
      }
      write_corpus(corpus, ingest_out);
      out << "users: " << corpus.users().size() << "\nitems: " << corpus.items().size()
          << "\ninteractions: " << corpus.interactions().size() << "\n";
      return kExitOk;
    }

    if (*recommend) {
      auto corpus = load_corpus(rec_corpus);
      auto lists = baseline_recommend(corpus, parse_baseline_method(rec_method), rec_k, rec_seed);
      write_rec_lists(lists, rec_out);
      out << "wrote " << lists.size() << " lists to " << rec_out << "\n";
      return kExitOk;
    }

    if (*metrics_cmd) {
      auto doc = compute_metrics(margs);
      if (margs.out.empty()) {
        out << doc.dump(2) << "\n";
      } else {
        util::write_file_atomic(margs.out, doc.dump(2) + "\n");
        out << "wrote " << margs.out << "\n";
      }
      return kExitOk;
    }

    if (*judge_cmd) {
      apply_config_file(*judge_cmd, config_path, jc, timeout_s);
      jc.provider.timeout = std::chrono::seconds(timeout_s);
      auto corpus = load_corpus(jc.corpus);
      echo_config(jc, "judge");
      if (mode == "absolute") {
        auto sys = load_system(system_a, a_id, corpus);
        auto o = judge_absolute(corpus, sys, jc, judge_out, err);
        return fail_quality(err, o, jc.unparseable_threshold);
      }
      auto sys_a = load_system(system_a, a_id, corpus);
      auto sys_b = load_system(system_b, b_id, corpus);
      auto o = judge_pairs(corpus, sys_a, sys_b, jc, judge_out, err);
      return fail_quality(err, o, jc.unparseable_threshold);
    }

    if (*report_cmd) {
      write_report(rargs, out);
      return kExitOk;
    }

    if (*demo) {
      const fs::path data(demo_data);
      const fs::path outdir(demo_out);
      fs::create_directories(outdir);
      auto corpus = parse_movielens(data / "movielens");
      write_corpus(corpus, outdir / "corpus.json");

      std::map<std::string, std::map<std::string, RecList>> systems;
      systems["strong"] = load_system((data / "strong.jsonl").string(), "", corpus);
      systems["weak"] = load_system((data / "weak.jsonl").string(), "", corpus);
      for (auto method : {BaselineMethod::kPopularity, BaselineMethod::kRandom}) {
        auto lists = baseline_recommend(corpus, method, 5, 7);
        const auto path = outdir / fmt::format("recs_{}.jsonl", to_string(method));
        write_rec_lists(lists, path);
        systems[std::string(to_string(method))] = load_system(path.string(), "", corpus);
      }

      RunConfig c;
      c.corpus = (outdir / "corpus.json").string();
      c.provider.provider = "mock";
      c.provider.max_in_flight = demo_in_flight;
      c.cache_dir = demo_cache;
      c.output_dir = outdir.string();
      echo_config(c, "demo");

      ReportArgs r;
      r.out_dir = outdir.string();
      for (const auto& name : {"strong", "popularity", "random"}) {
        const auto vpath = outdir / fmt::format("verdicts_{}.jsonl", name);
        judge_pairs(corpus, systems.at(name), systems.at("weak"), c, vpath, err);
        r.verdicts.push_back(vpath.string());
        const auto apath = outdir / fmt::format("absolute_{}.jsonl", name);
        judge_absolute(corpus, systems.at(name), c, apath, err);
        r.absolute.push_back(apath.string());
      }

      MetricsArgs m;
      m.corpus = c.corpus;
      m.recs = {(data / "strong.jsonl").string(), (data / "weak.jsonl").string(),
                (outdir / "recs_popularity.jsonl").string(), (outdir / "recs_random.jsonl").string()};
      m.relevance = (data / "relevance.jsonl").string();
      m.scores = (data / "scores.jsonl").string();
      m.ks = {5};
      util::write_file_atomic(outdir / "metrics.json", compute_metrics(m).dump(2) + "\n");

      r.metrics = (outdir / "metrics.json").string();
      r.metric_key = "ndcg@5";
      r.correlate = true;
      r.include_analysis = true;
      r.excerpts = 1;
      write_report(r, out);
      return kExitOk;
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const CorpusError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const promptkit::PromptError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const judge::ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const verdict::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}

}  // namespace recarena::cli

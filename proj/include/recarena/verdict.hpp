#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "recarena/judge.hpp"
#include "recarena/promptkit.hpp"

namespace recarena::verdict {

enum class Outcome { kA, kB, kTie };

std::string_view to_string(Outcome outcome);
/// Accepts A/B/tie in any case, "draw", and "System A"-style labels.
std::optional<Outcome> parse_outcome(std::string_view text);
Outcome invert(Outcome outcome);

/// The response could not be turned into a verdict. Carries the full
/// response text for auditing.
class UnparseableError : public std::runtime_error {
 public:
  UnparseableError(const std::string& what, std::string response)
      : std::runtime_error(what), response_(std::move(response)) {}
  const std::string& response() const { return response_; }

 private:
  std::string response_;
};

/// The verdict JSON is present but violates the schema.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PairVerdict {
  std::string user_id;
  std::string system_a_id;
  std::string system_b_id;
  /// Logical outcomes (after un-swap). Dimensions the judge never addressed
  /// are absent.
  std::map<std::string, Outcome> per_dimension;
  Outcome overall = Outcome::kTie;
  std::map<std::string, std::string> analysis;
  bool swap_corrected = false;
  /// True when at least one label came from the prose scan.
  bool used_fallback = false;
  nlohmann::json provider_meta = nlohmann::json::object();

  bool operator==(const PairVerdict&) const = default;
};

/// Last well-formed fenced JSON object in `text` (or, failing that, the
/// last balanced top-level {...} object).
std::optional<nlohmann::json> extract_last_json(std::string_view text);

/// Per-dimension analysis text, keyed by dimension key ("overall" for the
/// overall section), split on heading lines.
std::map<std::string, std::string> split_sections(std::string_view text,
                                                  const std::vector<std::string>& keys);

/// Last A/B/tie verdict phrase in a block of prose.
std::optional<Outcome> scan_outcome(std::string_view text);

PairVerdict parse_verdict(const judge::RawJudgment& raw, const promptkit::PromptBundle& bundle,
                          const promptkit::DimensionRegistry& dims);

/// Score in [0, 1] from an absolute-mode response.
double parse_absolute_score(const judge::RawJudgment& raw);

/// Position-swap debiasing: agreement is kept, disagreement becomes a tie,
/// and a dimension missing from either pass stays missing.
PairVerdict reconcile(const PairVerdict& first, const PairVerdict& second);

nlohmann::json to_json(const PairVerdict& v);
PairVerdict verdict_from_json(const nlohmann::json& obj);

/// One line of a verdicts file: either a parsed verdict or an audit record
/// for a response that could not be parsed.
struct VerdictRecord {
  std::optional<PairVerdict> verdict;
  std::string user_id;
  std::string system_a_id;
  std::string system_b_id;
  std::string error;
  std::string response;
};

nlohmann::json to_json(const VerdictRecord& rec);
VerdictRecord record_from_json(const nlohmann::json& obj);

std::vector<VerdictRecord> read_verdicts(const std::filesystem::path& path);
void write_verdicts(const std::vector<VerdictRecord>& records, const std::filesystem::path& path);

}  // namespace recarena::verdict

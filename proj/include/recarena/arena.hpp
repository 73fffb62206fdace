#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "recarena/metrics.hpp"
#include "recarena/verdict.hpp"

namespace recarena::arena {

class ArenaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kOverall = "overall";

/// Outcome counts for one (A, B) pair in one scope; wins are A's wins.
struct ArenaTally {
  std::string system_a_id;
  std::string system_b_id;
  std::string scope{kOverall};
  std::size_t n_win = 0;
  std::size_t n_tie = 0;
  std::size_t n_lose = 0;
  std::size_t n_excluded = 0;

  std::size_t judged() const { return n_win + n_tie + n_lose; }
  bool operator==(const ArenaTally&) const = default;
};

/// Q = (win + tie) / (lose + tie). `q` is +infinity when lose + tie = 0.
struct QValue {
  double q = 0.0;
  double win_pct = 0.0;
  double tie_pct = 0.0;
  double lose_pct = 0.0;

  bool infinite() const;
};

/// Counts the scope's outcomes. Verdicts that lack a dimension count as
/// excluded for that dimension. Throws ArenaError for mixed system pairs.
ArenaTally tally(const std::vector<verdict::PairVerdict>& verdicts, std::string_view scope);

/// Works on counts or percentages alike; all-zero input throws ArenaError.
QValue quantile_q(double n_win, double n_tie, double n_lose);
QValue quantile_q(const ArenaTally& t);

struct RankEntry {
  std::string system_id;
  QValue q;
  std::size_t rank = 0;
  /// Shares its rank with another system.
  bool tied = false;
};

/// Descending Q, +infinity first. Exact ties share the better rank
/// (1, 1, 3); order within a tie follows system id.
std::vector<RankEntry> rank_by_q(const std::map<std::string, QValue>& q_map);

/// Pearson r between Q and a metric, aligned by system id. Infinite Q
/// values are dropped with a warning; fewer than 3 pairs throws ArenaError.
metrics::CorrelationResult correlate_q_vs_metric(const std::map<std::string, QValue>& q_values,
                                                 const std::map<std::string, double>& metric_values);

/// Min-max scaling to [0, 1]. Equal values all map to 0.
std::map<std::string, double> min_max_normalize(const std::map<std::string, double>& values);

// --- reports ----------------------------------------------------------------

struct PairReport {
  std::string system_a_id;
  std::string system_b_id;
  /// Keyed by scope: "overall" and every dimension key.
  std::map<std::string, ArenaTally> tallies;
  std::map<std::string, QValue> q;
  std::size_t n_unparseable = 0;
};

struct ScopeRanking {
  std::string baseline_id;  // the shared system B
  std::string scope;
  std::vector<RankEntry> entries;
};

struct AnalysisExcerpt {
  std::string system_a_id;
  std::string system_b_id;
  std::string user_id;
  std::string dimension;
  std::string outcome;
  std::string text;
};

struct AuditEntry {
  std::string user_id;
  std::string system_a_id;
  std::string system_b_id;
  std::string error;
};

struct Correlation {
  std::string metric_name;
  std::string baseline_id;
  metrics::CorrelationResult result;
};

struct ArenaReport {
  std::vector<std::string> scopes;  // "overall" first, then dimension keys
  std::vector<PairReport> pairs;    // sorted by (B, A)
  std::vector<ScopeRanking> rankings;
  std::optional<Correlation> correlation;
  std::map<std::string, double> metric_values;
  std::map<std::string, double> absolute_scores;
  std::map<std::string, double> absolute_normalized;
  std::vector<AnalysisExcerpt> excerpts;
  std::vector<AuditEntry> audit;
  std::vector<std::string> warnings;
};

struct ReportOptions {
  /// Dimension keys in display order. Empty: every key seen in the verdicts,
  /// sorted.
  std::vector<std::string> dimension_keys;
  /// Metric per system id (A side) to correlate with overall Q.
  std::map<std::string, double> metric_values;
  std::string metric_name = "auc";
  bool correlate = false;
  /// Mean absolute-mode score per system.
  std::map<std::string, double> absolute_scores;
  /// Analysis excerpts per pair and dimension; 0 disables them.
  std::size_t excerpts_per_dimension = 0;
};

ArenaReport build_report(const std::vector<verdict::VerdictRecord>& records,
                         const ReportOptions& options);

enum class ReportFormat { kMarkdown, kJson, kCsv };

std::string render_report(const ArenaReport& report, ReportFormat format);

nlohmann::json q_to_json(double q);

}  // namespace recarena::arena

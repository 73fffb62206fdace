#include "recarena/arena.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

namespace recarena::arena {

using nlohmann::json;
using verdict::Outcome;
using verdict::PairVerdict;

bool QValue::infinite() const { return std::isinf(q); }

ArenaTally tally(const std::vector<PairVerdict>& verdicts, std::string_view scope) {
  ArenaTally t;
  t.scope = std::string(scope);
  if (verdicts.empty()) return t;
  t.system_a_id = verdicts.front().system_a_id;
  t.system_b_id = verdicts.front().system_b_id;
  const bool overall = scope == kOverall;
  for (const auto& v : verdicts) {
    if (v.system_a_id != t.system_a_id || v.system_b_id != t.system_b_id) {
      throw ArenaError("tally over mixed system pairs: (" + t.system_a_id + ", " + t.system_b_id +
                       ") and (" + v.system_a_id + ", " + v.system_b_id + ")");
    }
    std::optional<Outcome> outcome;
    if (overall) {
      outcome = v.overall;
    } else if (auto it = v.per_dimension.find(std::string(scope)); it != v.per_dimension.end()) {
      outcome = it->second;
    }
    if (!outcome) {
      ++t.n_excluded;
      continue;
    }
    switch (*outcome) {
      case Outcome::kA: ++t.n_win; break;
      case Outcome::kB: ++t.n_lose; break;
      case Outcome::kTie: ++t.n_tie; break;
    }
  }
  return t;
}

QValue quantile_q(double n_win, double n_tie, double n_lose) {
  if (n_win < 0 || n_tie < 0 || n_lose < 0) throw ArenaError("negative outcome count");
  const double total = n_win + n_tie + n_lose;
  if (total <= 0.0) throw ArenaError("Q is undefined for an empty tally");
  QValue v;
  v.win_pct = 100.0 * n_win / total;
  v.tie_pct = 100.0 * n_tie / total;
  v.lose_pct = 100.0 * n_lose / total;
  const double denom = n_lose + n_tie;
  if (denom == 0.0) {
    spdlog::warn("Q is unbounded: no losses and no ties");
    v.q = std::numeric_limits<double>::infinity();
  } else {
    v.q = (n_win + n_tie) / denom;
  }
  return v;
}

QValue quantile_q(const ArenaTally& t) {
  return quantile_q(static_cast<double>(t.n_win), static_cast<double>(t.n_tie),
                    static_cast<double>(t.n_lose));
}

std::vector<RankEntry> rank_by_q(const std::map<std::string, QValue>& q_map) {
  if (q_map.empty()) throw ArenaError("nothing to rank");
  std::vector<RankEntry> entries;
  entries.reserve(q_map.size());
  for (const auto& [id, q] : q_map) entries.push_back(RankEntry{id, q, 0, false});
  // std::map iteration already orders ids, so a stable sort keeps id order in ties.
  std::stable_sort(entries.begin(), entries.end(),
                   [](const RankEntry& a, const RankEntry& b) { return a.q.q > b.q.q; });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i > 0 && entries[i].q.q == entries[i - 1].q.q) {
      entries[i].rank = entries[i - 1].rank;
      entries[i].tied = true;
      entries[i - 1].tied = true;
    } else {
      entries[i].rank = i + 1;
    }
  }
  return entries;
}

metrics::CorrelationResult correlate_q_vs_metric(const std::map<std::string, QValue>& q_values,
                                                 const std::map<std::string, double>& metric_values) {
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& [id, q] : q_values) {
    auto m = metric_values.find(id);
    if (m == metric_values.end()) continue;
    if (q.infinite()) {
      spdlog::warn("system '{}' has infinite Q and is left out of the correlation", id);
      continue;
    }
    xs.push_back(m->second);
    ys.push_back(q.q);
  }
  if (xs.size() < 3) {
    throw ArenaError("correlation needs at least 3 systems with finite Q and a metric value, got " +
                     std::to_string(xs.size()));
  }
  return metrics::pearson(xs, ys);
}

std::map<std::string, double> min_max_normalize(const std::map<std::string, double>& values) {
  std::map<std::string, double> out;
  if (values.empty()) return out;
  auto [lo, hi] = std::minmax_element(values.begin(), values.end(),
                                      [](const auto& a, const auto& b) { return a.second < b.second; });
  const double span = hi->second - lo->second;
  for (const auto& [id, v] : values) out[id] = span > 0.0 ? (v - lo->second) / span : 0.0;
  return out;
}

// --- build ------------------------------------------------------------------

namespace {

using PairKey = std::pair<std::string, std::string>;  // (A, B)

constexpr std::size_t kExcerptChars = 600;

std::string clip(const std::string& text) {
  if (text.size() <= kExcerptChars) return text;
  std::size_t cut = kExcerptChars;
  // Do not split a UTF-8 sequence.
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return text.substr(0, cut) + " ...";
}

}  // namespace

ArenaReport build_report(const std::vector<verdict::VerdictRecord>& records,
                         const ReportOptions& options) {
  ArenaReport report;

  std::map<PairKey, std::vector<PairVerdict>> groups;
  std::map<PairKey, std::size_t> unparseable;
  std::set<std::string> seen_dims;
  for (const auto& rec : records) {
    PairKey key{rec.system_a_id, rec.system_b_id};
    if (rec.verdict) {
      groups[key].push_back(*rec.verdict);
      for (const auto& [dim, outcome] : rec.verdict->per_dimension) seen_dims.insert(dim);
    } else {
      groups.try_emplace(key);
      ++unparseable[key];
      report.audit.push_back({rec.user_id, rec.system_a_id, rec.system_b_id, rec.error});
    }
  }
  std::sort(report.audit.begin(), report.audit.end(), [](const AuditEntry& a, const AuditEntry& b) {
    return std::tie(a.system_b_id, a.system_a_id, a.user_id, a.error) <
           std::tie(b.system_b_id, b.system_a_id, b.user_id, b.error);
  });

  report.scopes.emplace_back(kOverall);
  if (!options.dimension_keys.empty()) {
    report.scopes.insert(report.scopes.end(), options.dimension_keys.begin(),
                         options.dimension_keys.end());
  } else {
    report.scopes.insert(report.scopes.end(), seen_dims.begin(), seen_dims.end());
  }

  for (auto& [key, verdicts] : groups) {
    std::sort(verdicts.begin(), verdicts.end(),
              [](const PairVerdict& a, const PairVerdict& b) { return a.user_id < b.user_id; });
    PairReport pair;
    pair.system_a_id = key.first;
    pair.system_b_id = key.second;
    pair.n_unparseable = unparseable[key];
    for (const auto& scope : report.scopes) {
      ArenaTally t = tally(verdicts, scope);
      t.system_a_id = key.first;
      t.system_b_id = key.second;
      t.n_excluded += pair.n_unparseable;
      if (t.judged() > 0) {
        pair.q[scope] = quantile_q(t);
      } else {
        report.warnings.push_back(fmt::format("{} vs {}: no judged verdicts for scope '{}'",
                                              key.first, key.second, scope));
      }
      pair.tallies[scope] = t;
    }

    if (options.excerpts_per_dimension > 0) {
      for (const auto& scope : report.scopes) {
        if (scope == kOverall) continue;
        std::size_t taken = 0;
        for (const auto& v : verdicts) {
          if (taken >= options.excerpts_per_dimension) break;
          auto text = v.analysis.find(scope);
          auto outcome = v.per_dimension.find(scope);
          if (text == v.analysis.end() || outcome == v.per_dimension.end()) continue;
          report.excerpts.push_back({key.first, key.second, v.user_id, scope,
                                     std::string(verdict::to_string(outcome->second)),
                                     clip(text->second)});
          ++taken;
        }
      }
    }
    report.pairs.push_back(std::move(pair));
  }
  std::sort(report.pairs.begin(), report.pairs.end(), [](const PairReport& a, const PairReport& b) {
    return std::tie(a.system_b_id, a.system_a_id) < std::tie(b.system_b_id, b.system_a_id);
  });

  // Systems compared against the same baseline are ranked together.
  std::map<std::string, std::vector<const PairReport*>> by_baseline;
  for (const auto& p : report.pairs) by_baseline[p.system_b_id].push_back(&p);
  for (const auto& [baseline, pairs] : by_baseline) {
    for (const auto& scope : report.scopes) {
      std::map<std::string, QValue> q_map;
      for (const auto* p : pairs) {
        if (auto it = p->q.find(scope); it != p->q.end()) q_map[p->system_a_id] = it->second;
      }
      if (q_map.empty()) continue;
      report.rankings.push_back({baseline, scope, rank_by_q(q_map)});
    }
  }

  report.metric_values = options.metric_values;
  if (options.correlate) {
    // Correlate within the baseline group that has the most systems.
    const std::vector<const PairReport*>* best = nullptr;
    std::string best_baseline;
    for (const auto& [baseline, pairs] : by_baseline) {
      if (best == nullptr || pairs.size() > best->size()) {
        best = &pairs;
        best_baseline = baseline;
      }
    }
    if (by_baseline.size() > 1) {
      report.warnings.push_back("several baselines present; correlating systems compared with '" +
                                best_baseline + "'");
    }
    std::map<std::string, QValue> q_map;
    if (best != nullptr) {
      for (const auto* p : *best) {
        if (auto it = p->q.find(std::string(kOverall)); it != p->q.end()) q_map[p->system_a_id] = it->second;
      }
    }
    try {
      report.correlation =
          Correlation{options.metric_name, best_baseline, correlate_q_vs_metric(q_map, options.metric_values)};
    } catch (const std::exception& e) {
      report.warnings.push_back(std::string("correlation omitted: ") + e.what());
      spdlog::warn("correlation omitted: {}", e.what());
    }
  }

  report.absolute_scores = options.absolute_scores;
  report.absolute_normalized = min_max_normalize(options.absolute_scores);
  return report;
}

// --- rendering --------------------------------------------------------------

json q_to_json(double q) {
  if (std::isinf(q)) return "inf";
  return q;
}

namespace {

std::string fmt_q(double q) { return std::isinf(q) ? "inf" : fmt::format("{:.4f}", q); }
std::string fmt_pct(double p) { return fmt::format("{:.1f}", p); }

const RankEntry* find_rank(const ArenaReport& report, const std::string& baseline,
                           const std::string& scope, const std::string& system) {
  for (const auto& r : report.rankings) {
    if (r.baseline_id != baseline || r.scope != scope) continue;
    for (const auto& e : r.entries) {
      if (e.system_id == system) return &e;
    }
  }
  return nullptr;
}

std::string escape_md(const std::string& text) {
  std::string out;
  for (char c : text) {
    if (c == '|') out += "\\|";
    else if (c == '\n') out += ' ';
    else out.push_back(c);
  }
  return out;
}

std::string render_markdown(const ArenaReport& report) {
  std::string out = "# Pair-wise evaluation report\n";
  const bool with_abs = !report.absolute_scores.empty();

  for (const auto& scope : report.scopes) {
    out += scope == kOverall ? "\n## Overall\n\n" : "\n## Dimension: " + scope + "\n\n";
    out += "| System | Baseline | Win(%) | Tie(%) | Lose(%) | Q | Rank |";
    if (with_abs && scope == kOverall) out += " Abs. score | Abs. (norm) |";
    out += "\n|---|---|---:|---:|---:|---:|---:|";
    if (with_abs && scope == kOverall) out += "---:|---:|";
    out += '\n';
    for (const auto& p : report.pairs) {
      auto q = p.q.find(scope);
      std::string rank = "-";
      if (const auto* e = find_rank(report, p.system_b_id, scope, p.system_a_id)) {
        rank = std::to_string(e->rank) + (e->tied ? "=" : "");
      }
      if (q == p.q.end()) {
        out += fmt::format("| {} | {} | - | - | - | - | - |", escape_md(p.system_a_id),
                           escape_md(p.system_b_id));
      } else {
        out += fmt::format("| {} | {} | {} | {} | {} | {} | {} |", escape_md(p.system_a_id),
                           escape_md(p.system_b_id), fmt_pct(q->second.win_pct),
                           fmt_pct(q->second.tie_pct), fmt_pct(q->second.lose_pct),
                           fmt_q(q->second.q), rank);
      }
      if (with_abs && scope == kOverall) {
        auto s = report.absolute_scores.find(p.system_a_id);
        auto n = report.absolute_normalized.find(p.system_a_id);
        if (s != report.absolute_scores.end()) {
          out += fmt::format(" {:.4f} | {:.4f} |", s->second, n->second);
        } else {
          out += " - | - |";
        }
      }
      out += '\n';
    }
    std::size_t excluded = 0;
    for (const auto& p : report.pairs) {
      if (auto t = p.tallies.find(scope); t != p.tallies.end()) excluded += t->second.n_excluded;
    }
    if (excluded > 0) out += fmt::format("\nExcluded from this table: {} verdicts.\n", excluded);
  }

  if (!report.absolute_scores.empty()) {
    out += "\n## Absolute scores\n\n| System | Score | Normalized |\n|---|---:|---:|\n";
    for (const auto& [id, score] : report.absolute_scores) {
      out += fmt::format("| {} | {:.4f} | {:.4f} |\n", escape_md(id), score,
                         report.absolute_normalized.at(id));
    }
  }

  if (report.correlation) {
    const auto& c = *report.correlation;
    out += fmt::format("\n## Correlation with {}\n\nPearson r = {:.4f}, p = {:.4f}, n = {} "
                       "(systems compared with {}).\n",
                       c.metric_name, c.result.r, c.result.p_value, c.result.n, c.baseline_id);
  }

  if (!report.excerpts.empty()) {
    out += "\n## Analysis excerpts\n";
    for (const auto& e : report.excerpts) {
      out += fmt::format("\n**{} vs {}, user {}, {}: {}**\n\n> {}\n", e.system_a_id, e.system_b_id,
                         e.user_id, e.dimension, e.outcome, escape_md(e.text));
    }
  }

  if (!report.audit.empty()) {
    out += "\n## Unparseable responses\n\n| System | Baseline | User | Error |\n|---|---|---|---|\n";
    for (const auto& a : report.audit) {
      out += fmt::format("| {} | {} | {} | {} |\n", escape_md(a.system_a_id), escape_md(a.system_b_id),
                         escape_md(a.user_id), escape_md(a.error));
    }
  }

  if (!report.warnings.empty()) {
    out += "\n## Warnings\n\n";
    for (const auto& w : report.warnings) out += "- " + w + "\n";
  }
  return out;
}

json render_json(const ArenaReport& report) {
  json pairs = json::array();
  for (const auto& p : report.pairs) {
    json scopes = json::object();
    for (const auto& [scope, t] : p.tallies) {
      json entry{{"n_win", t.n_win}, {"n_tie", t.n_tie}, {"n_lose", t.n_lose}, {"n_excluded", t.n_excluded}};
      if (auto q = p.q.find(scope); q != p.q.end()) {
        entry["win_pct"] = q->second.win_pct;
        entry["tie_pct"] = q->second.tie_pct;
        entry["lose_pct"] = q->second.lose_pct;
        entry["q"] = q_to_json(q->second.q);
      } else {
        entry["q"] = nullptr;
      }
      scopes[scope] = std::move(entry);
    }
    pairs.push_back({{"system_a_id", p.system_a_id},
                     {"system_b_id", p.system_b_id},
                     {"n_unparseable", p.n_unparseable},
                     {"scopes", std::move(scopes)}});
  }
  json rankings = json::array();
  for (const auto& r : report.rankings) {
    json entries = json::array();
    for (const auto& e : r.entries) {
      entries.push_back({{"system_id", e.system_id}, {"q", q_to_json(e.q.q)}, {"rank", e.rank}, {"tied", e.tied}});
    }
    rankings.push_back({{"baseline_id", r.baseline_id}, {"scope", r.scope}, {"entries", std::move(entries)}});
  }
  json doc{{"scopes", report.scopes}, {"pairs", std::move(pairs)}, {"rankings", std::move(rankings)}};
  if (report.correlation) {
    const auto& c = *report.correlation;
    doc["correlation"] = {{"metric", c.metric_name},
                          {"baseline_id", c.baseline_id},
                          {"r", c.result.r},
                          {"p_value", c.result.p_value},
                          {"n", c.result.n}};
  } else {
    doc["correlation"] = nullptr;
  }
  if (!report.metric_values.empty()) doc["metric_values"] = report.metric_values;
  if (!report.absolute_scores.empty()) {
    doc["absolute_scores"] = report.absolute_scores;
    doc["absolute_normalized"] = report.absolute_normalized;
  }
  json excerpts = json::array();
  for (const auto& e : report.excerpts) {
    excerpts.push_back({{"system_a_id", e.system_a_id}, {"system_b_id", e.system_b_id}, {"user_id", e.user_id},
                        {"dimension", e.dimension}, {"outcome", e.outcome}, {"text", e.text}});
  }
  doc["excerpts"] = std::move(excerpts);
  json audit = json::array();
  for (const auto& a : report.audit) {
    audit.push_back({{"user_id", a.user_id}, {"system_a_id", a.system_a_id},
                     {"system_b_id", a.system_b_id}, {"error", a.error}});
  }
  doc["unparseable"] = std::move(audit);
  doc["warnings"] = report.warnings;
  return doc;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

std::string render_csv(const ArenaReport& report) {
  std::string out = "system_a_id,system_b_id,scope,n_win,n_tie,n_lose,n_excluded,win_pct,tie_pct,lose_pct,q\n";
  for (const auto& p : report.pairs) {
    for (const auto& scope : report.scopes) {
      auto t = p.tallies.find(scope);
      if (t == p.tallies.end()) continue;
      out += fmt::format("{},{},{},{},{},{},{}", csv_field(p.system_a_id), csv_field(p.system_b_id),
                         csv_field(scope), t->second.n_win, t->second.n_tie, t->second.n_lose,
                         t->second.n_excluded);
      if (auto q = p.q.find(scope); q != p.q.end()) {
        out += fmt::format(",{},{},{},{}\n", q->second.win_pct, q->second.tie_pct, q->second.lose_pct,
                           std::isinf(q->second.q) ? std::string("inf") : fmt::format("{}", q->second.q));
      } else {
        out += ",,,,\n";
      }
    }
  }
  return out;
}

}  // namespace

std::string render_report(const ArenaReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::kMarkdown: return render_markdown(report);
    case ReportFormat::kJson: return render_json(report).dump(2) + "\n";
    case ReportFormat::kCsv: return render_csv(report);
  }
  return {};
}

}  // namespace recarena::arena

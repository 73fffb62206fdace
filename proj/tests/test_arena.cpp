#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "recarena/arena.hpp"
#include "support/fixtures.hpp"
#include "support/reference_tables.hpp"

namespace recarena::arena {
namespace {

using verdict::Outcome;
using verdict::PairVerdict;
using verdict::VerdictRecord;

PairVerdict make_verdict(const std::string& a, const std::string& b, const std::string& user, Outcome overall,
                         std::map<std::string, Outcome> dims = {}) {
  PairVerdict v;
  v.user_id = user;
  v.system_a_id = a;
  v.system_b_id = b;
  v.overall = overall;
  v.per_dimension = std::move(dims);
  return v;
}

VerdictRecord record(PairVerdict v) {
  VerdictRecord r;
  r.user_id = v.user_id;
  r.system_a_id = v.system_a_id;
  r.system_b_id = v.system_b_id;
  r.verdict = std::move(v);
  return r;
}

// --- tally --------------------------------------------------------------------

TEST(Tally, Unanimous) {
  std::vector<PairVerdict> v;
  for (int i = 0; i < 3; ++i) v.push_back(make_verdict("a", "b", "u" + std::to_string(i), Outcome::kA));
  auto t = tally(v, kOverall);
  EXPECT_EQ(t.n_win, 3u);
  EXPECT_EQ(t.n_tie, 0u);
  EXPECT_EQ(t.n_lose, 0u);
  EXPECT_EQ(t.system_a_id, "a");
}

TEST(Tally, OneEach) {
  std::vector<PairVerdict> v{make_verdict("a", "b", "1", Outcome::kA), make_verdict("a", "b", "2", Outcome::kTie),
                             make_verdict("a", "b", "3", Outcome::kB)};
  auto t = tally(v, kOverall);
  EXPECT_EQ(std::tie(t.n_win, t.n_tie, t.n_lose), std::make_tuple(1u, 1u, 1u));
}

TEST(Tally, MissingDimensionIsExcluded) {
  std::vector<PairVerdict> v;
  for (int i = 0; i < 10; ++i) {
    std::map<std::string, Outcome> d{{"accuracy", Outcome::kA}};
    if (i >= 2) d["inspiration"] = i % 2 ? Outcome::kB : Outcome::kA;
    v.push_back(make_verdict("a", "b", std::to_string(i), Outcome::kA, d));
  }
  auto t = tally(v, "inspiration");
  EXPECT_EQ(t.judged(), 8u);
  EXPECT_EQ(t.n_excluded, 2u);
  EXPECT_EQ(t.scope, "inspiration");
}

TEST(Tally, MixedPairsRejected) {
  std::vector<PairVerdict> v{make_verdict("a", "b", "1", Outcome::kA), make_verdict("c", "b", "2", Outcome::kA)};
  EXPECT_THROW(tally(v, kOverall), ArenaError);
}

// --- Q --------------------------------------------------------------------------

TEST(Quantile, PublishedRows) {
  EXPECT_NEAR(quantile_q(61.1, 14.7, 24.2).q, 1.9485, 1e-4);
  EXPECT_NEAR(quantile_q(62.8, 8.4, 28.8).q, 1.9139, 1e-4);
}

TEST(Quantile, BalancedIsExactlyOne) {
  for (double tie : {0.5, 1.0, 7.0, 123.0}) EXPECT_EQ(quantile_q(4.0, tie, 4.0).q, 1.0);
}

TEST(Quantile, PercentagesAndInfinity) {
  auto q = quantile_q(ArenaTally{"a", "b", "overall", 2, 1, 1, 5});
  EXPECT_DOUBLE_EQ(q.q, 1.5);
  EXPECT_DOUBLE_EQ(q.win_pct, 50.0);
  EXPECT_DOUBLE_EQ(q.tie_pct, 25.0);
  EXPECT_DOUBLE_EQ(q.lose_pct, 25.0);
  auto inf = quantile_q(3, 0, 0);
  EXPECT_TRUE(inf.infinite());
  EXPECT_EQ(q_to_json(inf.q), "inf");
  EXPECT_EQ(quantile_q(0, 0, 3).q, 0.0);
  EXPECT_THROW(quantile_q(0, 0, 0), ArenaError);
  EXPECT_THROW(quantile_q(ArenaTally{}), ArenaError);
}

TEST(QuantileProperty, ScaleInvariant) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> count(0, 50);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int trial = 0; trial < 500; ++trial) {
    double w = count(rng), t = count(rng), l = count(rng);
    if (l + t == 0) l = 1;
    if (w + t + l == 0) continue;
    const double s = scale(rng);
    ASSERT_NEAR(quantile_q(w * s, t * s, l * s).q, quantile_q(w, t, l).q, 1e-12 * quantile_q(w, t, l).q + 1e-15);
  }
}

// --- ranking --------------------------------------------------------------------

std::map<std::string, QValue> q_map(const std::map<std::string, double>& qs) {
  std::map<std::string, QValue> out;
  for (const auto& [k, v] : qs) out[k] = QValue{v, 0, 0, 0};
  return out;
}

std::map<std::string, std::size_t> ranks_of(const std::vector<RankEntry>& r) {
  std::map<std::string, std::size_t> out;
  for (const auto& e : r) out[e.system_id] = e.rank;
  return out;
}

TEST(Rank, PublishedGroups) {
  auto r = rank_by_q(q_map({{"NRMS", 1.9485}, {"LightGCN", 1.9139}, {"SASRec", 1.7884}, {"DeepFM", 1.7237}}));
  EXPECT_EQ(ranks_of(r), (std::map<std::string, std::size_t>{{"NRMS", 1}, {"LightGCN", 2}, {"SASRec", 3}, {"DeepFM", 4}}));
  auto l = rank_by_q(q_map({{"LightGCN", 1.7858}, {"DeepFM", 1.7684}, {"NRMS", 1.6138}, {"SASRec", 1.3927}}));
  EXPECT_EQ(l[0].system_id, "LightGCN");
  EXPECT_EQ(l[1].system_id, "DeepFM");
  EXPECT_EQ(l[2].system_id, "NRMS");
  EXPECT_EQ(l[3].system_id, "SASRec");
}

TEST(Rank, TiesShareBetterRank) {
  auto r = rank_by_q(q_map({{"x", 2.0}, {"y", 2.0}, {"z", 1.0}}));
  EXPECT_EQ(r[0].rank, 1u);
  EXPECT_EQ(r[1].rank, 1u);
  EXPECT_TRUE(r[0].tied);
  EXPECT_TRUE(r[1].tied);
  EXPECT_EQ(r[2].rank, 3u);
  EXPECT_FALSE(r[2].tied);
}

TEST(Rank, InfinityFirst) {
  auto r = rank_by_q(q_map({{"x", 5.0}, {"y", INFINITY}}));
  EXPECT_EQ(r[0].system_id, "y");
  EXPECT_THROW(rank_by_q({}), ArenaError);
}

TEST(RankProperty, PermutationMatchingArgsort) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    std::map<std::string, double> qs;
    const int n = 2 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) qs["s" + std::to_string(i)] = static_cast<double>(rng() % 5) / 2.0;
    auto r = rank_by_q(q_map(qs));
    ASSERT_EQ(r.size(), qs.size());
    std::set<std::string> ids;
    for (std::size_t i = 0; i < r.size(); ++i) {
      ids.insert(r[i].system_id);
      if (i > 0) ASSERT_GE(r[i - 1].q.q, r[i].q.q);
      // Competition rank: 1 + number of strictly better systems.
      std::size_t better = 0;
      for (const auto& [k, v] : qs) better += v > r[i].q.q;
      ASSERT_EQ(r[i].rank, better + 1);
    }
    ASSERT_EQ(ids.size(), qs.size());
  }
}

// --- aggregation properties ---------------------------------------------------

std::vector<PairVerdict> random_verdicts(std::mt19937_64& rng, std::size_t n) {
  const std::vector<Outcome> outcomes{Outcome::kA, Outcome::kB, Outcome::kTie};
  std::vector<PairVerdict> v;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<std::string, Outcome> d;
    if (rng() % 4) d["accuracy"] = outcomes[rng() % 3];
    v.push_back(make_verdict("a", "b", "u" + std::to_string(i), outcomes[rng() % 3], d));
  }
  return v;
}

TEST(TallyProperty, SwapIdentity) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    auto v = random_verdicts(rng, 1 + rng() % 20);
    auto swapped = v;
    for (auto& x : swapped) {
      std::swap(x.system_a_id, x.system_b_id);
      x.overall = verdict::invert(x.overall);
      for (auto& [k, o] : x.per_dimension) o = verdict::invert(o);
    }
    for (std::string_view scope : {kOverall, std::string_view("accuracy")}) {
      auto t = tally(v, scope);
      auto s = tally(swapped, scope);
      ASSERT_EQ(s.n_win, t.n_lose);
      ASSERT_EQ(s.n_tie, t.n_tie);
      ASSERT_EQ(s.n_lose, t.n_win);
      ASSERT_EQ(s.n_excluded, t.n_excluded);
    }
  }
}

TEST(TallyProperty, OrderIndependence) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<VerdictRecord> records;
    for (const std::string sys : {"x", "y", "z"}) {
      auto v = random_verdicts(rng, 3 + rng() % 10);
      for (auto& x : v) {
        x.system_a_id = sys;
        x.system_b_id = "base";
        x.overall = Outcome::kA;  // keep every Q finite and positive
        if (rng() % 3 == 0) x.overall = Outcome::kTie;
        records.push_back(record(x));
      }
    }
    ReportOptions opts;
    opts.dimension_keys = {"accuracy"};
    const auto base = render_report(build_report(records, opts), ReportFormat::kJson);
    auto shuffled = records;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    ASSERT_EQ(render_report(build_report(shuffled, opts), ReportFormat::kJson), base);
  }
}

// --- correlation and normalization --------------------------------------------

TEST(Correlate, DelegatesAndDropsInfinite) {
  auto qs = q_map({{"a", 1.9485}, {"b", 1.9139}, {"c", 1.7884}, {"d", 1.7237}, {"e", INFINITY}});
  std::map<std::string, double> auc{{"a", 0.7521}, {"b", 0.6824}, {"c", 0.6772}, {"d", 0.6146}, {"e", 0.9}};
  auto r = correlate_q_vs_metric(qs, auc);
  EXPECT_EQ(r.n, 4u);
  EXPECT_NEAR(r.r, 0.8972, 0.02);
  EXPECT_THROW(correlate_q_vs_metric(q_map({{"a", 1}, {"b", 2}}), {{"a", 1}, {"b", 2}}), ArenaError);
}

TEST(Normalize, MinMax) {
  auto n = min_max_normalize({{"x", 0.2}, {"y", 0.5}, {"z", 0.8}});
  EXPECT_NEAR(n["x"], 0.0, 1e-12);
  EXPECT_NEAR(n["y"], 0.5, 1e-12);
  EXPECT_NEAR(n["z"], 1.0, 1e-12);
  auto flat = min_max_normalize({{"x", 0.4}, {"y", 0.4}});
  EXPECT_EQ(flat["x"], 0.0);
  EXPECT_EQ(flat["y"], 0.0);
}

// --- reports ----------------------------------------------------------------------

std::vector<VerdictRecord> four_systems() {
  // Win counts out of 10 against "FM": NRMS 7, LightGCN 6, SASRec 5, DeepFM 4;
  // one tie each, the rest losses.
  std::vector<VerdictRecord> out;
  const std::vector<std::pair<std::string, int>> systems{{"NRMS", 7}, {"LightGCN", 6}, {"SASRec", 5}, {"DeepFM", 4}};
  for (const auto& [sys, wins] : systems) {
    for (int u = 0; u < 10; ++u) {
      Outcome o = u < wins ? Outcome::kA : (u == wins ? Outcome::kTie : Outcome::kB);
      auto v = make_verdict(sys, "FM", "u" + std::to_string(u), o, {{"inspiration", o}});
      v.analysis["inspiration"] = "Analysis for " + sys + " user " + std::to_string(u) + ".";
      out.push_back(record(v));
    }
  }
  VerdictRecord bad;
  bad.user_id = "u99";
  bad.system_a_id = "NRMS";
  bad.system_b_id = "FM";
  bad.error = "no overall verdict found in response";
  out.push_back(bad);
  return out;
}

TEST(Report, FourSystemsRankedOneToFour) {
  ReportOptions opts;
  opts.dimension_keys = {"inspiration"};
  auto report = build_report(four_systems(), opts);
  ASSERT_EQ(report.pairs.size(), 4u);
  const auto* overall = &report.rankings.front();
  for (const auto& r : report.rankings) {
    if (r.scope == kOverall) overall = &r;
  }
  ASSERT_EQ(overall->entries.size(), 4u);
  EXPECT_EQ(overall->entries[0].system_id, "NRMS");
  EXPECT_EQ(overall->entries[3].system_id, "DeepFM");
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(overall->entries[i].rank, i + 1);
  ASSERT_EQ(report.audit.size(), 1u);
  EXPECT_EQ(report.audit[0].user_id, "u99");

  const auto md = render_report(report, ReportFormat::kMarkdown);
  EXPECT_NE(md.find("| System | Baseline | Win(%) | Tie(%) | Lose(%) | Q | Rank |"), std::string::npos);
  EXPECT_NE(md.find("| NRMS | FM | 70.0 | 10.0 | 20.0 | 2.6667 | 1 |"), std::string::npos) << md;
  EXPECT_NE(md.find("u99"), std::string::npos);
}

TEST(Report, SinglePairStructure) {
  std::vector<VerdictRecord> recs{record(make_verdict("a", "b", "1", Outcome::kA)),
                                  record(make_verdict("a", "b", "2", Outcome::kB))};
  auto report = build_report(recs, {});
  const auto md = render_report(report, ReportFormat::kMarkdown);
  EXPECT_NE(md.find("| a | b | 50.0 | 0.0 | 50.0 | 1.0000 | 1 |"), std::string::npos) << md;
  EXPECT_EQ(md, render_report(build_report(recs, {}), ReportFormat::kMarkdown));

  auto csv = render_report(report, ReportFormat::kCsv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "system_a_id,system_b_id,scope,n_win,n_tie,n_lose,n_excluded,win_pct,tie_pct,lose_pct,q");
  auto json = nlohmann::json::parse(render_report(report, ReportFormat::kJson));
  EXPECT_TRUE(json.is_object());
}

TEST(Report, JsonKeepsFullPrecisionAndInf) {
  std::vector<VerdictRecord> recs;
  for (int i = 0; i < 3; ++i) recs.push_back(record(make_verdict("a", "b", std::to_string(i), i ? Outcome::kA : Outcome::kTie)));
  recs.push_back(record(make_verdict("c", "b", "1", Outcome::kA)));
  auto doc = nlohmann::json::parse(render_report(build_report(recs, {}), ReportFormat::kJson));
  const auto text = doc.dump();
  EXPECT_NE(text.find("\"inf\""), std::string::npos);
  EXPECT_NE(text.find("3.0"), std::string::npos);  // (2 + 1) / (0 + 1)
}

TEST(Report, CorrelationNeedsThreeSystems) {
  std::vector<VerdictRecord> recs{record(make_verdict("a", "b", "1", Outcome::kA)),
                                  record(make_verdict("a", "b", "2", Outcome::kB)),
                                  record(make_verdict("c", "b", "1", Outcome::kTie))};
  ReportOptions opts;
  opts.correlate = true;
  opts.metric_values = {{"a", 0.7}, {"c", 0.6}};
  auto report = build_report(recs, opts);
  EXPECT_FALSE(report.correlation.has_value());
  ASSERT_FALSE(report.warnings.empty());
  EXPECT_NE(report.warnings.back().find("correlation"), std::string::npos);
}

TEST(Report, CorrelationAndAnalysisAndAbsolute) {
  ReportOptions opts;
  opts.dimension_keys = {"inspiration"};
  opts.correlate = true;
  opts.metric_name = "auc";
  opts.metric_values = {{"NRMS", 0.75}, {"LightGCN", 0.68}, {"SASRec", 0.67}, {"DeepFM", 0.61}};
  opts.absolute_scores = {{"NRMS", 0.8}, {"LightGCN", 0.5}, {"SASRec", 0.2}};
  opts.excerpts_per_dimension = 1;
  auto report = build_report(four_systems(), opts);
  ASSERT_TRUE(report.correlation.has_value());
  EXPECT_EQ(report.correlation->result.n, 4u);
  EXPECT_GT(report.correlation->result.r, 0.9);
  EXPECT_NEAR(report.absolute_normalized.at("LightGCN"), 0.5, 1e-12);
  EXPECT_FALSE(report.excerpts.empty());
  const auto md = render_report(report, ReportFormat::kMarkdown);
  EXPECT_NE(md.find("Abs. (norm)"), std::string::npos);
  EXPECT_NE(md.find("Analysis for NRMS"), std::string::npos);
  EXPECT_NE(md.find("Pearson r"), std::string::npos);
}

}  // namespace
}  // namespace recarena::arena

#include "recarena/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "recarena/util.hpp"

namespace recarena::metrics {

void RelevanceTable::set(const std::string& user_id, const std::string& item_id,
                         double preference) {
  if (!(preference >= 0.0) || !std::isfinite(preference)) {
    throw std::invalid_argument("relevance preference must be finite and >= 0");
  }
  table_[user_id][item_id] = preference;
}

double RelevanceTable::preference(std::string_view user_id, std::string_view item_id) const {
  auto u = table_.find(std::string(user_id));
  if (u == table_.end()) return 0.0;
  auto it = u->second.find(item_id);
  return it == u->second.end() ? 0.0 : it->second;
}

std::vector<double> RelevanceTable::ideal_gains(std::string_view user_id) const {
  std::vector<double> prefs;
  auto u = table_.find(std::string(user_id));
  if (u == table_.end()) return prefs;
  for (const auto& [item, p] : u->second) {
    if (p > 0.0) prefs.push_back(p);
  }
  std::sort(prefs.begin(), prefs.end(), std::greater<>());
  return prefs;
}

RelevanceTable RelevanceTable::from_corpus(const Corpus& corpus) {
  RelevanceTable table;
  for (const auto& x : corpus.interactions()) {
    double current = table.preference(x.user_id, x.item_id);
    table.set(x.user_id, x.item_id, std::max(current, static_cast<double>(x.label)));
  }
  return table;
}

AucScope parse_auc_scope(std::string_view name) {
  if (name == "global") return AucScope::kGlobal;
  if (name == "per-user-mean") return AucScope::kPerUserMean;
  throw std::invalid_argument("unknown AUC scope '" + std::string(name) + "'");
}

double auc(std::span<const ScoredExample> examples) {
  // Rank-sum form of the Mann-Whitney statistic with midranks for ties.
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (const auto& ex : examples) {
    if (!std::isfinite(ex.score)) throw std::invalid_argument("auc: non-finite score");
    if (ex.label != 0 && ex.label != 1) throw std::invalid_argument("auc: label must be 0/1");
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return examples[a].score < examples[b].score; });

  double positives = 0.0;
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && examples[order[j]].score == examples[order[i]].score) ++j;
    // Ranks i+1 .. j share the midrank.
    double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t m = i; m < j; ++m) {
      if (examples[order[m]].label == 1) {
        positives += 1.0;
        rank_sum += midrank;
      }
    }
    i = j;
  }
  double negatives = static_cast<double>(examples.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw UndefinedMetric("auc requires at least one positive and one negative example");
  }
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double auc_per_user_mean(std::span<const ScoredExample> examples) {
  std::map<std::string, std::vector<ScoredExample>> by_user;
  for (const auto& ex : examples) by_user[ex.user_id].push_back(ex);
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& [user, rows] : by_user) {
    bool has_pos = std::any_of(rows.begin(), rows.end(), [](const auto& e) { return e.label == 1; });
    bool has_neg = std::any_of(rows.begin(), rows.end(), [](const auto& e) { return e.label == 0; });
    if (!has_pos || !has_neg) continue;
    sum += auc(rows);
    ++counted;
  }
  if (counted == 0) throw UndefinedMetric("no user has both positive and negative examples");
  return sum / static_cast<double>(counted);
}

double auc(std::span<const ScoredExample> examples, AucScope scope) {
  return scope == AucScope::kGlobal ? auc(examples) : auc_per_user_mean(examples);
}

double ndcg_at_k(const RecList& rec, const RelevanceTable& relevance, std::size_t k) {
  if (k == 0) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
  auto ideal = relevance.ideal_gains(rec.user_id);
  if (ideal.empty()) return 0.0;

  auto gain = [](double p) { return std::exp2(p) - 1.0; };
  auto discount = [](std::size_t position) { return std::log2(static_cast<double>(position) + 1.0); };

  double dcg = 0.0;
  const std::size_t depth = std::min(k, rec.items.size());
  for (std::size_t i = 0; i < depth; ++i) {
    dcg += gain(relevance.preference(rec.user_id, rec.items[i])) / discount(i + 1);
  }
  double idcg = 0.0;
  const std::size_t ideal_depth = std::min(k, ideal.size());
  for (std::size_t i = 0; i < ideal_depth; ++i) idcg += gain(ideal[i]) / discount(i + 1);
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

namespace {

template <typename Set>
double jaccard(const Set& a, const Set& b) {
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double item_similarity(const Item& a, const Item& b) {
  if (a.categories.empty() && b.categories.empty()) {
    auto ta = util::tokenize(a.title);
    auto tb = util::tokenize(b.title);
    return jaccard(std::set<std::string>(ta.begin(), ta.end()),
                   std::set<std::string>(tb.begin(), tb.end()));
  }
  return jaccard(a.categories, b.categories);
}

double urd(const RecList& rec, const Corpus& catalog) {
  const std::size_t n = rec.items.size();
  if (n < 2) throw UndefinedMetric("urd requires at least two items");
  std::vector<const Item*> items;
  items.reserve(n);
  for (const auto& id : rec.items) items.push_back(&catalog.item(id));

  bool warned = false;
  double ordered_sum = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      if (!warned && items[a]->categories.empty() != items[b]->categories.empty()) {
        spdlog::warn("urd: item without categories in list of '{}' for user '{}'",
                     rec.system_id, rec.user_id);
        warned = true;
      }
      ordered_sum += item_similarity(*items[a], *items[b]);
    }
  }
  // Each unordered pair appears twice in the ordered sum.
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1);
  return 1.0 - ordered_sum / pairs;
}

// Continued fraction for the incomplete beta (modified Lentz).
namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("incomplete_beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("incomplete_beta: a, b must be > 0");
  if (x < 0.0 || x > 1.0) throw std::invalid_argument("incomplete_beta: x outside [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double dof) {
  if (dof <= 0.0) throw std::invalid_argument("student_t_two_sided: dof must be > 0");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

CorrelationResult pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: series lengths differ");
  const std::size_t n = xs.size();
  if (n < 3) throw UndefinedMetric("pearson requires at least 3 paired samples");

  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedMetric("pearson: constant series");

  double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = static_cast<double>(n - 2);
  double p = 0.0;
  if (std::fabs(r) < 1.0) {
    const double t = r * std::sqrt(dof / (1.0 - r * r));
    p = std::clamp(student_t_two_sided(t, dof), 0.0, 1.0);
  }
  return CorrelationResult{r, p, n};
}

}  // namespace recarena::metrics

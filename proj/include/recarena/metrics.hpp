#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "recarena/corpus.hpp"

namespace recarena::metrics {

/// The metric has no value for the given input (no positives, n < 2, ...).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ScoredExample {
  std::string user_id;
  std::string item_id;
  int label = 0;
  double score = 0.0;
};

/// Per-user graded preferences p(i). Absent items have preference 0.
class RelevanceTable {
 public:
  void set(const std::string& user_id, const std::string& item_id, double preference);
  double preference(std::string_view user_id, std::string_view item_id) const;

  /// Positive preferences of one user, sorted descending.
  std::vector<double> ideal_gains(std::string_view user_id) const;

  /// Preference = max label over the user's interactions with the item.
  static RelevanceTable from_corpus(const Corpus& corpus);

 private:
  std::unordered_map<std::string, std::map<std::string, double, std::less<>>> table_;
};

struct CorrelationResult {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

enum class AucScope { kGlobal, kPerUserMean };

AucScope parse_auc_scope(std::string_view name);

/// Mann-Whitney AUC pooled over all examples; score ties count one half.
double auc(std::span<const ScoredExample> examples);

/// Mean of per-user AUCs over users that have both classes.
double auc_per_user_mean(std::span<const ScoredExample> examples);

double auc(std::span<const ScoredExample> examples, AucScope scope);

/// DCG@k / IDCG@k with gain 2^p - 1 and discount log2(position + 1).
/// Returns 0 when the user has no relevant items.
double ndcg_at_k(const RecList& rec, const RelevanceTable& relevance, std::size_t k);

/// Item similarity used by urd(): Jaccard over category sets. When both
/// sets are empty, Jaccard over lowercased title tokens; when exactly one
/// is empty the similarity is 0.
double item_similarity(const Item& a, const Item& b);

/// One minus the mean pairwise similarity of the list's items, in [0, 1].
double urd(const RecList& rec, const Corpus& catalog);

/// Sample Pearson r with a two-sided t-test p-value (n - 2 degrees of freedom).
CorrelationResult pearson(std::span<const double> xs, std::span<const double> ys);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Two-sided tail probability P(|T| >= |t|) for Student's t.
double student_t_two_sided(double t, double dof);

}  // namespace recarena::metrics

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "recarena/corpus.hpp"
#include "recarena/metrics.hpp"

#ifndef RECARENA_TEST_DATA_DIR
#define RECARENA_TEST_DATA_DIR "tests/data"
#endif
#ifndef RECARENA_DATA_DIR
#define RECARENA_DATA_DIR "data"
#endif

namespace recarena::testing {

inline std::filesystem::path test_data(const std::string& rel) {
  return std::filesystem::path(RECARENA_TEST_DATA_DIR) / rel;
}

inline std::filesystem::path toy_data(const std::string& rel) {
  return std::filesystem::path(RECARENA_DATA_DIR) / "toy" / rel;
}

/// Fresh, empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("recarena-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline Item make_item(std::string id, std::set<std::string> cats, std::string title = "") {
  if (title.empty()) title = "Title " + id;
  return Item{std::move(id), std::move(title), std::move(cats), std::nullopt};
}

/// Small hand-built corpus: user u1 likes drama/romance, u2 likes action.
inline Corpus small_corpus() {
  std::vector<User> users{
      {"u1", {{"gender", "F"}, {"age_range", "25-34"}, {"occupation", "writer"}}},
      {"u2", {}},
  };
  std::vector<Item> items{
      make_item("i1", {"Drama"}),           make_item("i2", {"Drama", "Romance"}),
      make_item("i3", {"Romance"}),         make_item("i4", {"Action"}),
      make_item("i5", {"Action", "Sci-Fi"}), make_item("i6", {"Horror"}),
      make_item("i7", {"Comedy"}),          make_item("i8", {"Documentary"}),
  };
  std::vector<Interaction> inter{
      {"u1", "i1", 1, 5.0, 100}, {"u1", "i2", 1, 4.0, 200}, {"u1", "i6", 0, 2.0, 300},
      {"u2", "i4", 1, 5.0, 150}, {"u2", "i7", 0, 1.0, 250},
  };
  return Corpus(std::move(users), std::move(items), std::move(inter));
}

/// Random catalog for property tests: `n_items` items with 0..3 categories
/// drawn from a pool of `n_cats`.
inline std::vector<Item> random_items(std::mt19937_64& rng, std::size_t n_items, int n_cats) {
  std::uniform_int_distribution<int> count(0, 3);
  std::uniform_int_distribution<int> cat(0, n_cats - 1);
  std::vector<Item> items;
  for (std::size_t i = 0; i < n_items; ++i) {
    std::set<std::string> cats;
    int c = count(rng);
    for (int j = 0; j < c; ++j) cats.insert("c" + std::to_string(cat(rng)));
    items.push_back(make_item("it" + std::to_string(i), cats, "word" + std::to_string(i % 3) + " common"));
  }
  return items;
}

// --- brute-force oracles ----------------------------------------------------
// Written independently of the library: explicit pair counting and sums.

inline double oracle_auc(const std::vector<metrics::ScoredExample>& ex) {
  double hits = 0.0;
  double pairs = 0.0;
  for (const auto& p : ex) {
    if (p.label != 1) continue;
    for (const auto& n : ex) {
      if (n.label != 0) continue;
      pairs += 1.0;
      if (p.score > n.score) hits += 1.0;
      else if (p.score == n.score) hits += 0.5;
    }
  }
  return hits / pairs;
}

/// DCG by direct summation; IDCG by trying every ordering of the relevant
/// preferences (lists are tiny) and keeping the best.
inline double oracle_ndcg(const std::vector<double>& list_prefs, std::vector<double> relevant_prefs,
                          std::size_t k) {
  auto dcg = [k](const std::vector<double>& prefs) {
    double s = 0.0;
    for (std::size_t i = 0; i < prefs.size() && i < k; ++i) {
      s += (std::pow(2.0, prefs[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    return s;
  };
  std::sort(relevant_prefs.begin(), relevant_prefs.end());
  double ideal = 0.0;
  do {
    ideal = std::max(ideal, dcg(relevant_prefs));
  } while (std::next_permutation(relevant_prefs.begin(), relevant_prefs.end()));
  if (ideal == 0.0) return 0.0;
  return dcg(list_prefs) / ideal;
}

inline double oracle_jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace recarena::testing

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace recarena {

/// Raised when a dataset file is malformed or a corpus violates its
/// integrity rules. `file` and `line` are set for record-level failures.
class CorpusError : public std::runtime_error {
 public:
  explicit CorpusError(const std::string& what) : std::runtime_error(what) {}
  CorpusError(const std::string& what, std::string file, std::size_t line);

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_ = 0;
};

// Attribute keys used by the dataset adapters and the persona renderer.
inline constexpr std::string_view kAttrGender = "gender";
inline constexpr std::string_view kAttrAgeRange = "age_range";
inline constexpr std::string_view kAttrOccupation = "occupation";

struct User {
  std::string user_id;
  std::map<std::string, std::string> attributes;

  bool operator==(const User&) const = default;
};

struct Item {
  std::string item_id;
  std::string title;
  std::set<std::string> categories;
  std::optional<std::string> abstract;

  bool operator==(const Item&) const = default;
};

struct Interaction {
  std::string user_id;
  std::string item_id;
  int label = 0;
  std::optional<double> rating;
  std::optional<std::int64_t> timestamp;

  bool operator==(const Interaction&) const = default;
};

/// Immutable, validated dataset. Construction checks id uniqueness and
/// referential integrity, then builds lookup indexes.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<User> users, std::vector<Item> items,
         std::vector<Interaction> interactions);

  const std::vector<User>& users() const { return users_; }
  const std::vector<Item>& items() const { return items_; }
  const std::vector<Interaction>& interactions() const { return interactions_; }

  const User* find_user(std::string_view user_id) const;
  const Item* find_item(std::string_view item_id) const;
  const User& user(std::string_view user_id) const;
  const Item& item(std::string_view item_id) const;

  /// All interactions of one user in chronological order. Interactions
  /// without a timestamp sort before timestamped ones; ties keep file order.
  std::vector<const Interaction*> history(std::string_view user_id) const;

  /// Label-1 subset of history(), same order.
  std::vector<const Interaction*> positive_history(std::string_view user_id) const;

  bool operator==(const Corpus& other) const;

 private:
  std::vector<User> users_;
  std::vector<Item> items_;
  std::vector<Interaction> interactions_;
  std::unordered_map<std::string, std::size_t> user_index_;
  std::unordered_map<std::string, std::size_t> item_index_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_user_;
};

/// One system's ranked list for one user.
struct RecList {
  std::string system_id;
  std::string user_id;
  std::vector<std::string> items;

  bool operator==(const RecList&) const = default;
};

/// Throws CorpusError when the list is empty, has duplicates, or names an
/// unknown user or item.
void validate_rec_list(const RecList& rec, const Corpus& corpus);

// --- dataset adapters -------------------------------------------------------

struct MovieLensOptions {
  /// Ratings at or above this value are labeled relevant.
  double positive_threshold = 4.0;
};

/// Reads users.dat, movies.dat and ratings.dat ("::"-delimited, ML-1M layout).
Corpus parse_movielens(const std::filesystem::path& dir,
                       const MovieLensOptions& options = {});

/// Reads news.tsv and behaviors.tsv (MIND layout).
Corpus parse_mind(const std::filesystem::path& dir);

/// ML-1M code tables. Both throw CorpusError on an unknown code.
std::string movielens_age_range(int code);
std::string movielens_occupation(int code);

// --- canonical formats ------------------------------------------------------

nlohmann::json corpus_to_json(const Corpus& corpus);
Corpus corpus_from_json(const nlohmann::json& doc);

Corpus read_corpus(const std::filesystem::path& path);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

nlohmann::json rec_list_to_json(const RecList& rec);
RecList rec_list_from_json(const nlohmann::json& obj);

std::vector<RecList> read_rec_lists(const std::filesystem::path& path);
void write_rec_lists(const std::vector<RecList>& lists,
                     const std::filesystem::path& path);

// --- baselines --------------------------------------------------------------

enum class BaselineMethod { kPopularity, kRandom };

BaselineMethod parse_baseline_method(std::string_view name);
std::string_view to_string(BaselineMethod method);

/// One list per user, in corpus user order. Candidates exclude each user's
/// label-1 history; short pools yield short lists with a logged warning.
std::vector<RecList> baseline_recommend(const Corpus& corpus,
                                        BaselineMethod method, std::size_t k,
                                        std::uint64_t seed);

}  // namespace recarena

#include "recarena/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "recarena/util.hpp"

namespace recarena {

namespace fs = std::filesystem;
using nlohmann::json;

CorpusError::CorpusError(const std::string& what, std::string file, std::size_t line)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
      file_(std::move(file)),
      line_(line) {}

// --- Corpus -----------------------------------------------------------------

Corpus::Corpus(std::vector<User> users, std::vector<Item> items,
               std::vector<Interaction> interactions)
    : users_(std::move(users)),
      items_(std::move(items)),
      interactions_(std::move(interactions)) {
  for (std::size_t i = 0; i < users_.size(); ++i) {
    const auto& id = users_[i].user_id;
    if (id.empty()) throw CorpusError("user with empty user_id");
    if (!user_index_.emplace(id, i).second) throw CorpusError("duplicate user_id '" + id + "'");
  }
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& id = items_[i].item_id;
    if (id.empty()) throw CorpusError("item with empty item_id");
    if (!item_index_.emplace(id, i).second) throw CorpusError("duplicate item_id '" + id + "'");
  }
  for (std::size_t i = 0; i < interactions_.size(); ++i) {
    const auto& x = interactions_[i];
    if (!user_index_.contains(x.user_id)) {
      throw CorpusError("interaction references unknown user '" + x.user_id + "'");
    }
    if (!item_index_.contains(x.item_id)) {
      throw CorpusError("interaction references unknown item '" + x.item_id + "'");
    }
    if (x.label != 0 && x.label != 1) {
      throw CorpusError("interaction label must be 0 or 1, got " + std::to_string(x.label));
    }
    by_user_[x.user_id].push_back(i);
  }
  for (auto& [user_id, idx] : by_user_) {
    std::stable_sort(idx.begin(), idx.end(), [this](std::size_t a, std::size_t b) {
      const auto& ta = interactions_[a].timestamp;
      const auto& tb = interactions_[b].timestamp;
      if (!ta || !tb) return !ta && tb.has_value();
      return *ta < *tb;
    });
  }
}

const User* Corpus::find_user(std::string_view user_id) const {
  auto it = user_index_.find(std::string(user_id));
  return it == user_index_.end() ? nullptr : &users_[it->second];
}

const Item* Corpus::find_item(std::string_view item_id) const {
  auto it = item_index_.find(std::string(item_id));
  return it == item_index_.end() ? nullptr : &items_[it->second];
}

const User& Corpus::user(std::string_view user_id) const {
  const auto* u = find_user(user_id);
  if (u == nullptr) throw CorpusError("unknown user '" + std::string(user_id) + "'");
  return *u;
}

const Item& Corpus::item(std::string_view item_id) const {
  const auto* it = find_item(item_id);
  if (it == nullptr) throw CorpusError("unknown item '" + std::string(item_id) + "'");
  return *it;
}

std::vector<const Interaction*> Corpus::history(std::string_view user_id) const {
  std::vector<const Interaction*> out;
  auto it = by_user_.find(std::string(user_id));
  if (it == by_user_.end()) return out;
  out.reserve(it->second.size());
  for (auto i : it->second) out.push_back(&interactions_[i]);
  return out;
}

std::vector<const Interaction*> Corpus::positive_history(std::string_view user_id) const {
  auto all = history(user_id);
  std::erase_if(all, [](const Interaction* x) { return x->label != 1; });
  return all;
}

bool Corpus::operator==(const Corpus& other) const {
  return users_ == other.users_ && items_ == other.items_ &&
         interactions_ == other.interactions_;
}

void validate_rec_list(const RecList& rec, const Corpus& corpus) {
  if (rec.items.empty()) {
    throw CorpusError("empty recommendation list for system '" + rec.system_id +
                      "', user '" + rec.user_id + "'");
  }
  if (corpus.find_user(rec.user_id) == nullptr) {
    throw CorpusError("recommendation list names unknown user '" + rec.user_id + "'");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : rec.items) {
    if (corpus.find_item(id) == nullptr) {
      throw CorpusError("recommendation list for user '" + rec.user_id +
                        "' names unknown item '" + id + "'");
    }
    if (!seen.insert(id).second) {
      throw CorpusError("duplicate item '" + id + "' in list of system '" +
                        rec.system_id + "' for user '" + rec.user_id + "'");
    }
  }
}

// --- MovieLens --------------------------------------------------------------

std::string movielens_age_range(int code) {
  switch (code) {
    case 1: return "Under 18";
    case 18: return "18-24";
    case 25: return "25-34";
    case 35: return "35-44";
    case 45: return "45-49";
    case 50: return "50-55";
    case 56: return "56+";
    default: throw CorpusError("unknown MovieLens age code " + std::to_string(code));
  }
}

std::string movielens_occupation(int code) {
  static constexpr std::array<std::string_view, 21> kLabels = {
      "other",
      "academic/educator",
      "artist",
      "clerical/admin",
      "college/grad student",
      "customer service",
      "doctor/health care",
      "executive/managerial",
      "farmer",
      "homemaker",
      "K-12 student",
      "lawyer",
      "programmer",
      "retired",
      "sales/marketing",
      "scientist",
      "self-employed",
      "technician/engineer",
      "tradesman/craftsman",
      "unemployed",
      "writer",
  };
  if (code < 0 || code >= static_cast<int>(kLabels.size())) {
    throw CorpusError("unknown MovieLens occupation code " + std::to_string(code));
  }
  return std::string(kLabels[static_cast<std::size_t>(code)]);
}

namespace {

template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (util::trim(line).empty()) continue;
    fn(line, line_no);
  }
}

template <typename T>
T parse_number(std::string_view text, const fs::path& file, std::size_t line,
               std::string_view field) {
  text = util::trim(text);
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw CorpusError("invalid " + std::string(field) + " '" + std::string(text) + "'",
                      file.string(), line);
  }
  return value;
}

std::vector<std::string> fields(const std::string& line, std::string_view delim,
                                std::size_t expected, const fs::path& file,
                                std::size_t line_no) {
  auto parts = util::split(line, delim);
  if (parts.size() != expected) {
    throw CorpusError("expected " + std::to_string(expected) + " fields, found " +
                          std::to_string(parts.size()),
                      file.string(), line_no);
  }
  return parts;
}

}  // namespace

Corpus parse_movielens(const fs::path& dir, const MovieLensOptions& options) {
  const auto users_path = dir / "users.dat";
  const auto movies_path = dir / "movies.dat";
  const auto ratings_path = dir / "ratings.dat";

  std::vector<User> users;
  for_each_line(users_path, [&](const std::string& line, std::size_t n) {
    auto f = fields(line, "::", 5, users_path, n);
    User u;
    u.user_id = std::string(util::trim(f[0]));
    if (u.user_id.empty()) throw CorpusError("empty user id", users_path.string(), n);
    u.attributes[std::string(kAttrGender)] = std::string(util::trim(f[1]));
    try {
      u.attributes[std::string(kAttrAgeRange)] =
          movielens_age_range(parse_number<int>(f[2], users_path, n, "age code"));
      u.attributes[std::string(kAttrOccupation)] =
          movielens_occupation(parse_number<int>(f[3], users_path, n, "occupation code"));
    } catch (const CorpusError& e) {
      if (!e.file().empty()) throw;
      throw CorpusError(e.what(), users_path.string(), n);
    }
    users.push_back(std::move(u));
  });

  std::vector<Item> items;
  for_each_line(movies_path, [&](const std::string& line, std::size_t n) {
    auto f = fields(line, "::", 3, movies_path, n);
    Item it;
    it.item_id = std::string(util::trim(f[0]));
    if (it.item_id.empty()) throw CorpusError("empty movie id", movies_path.string(), n);
    it.title = util::ensure_utf8(util::trim(f[1]));
    for (const auto& g : util::split(f[2], "|")) {
      auto genre = util::trim(g);
      if (!genre.empty()) it.categories.insert(util::ensure_utf8(genre));
    }
    items.push_back(std::move(it));
  });

  std::vector<Interaction> interactions;
  for_each_line(ratings_path, [&](const std::string& line, std::size_t n) {
    auto f = fields(line, "::", 4, ratings_path, n);
    Interaction x;
    x.user_id = std::string(util::trim(f[0]));
    x.item_id = std::string(util::trim(f[1]));
    x.rating = parse_number<double>(f[2], ratings_path, n, "rating");
    x.timestamp = parse_number<std::int64_t>(f[3], ratings_path, n, "timestamp");
    x.label = *x.rating >= options.positive_threshold ? 1 : 0;
    interactions.push_back(std::move(x));
  });

  return Corpus(std::move(users), std::move(items), std::move(interactions));
}

// --- MIND -------------------------------------------------------------------

namespace {

// "11/15/2019 8:55:22 AM" -> seconds since the epoch, read as UTC.
std::optional<std::int64_t> parse_mind_time(std::string_view text) {
  std::istringstream in{std::string(util::trim(text))};
  std::tm tm{};
  in >> std::get_time(&tm, "%m/%d/%Y %I:%M:%S %p");
  if (in.fail()) return std::nullopt;
  return static_cast<std::int64_t>(timegm(&tm));
}

}  // namespace

Corpus parse_mind(const fs::path& dir) {
  const auto news_path = dir / "news.tsv";
  const auto behaviors_path = dir / "behaviors.tsv";

  std::vector<Item> items;
  for_each_line(news_path, [&](const std::string& line, std::size_t n) {
    auto f = util::split(line, "\t");
    if (f.size() < 4) {
      throw CorpusError("expected at least 4 tab-separated fields, found " +
                            std::to_string(f.size()),
                        news_path.string(), n);
    }
    Item it;
    it.item_id = std::string(util::trim(f[0]));
    if (it.item_id.empty()) throw CorpusError("empty news id", news_path.string(), n);
    for (std::size_t col : {1u, 2u}) {
      auto c = util::trim(f[col]);
      if (!c.empty()) it.categories.insert(std::string(c));
    }
    it.title = std::string(util::trim(f[3]));
    if (f.size() > 4 && !util::trim(f[4]).empty()) it.abstract = std::string(util::trim(f[4]));
    items.push_back(std::move(it));
  });

  std::vector<User> users;
  std::unordered_set<std::string> known_users;
  std::unordered_set<std::string> history_seen;  // "user\titem"
  std::vector<Interaction> interactions;
  for_each_line(behaviors_path, [&](const std::string& line, std::size_t n) {
    auto f = util::split(line, "\t");
    if (f.size() != 5) {
      throw CorpusError("expected 5 tab-separated fields, found " + std::to_string(f.size()),
                        behaviors_path.string(), n);
    }
    std::string user_id(util::trim(f[1]));
    if (user_id.empty()) throw CorpusError("empty user id", behaviors_path.string(), n);
    if (known_users.insert(user_id).second) users.push_back(User{user_id, {}});

    // The same click history is repeated on every impression row of a user.
    for (const auto& tok : util::split(util::trim(f[3]), " ")) {
      if (tok.empty()) continue;
      if (!history_seen.insert(user_id + '\t' + tok).second) continue;
      interactions.push_back(Interaction{user_id, tok, 1, std::nullopt, std::nullopt});
    }

    auto when = parse_mind_time(f[2]);
    for (const auto& tok : util::split(util::trim(f[4]), " ")) {
      if (tok.empty()) continue;
      auto dash = tok.rfind('-');
      std::string suffix = dash == std::string::npos ? "" : tok.substr(dash + 1);
      if (dash == 0 || (suffix != "0" && suffix != "1")) {
        throw CorpusError("impression token '" + tok + "' lacks a -0/-1 suffix",
                          behaviors_path.string(), n);
      }
      interactions.push_back(
          Interaction{user_id, tok.substr(0, dash), suffix == "1" ? 1 : 0, std::nullopt, when});
    }
  });

  return Corpus(std::move(users), std::move(items), std::move(interactions));
}

// --- canonical JSON ---------------------------------------------------------

json corpus_to_json(const Corpus& corpus) {
  json users = json::array();
  for (const auto& u : corpus.users()) {
    users.push_back({{"user_id", u.user_id}, {"attributes", u.attributes}});
  }
  json items = json::array();
  for (const auto& it : corpus.items()) {
    json obj = {{"item_id", it.item_id},
                {"title", it.title},
                {"categories", json(std::vector<std::string>(it.categories.begin(),
                                                             it.categories.end()))}};
    if (it.abstract) obj["abstract"] = *it.abstract;
    items.push_back(std::move(obj));
  }
  json interactions = json::array();
  for (const auto& x : corpus.interactions()) {
    json obj = {{"user_id", x.user_id}, {"item_id", x.item_id}, {"label", x.label}};
    if (x.rating) obj["rating"] = *x.rating;
    if (x.timestamp) obj["timestamp"] = *x.timestamp;
    interactions.push_back(std::move(obj));
  }
  return json{{"users", std::move(users)},
              {"items", std::move(items)},
              {"interactions", std::move(interactions)}};
}

Corpus corpus_from_json(const json& doc) {
  try {
    std::vector<User> users;
    for (const auto& u : doc.at("users")) {
      User user{u.at("user_id").get<std::string>(), {}};
      if (u.contains("attributes")) {
        user.attributes = u.at("attributes").get<std::map<std::string, std::string>>();
      }
      users.push_back(std::move(user));
    }
    std::vector<Item> items;
    for (const auto& i : doc.at("items")) {
      Item item;
      item.item_id = i.at("item_id").get<std::string>();
      item.title = i.value("title", "");
      for (const auto& c : i.value("categories", json::array())) {
        item.categories.insert(c.get<std::string>());
      }
      if (i.contains("abstract") && !i.at("abstract").is_null()) {
        item.abstract = i.at("abstract").get<std::string>();
      }
      items.push_back(std::move(item));
    }
    std::vector<Interaction> interactions;
    for (const auto& x : doc.at("interactions")) {
      Interaction in;
      in.user_id = x.at("user_id").get<std::string>();
      in.item_id = x.at("item_id").get<std::string>();
      in.label = x.at("label").get<int>();
      if (x.contains("rating") && !x.at("rating").is_null()) in.rating = x.at("rating").get<double>();
      if (x.contains("timestamp") && !x.at("timestamp").is_null()) {
        in.timestamp = x.at("timestamp").get<std::int64_t>();
      }
      interactions.push_back(std::move(in));
    }
    return Corpus(std::move(users), std::move(items), std::move(interactions));
  } catch (const json::exception& e) {
    throw CorpusError(std::string("malformed corpus JSON: ") + e.what());
  }
}

Corpus read_corpus(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(util::read_file(path));
  } catch (const json::parse_error& e) {
    throw CorpusError(path.string() + ": invalid JSON: " + e.what());
  } catch (const std::runtime_error& e) {
    throw CorpusError(e.what());
  }
  return corpus_from_json(doc);
}

void write_corpus(const Corpus& corpus, const fs::path& path) {
  util::write_file_atomic(path, corpus_to_json(corpus).dump(1) + "\n");
}

json rec_list_to_json(const RecList& rec) {
  return json{{"system_id", rec.system_id}, {"user_id", rec.user_id}, {"items", rec.items}};
}

RecList rec_list_from_json(const json& obj) {
  try {
    return RecList{obj.at("system_id").get<std::string>(), obj.at("user_id").get<std::string>(),
                   obj.at("items").get<std::vector<std::string>>()};
  } catch (const json::exception& e) {
    throw CorpusError(std::string("malformed recommendation list: ") + e.what());
  }
}

std::vector<RecList> read_rec_lists(const fs::path& path) {
  std::vector<json> rows;
  try {
    rows = util::read_json_lines(path);
  } catch (const std::runtime_error& e) {
    throw CorpusError(e.what());
  }
  std::vector<RecList> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      out.push_back(rec_list_from_json(rows[i]));
    } catch (const CorpusError& e) {
      throw CorpusError(e.what(), path.string(), i + 1);
    }
  }
  return out;
}

void write_rec_lists(const std::vector<RecList>& lists, const fs::path& path) {
  std::vector<json> rows;
  rows.reserve(lists.size());
  for (const auto& rec : lists) rows.push_back(rec_list_to_json(rec));
  util::write_json_lines(rows, path);
}

// --- baselines --------------------------------------------------------------

BaselineMethod parse_baseline_method(std::string_view name) {
  if (name == "popularity") return BaselineMethod::kPopularity;
  if (name == "random") return BaselineMethod::kRandom;
  throw std::invalid_argument("unknown baseline method '" + std::string(name) + "'");
}

std::string_view to_string(BaselineMethod method) {
  return method == BaselineMethod::kPopularity ? "popularity" : "random";
}

std::vector<RecList> baseline_recommend(const Corpus& corpus, BaselineMethod method,
                                        std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("baseline_recommend: k must be >= 1");

  std::vector<std::string> ranked;
  ranked.reserve(corpus.items().size());
  for (const auto& it : corpus.items()) ranked.push_back(it.item_id);
  if (method == BaselineMethod::kPopularity) {
    std::unordered_map<std::string, std::size_t> positives;
    for (const auto& x : corpus.interactions()) {
      if (x.label == 1) ++positives[x.item_id];
    }
    std::sort(ranked.begin(), ranked.end(), [&](const std::string& a, const std::string& b) {
      auto ca = positives[a];
      auto cb = positives[b];
      return ca != cb ? ca > cb : a < b;
    });
  }

  std::mt19937_64 rng(seed);
  std::vector<RecList> out;
  out.reserve(corpus.users().size());
  for (const auto& user : corpus.users()) {
    std::unordered_set<std::string> seen;
    for (const auto* x : corpus.positive_history(user.user_id)) seen.insert(x->item_id);

    std::vector<std::string> pool;
    for (const auto& id : ranked) {
      if (!seen.contains(id)) pool.push_back(id);
    }
    if (method == BaselineMethod::kRandom) util::stable_shuffle(pool, rng);
    if (pool.size() < k) {
      spdlog::warn("user '{}': candidate pool has {} items, list truncated below k={}",
                   user.user_id, pool.size(), k);
    }
    if (pool.empty()) continue;
    pool.resize(std::min(pool.size(), k));
    out.push_back(RecList{std::string(to_string(method)), user.user_id, std::move(pool)});
  }
  return out;
}

}  // namespace recarena

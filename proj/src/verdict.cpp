#include "recarena/verdict.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <sstream>

#include "recarena/util.hpp"

namespace recarena::verdict {

using nlohmann::json;

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::kA: return "A";
    case Outcome::kB: return "B";
    case Outcome::kTie: return "tie";
  }
  return "tie";
}

std::optional<Outcome> parse_outcome(std::string_view text) {
  std::string s = util::to_lower(util::trim(text));
  while (!s.empty() && (s.back() == '.' || s.back() == '!')) s.pop_back();
  for (std::string_view prefix : {"recommender system ", "system ", "list "}) {
    if (s.starts_with(prefix)) {
      s = s.substr(prefix.size());
      break;
    }
  }
  if (s == "a" || s == "a wins") return Outcome::kA;
  if (s == "b" || s == "b wins") return Outcome::kB;
  if (s == "tie" || s == "draw" || s == "tied") return Outcome::kTie;
  return std::nullopt;
}

Outcome invert(Outcome outcome) {
  switch (outcome) {
    case Outcome::kA: return Outcome::kB;
    case Outcome::kB: return Outcome::kA;
    case Outcome::kTie: return Outcome::kTie;
  }
  return Outcome::kTie;
}

// --- extraction -------------------------------------------------------------

namespace {

std::optional<json> parse_object(std::string_view body) {
  try {
    auto j = json::parse(body);
    if (j.is_object()) return j;
  } catch (const json::parse_error&) {
  }
  return std::nullopt;
}

// End index (exclusive) of the balanced {...} starting at `open`, honoring
// JSON string literals.
std::optional<std::size_t> balanced_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<json> extract_last_json(std::string_view text) {
  // Fenced blocks: ``` or ```json ... ```
  std::optional<json> last;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    auto body_start = text.find('\n', open + 3);
    if (body_start == std::string_view::npos) break;
    auto close = text.find("```", body_start + 1);
    if (close == std::string_view::npos) break;
    if (auto obj = parse_object(text.substr(body_start + 1, close - body_start - 1))) last = obj;
    pos = close + 3;
  }
  if (last) return last;

  // Bare objects: try each top-level '{' and keep the last that parses.
  std::size_t i = 0;
  while ((i = text.find('{', i)) != std::string_view::npos) {
    auto end = balanced_end(text, i);
    if (!end) break;
    if (auto obj = parse_object(text.substr(i, *end - i))) {
      last = obj;
      i = *end;
    } else {
      ++i;
    }
  }
  return last;
}

// --- prose fallback ---------------------------------------------------------

namespace {

std::vector<std::string> aliases_for(const std::string& key) {
  if (key == "overall") {
    return {"overall comparison", "overall evaluation", "overall verdict", "overall",
            "final verdict", "final evaluation", "conclusion"};
  }
  std::string spaced = key;
  std::replace(spaced.begin(), spaced.end(), '_', ' ');
  std::vector<std::string> out{util::to_lower(spaced)};
  if (spaced != key) out.push_back(util::to_lower(key));
  return out;
}

std::string strip_heading_markup(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (c == '#' || c == '*' || c == '-' || c == '_' || c == '>' ||
        std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
      if (j < line.size() && (line[j] == '.' || line[j] == ')')) {
        i = j + 1;
      } else {
        break;
      }
    } else {
      break;
    }
  }
  return std::string(line.substr(i));
}

std::size_t word_count(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::string w;
  std::size_t n = 0;
  while (in >> w) ++n;
  return n;
}

// If `line` is a heading for one of `keys`, returns the key and the text
// that follows the heading on the same line.
std::optional<std::pair<std::string, std::string>> match_heading(
    std::string_view line, const std::vector<std::string>& keys) {
  const std::string stripped = strip_heading_markup(line);
  const std::string lower = util::to_lower(stripped);
  for (const auto& key : keys) {
    for (const auto& alias : aliases_for(key)) {
      if (!lower.starts_with(alias)) continue;
      std::string rest = stripped.substr(alias.size());
      std::string_view tail = rest;
      while (!tail.empty() && (tail.front() == '*' || tail.front() == '#')) tail.remove_prefix(1);
      const bool boundary = tail.empty() || std::string_view(":,.-(").find(tail.front()) !=
                                                std::string_view::npos;
      const bool short_heading = tail.empty() || (std::isspace(static_cast<unsigned char>(tail.front())) &&
                                                  word_count(lower) <= 4);
      if (boundary || short_heading) {
        while (!tail.empty() && (tail.front() == ':' || tail.front() == '*' || tail.front() == '-' ||
                                 std::isspace(static_cast<unsigned char>(tail.front())))) {
          tail.remove_prefix(1);
        }
        return std::make_pair(key, std::string(tail));
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::map<std::string, std::string> split_sections(std::string_view text,
                                                  const std::vector<std::string>& keys) {
  std::vector<std::string> all_keys = keys;
  all_keys.emplace_back("overall");

  std::map<std::string, std::string> sections;
  std::optional<std::string> current;
  bool in_fence = false;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (util::trim(line).starts_with("```")) {
      in_fence = !in_fence;
      current.reset();
      continue;
    }
    if (in_fence) continue;
    if (auto heading = match_heading(line, all_keys)) {
      current = heading->first;
      auto& body = sections[*current];
      if (!heading->second.empty()) {
        if (!body.empty()) body += '\n';
        body += heading->second;
      }
      continue;
    }
    if (current) {
      auto& body = sections[*current];
      if (!body.empty()) body += '\n';
      body += line;
    }
  }
  for (auto& [key, body] : sections) body = std::string(util::trim(body));
  return sections;
}

std::optional<Outcome> scan_outcome(std::string_view text) {
  static const std::regex kA(
      R"(\b(?:recommender\s+system\s+|system\s+|list\s+)?a\s+(?:clearly\s+)?(?:wins|is\s+(?:better|superior|preferred|the\s+winner)|performs\s+better)\b)",
      std::regex::icase);
  static const std::regex kB(
      R"(\b(?:recommender\s+system\s+|system\s+|list\s+)?b\s+(?:clearly\s+)?(?:wins|is\s+(?:better|superior|preferred|the\s+winner)|performs\s+better)\b)",
      std::regex::icase);
  static const std::regex kTie(R"(\b(?:tie|tied|draw)\b)", std::regex::icase);

  const std::string s(text);
  std::optional<Outcome> found;
  std::ptrdiff_t best = -1;
  auto consider = [&](const std::regex& re, Outcome outcome) {
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
      if (it->position() > best) {
        best = it->position();
        found = outcome;
      }
    }
  };
  consider(kA, Outcome::kA);
  consider(kB, Outcome::kB);
  consider(kTie, Outcome::kTie);
  return found;
}

// --- parse ------------------------------------------------------------------

PairVerdict parse_verdict(const judge::RawJudgment& raw, const promptkit::PromptBundle& bundle,
                          const promptkit::DimensionRegistry& dims) {
  if (util::trim(raw.response_text).empty()) {
    throw UnparseableError("empty response", raw.response_text);
  }
  const std::vector<std::string> keys =
      bundle.dimension_keys.empty() ? dims.keys() : bundle.dimension_keys;

  PairVerdict v;
  v.user_id = bundle.user_id;
  v.system_a_id = bundle.system_a_id;
  v.system_b_id = bundle.system_b_id;
  v.provider_meta = judge::to_json(raw.provider_meta);

  std::optional<Outcome> overall;
  auto block = extract_last_json(raw.response_text);
  if (block && (block->contains("dimensions") || block->contains("overall"))) {
    if (block->contains("dimensions")) {
      const auto& d = block->at("dimensions");
      if (!d.is_object()) throw ValidationError("\"dimensions\" must be an object");
      std::vector<std::string> unknown;
      for (const auto& [key, value] : d.items()) {
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
          unknown.push_back(key);
          continue;
        }
        if (value.is_null()) continue;
        auto outcome = value.is_string() ? parse_outcome(value.get<std::string>()) : std::nullopt;
        if (!outcome) {
          throw ValidationError("dimension '" + key + "' has invalid value " + value.dump());
        }
        v.per_dimension[key] = *outcome;
      }
      if (!unknown.empty()) {
        std::string list;
        for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
        throw ValidationError("unknown dimension keys in verdict: " + list);
      }
    }
    if (block->contains("overall") && !block->at("overall").is_null()) {
      const auto& o = block->at("overall");
      overall = o.is_string() ? parse_outcome(o.get<std::string>()) : std::nullopt;
      if (!overall) throw ValidationError("invalid overall value " + o.dump());
    }
  }

  const auto sections = split_sections(raw.response_text, keys);
  for (const auto& key : keys) {
    auto sec = sections.find(key);
    if (sec == sections.end()) continue;
    if (!sec->second.empty()) v.analysis[key] = sec->second;
    if (!v.per_dimension.contains(key)) {
      if (auto outcome = scan_outcome(sec->second)) {
        v.per_dimension[key] = *outcome;
        v.used_fallback = true;
      }
    }
  }
  if (!overall) {
    if (auto sec = sections.find("overall"); sec != sections.end()) {
      overall = scan_outcome(sec->second);
      if (overall) v.used_fallback = true;
    }
  }
  if (!overall) {
    throw UnparseableError("no overall verdict found in response", raw.response_text);
  }
  v.overall = *overall;

  if (bundle.swap_applied) {
    for (auto& [key, outcome] : v.per_dimension) outcome = invert(outcome);
    v.overall = invert(v.overall);
    v.swap_corrected = true;
  }
  return v;
}

double parse_absolute_score(const judge::RawJudgment& raw) {
  std::optional<double> score;
  if (auto block = extract_last_json(raw.response_text)) {
    if (block->contains("score") && block->at("score").is_number()) {
      score = block->at("score").get<double>();
    }
  }
  if (!score) {
    static const std::regex kScore(R"(score\s*[:=]\s*([0-9]*\.?[0-9]+))", std::regex::icase);
    std::smatch m;
    std::string s = raw.response_text;
    std::optional<double> last;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), kScore); it != std::sregex_iterator(); ++it) {
      last = std::stod((*it)[1].str());
    }
    score = last;
  }
  if (!score) throw UnparseableError("no score found in response", raw.response_text);
  if (!std::isfinite(*score) || *score < 0.0 || *score > 1.0) {
    throw ValidationError("score " + std::to_string(*score) + " is outside [0, 1]");
  }
  return *score;
}

PairVerdict reconcile(const PairVerdict& first, const PairVerdict& second) {
  if (first.user_id != second.user_id || first.system_a_id != second.system_a_id ||
      first.system_b_id != second.system_b_id) {
    throw std::invalid_argument("reconcile: verdicts describe different comparisons");
  }
  PairVerdict out = first;
  out.per_dimension.clear();
  for (const auto& [key, outcome] : first.per_dimension) {
    auto other = second.per_dimension.find(key);
    if (other == second.per_dimension.end()) continue;
    out.per_dimension[key] = outcome == other->second ? outcome : Outcome::kTie;
  }
  out.overall = first.overall == second.overall ? first.overall : Outcome::kTie;
  out.swap_corrected = first.swap_corrected || second.swap_corrected;
  out.used_fallback = first.used_fallback || second.used_fallback;
  out.provider_meta = json{{"passes", json::array({first.provider_meta, second.provider_meta})}};
  return out;
}

// --- serialization ----------------------------------------------------------

json to_json(const PairVerdict& v) {
  json dims = json::object();
  for (const auto& [key, outcome] : v.per_dimension) dims[key] = std::string(to_string(outcome));
  return json{{"status", "ok"},
              {"user_id", v.user_id},
              {"system_a_id", v.system_a_id},
              {"system_b_id", v.system_b_id},
              {"per_dimension", dims},
              {"overall", std::string(to_string(v.overall))},
              {"analysis", v.analysis},
              {"swap_corrected", v.swap_corrected},
              {"used_fallback", v.used_fallback},
              {"provider_meta", v.provider_meta}};
}

PairVerdict verdict_from_json(const json& obj) {
  auto outcome_of = [](const json& value, const std::string& where) {
    auto o = value.is_string() ? parse_outcome(value.get<std::string>()) : std::nullopt;
    if (!o) throw ValidationError("invalid outcome " + value.dump() + " for " + where);
    return *o;
  };
  try {
    PairVerdict v;
    v.user_id = obj.at("user_id").get<std::string>();
    v.system_a_id = obj.at("system_a_id").get<std::string>();
    v.system_b_id = obj.at("system_b_id").get<std::string>();
    const json dims = obj.value("per_dimension", json::object());
    for (const auto& [key, value] : dims.items()) {
      v.per_dimension[key] = outcome_of(value, key);
    }
    v.overall = outcome_of(obj.at("overall"), "overall");
    v.analysis = obj.value("analysis", std::map<std::string, std::string>{});
    v.swap_corrected = obj.value("swap_corrected", false);
    v.used_fallback = obj.value("used_fallback", false);
    v.provider_meta = obj.value("provider_meta", json::object());
    return v;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed verdict: ") + e.what());
  }
}

json to_json(const VerdictRecord& rec) {
  if (rec.verdict) return to_json(*rec.verdict);
  return json{{"status", "unparseable"},
              {"user_id", rec.user_id},
              {"system_a_id", rec.system_a_id},
              {"system_b_id", rec.system_b_id},
              {"error", rec.error},
              {"response", rec.response}};
}

VerdictRecord record_from_json(const json& obj) {
  if (!obj.is_object()) throw ValidationError("verdict line is not a JSON object");
  const std::string status = obj.value("status", "ok");
  VerdictRecord rec;
  if (status == "ok") {
    rec.verdict = verdict_from_json(obj);
    rec.user_id = rec.verdict->user_id;
    rec.system_a_id = rec.verdict->system_a_id;
    rec.system_b_id = rec.verdict->system_b_id;
    return rec;
  }
  if (status != "unparseable") throw ValidationError("unknown verdict status '" + status + "'");
  try {
    rec.user_id = obj.at("user_id").get<std::string>();
    rec.system_a_id = obj.at("system_a_id").get<std::string>();
    rec.system_b_id = obj.at("system_b_id").get<std::string>();
    rec.error = obj.value("error", "");
    rec.response = obj.value("response", "");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed unparseable record: ") + e.what());
  }
  return rec;
}

std::vector<VerdictRecord> read_verdicts(const std::filesystem::path& path) {
  std::vector<VerdictRecord> out;
  auto rows = util::read_json_lines(path);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      out.push_back(record_from_json(rows[i]));
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": record " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

void write_verdicts(const std::vector<VerdictRecord>& records, const std::filesystem::path& path) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(to_json(r));
  util::write_json_lines(rows, path);
}

}  // namespace recarena::verdict

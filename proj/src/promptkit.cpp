#include "recarena/promptkit.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "recarena/util.hpp"

namespace recarena::promptkit {

using nlohmann::json;

// --- dimensions -------------------------------------------------------------

std::string Dimension::display_name() const {
  std::string out;
  bool start = true;
  for (char ch : key) {
    if (ch == '_' || ch == '-') {
      out.push_back(' ');
      start = true;
      continue;
    }
    out.push_back(start ? static_cast<char>(std::toupper(static_cast<unsigned char>(ch))) : ch);
    start = false;
  }
  return out;
}

DimensionRegistry::DimensionRegistry(std::vector<Dimension> dims) : dims_(std::move(dims)) {
  std::set<std::string> seen;
  for (const auto& d : dims_) {
    if (d.key.empty()) throw PromptError("dimension with empty key");
    if (util::trim(d.description).empty()) {
      throw PromptError("dimension '" + d.key + "' has an empty description");
    }
    if (d.key == "overall") throw PromptError("'overall' is reserved and cannot be a dimension key");
    if (!seen.insert(d.key).second) throw PromptError("duplicate dimension key '" + d.key + "'");
  }
}

DimensionRegistry DimensionRegistry::defaults() {
  return DimensionRegistry({
      {"accuracy", "This recommendation result list aligns well with my interests."},
      {"satisfaction",
       "I am satisfied with the recommendation results provided by this recommender system."},
      {"inspiration",
       "The recommended items inspire me to think, promote further exploration, and enhanced my "
       "willingness to interact with the recommendation platform."},
      {"content_quality", "The recommended items are of high quality."},
      {"transparency",
       "The recommendation results are associated with one of my personal information or an "
       "interaction history, and it is evident which feature is relevant."},
      {"impact", "The impact of this recommendation result list on me is positive."},
  });
}

DimensionRegistry DimensionRegistry::load(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(util::read_file(path));
  } catch (const std::exception& e) {
    throw PromptError("cannot read dimension registry " + path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw PromptError(path.string() + ": registry must be a JSON array");
  std::vector<Dimension> dims;
  for (const auto& entry : doc) {
    if (!entry.is_object() || !entry.contains("key") || !entry.contains("description")) {
      throw PromptError(path.string() + ": each entry needs \"key\" and \"description\"");
    }
    dims.push_back({entry.at("key").get<std::string>(), entry.at("description").get<std::string>()});
  }
  return DimensionRegistry(std::move(dims));
}

std::vector<std::string> DimensionRegistry::keys() const {
  std::vector<std::string> out;
  out.reserve(dims_.size());
  for (const auto& d : dims_) out.push_back(d.key);
  return out;
}

const Dimension* DimensionRegistry::find(std::string_view key) const {
  auto it = std::find_if(dims_.begin(), dims_.end(), [&](const Dimension& d) { return d.key == key; });
  return it == dims_.end() ? nullptr : &*it;
}

// --- templates --------------------------------------------------------------

PromptTemplate::PromptTemplate(std::map<std::string, std::string> sections)
    : sections_(sections.begin(), sections.end()) {}

PromptTemplate PromptTemplate::parse(std::string_view text) {
  std::map<std::string, std::string> sections;
  std::string current;
  std::string body;
  bool in_section = false;
  auto flush = [&] {
    if (!in_section) return;
    // Drop the blank lines that separate sections in the file.
    while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
    if (!sections.emplace(current, body).second) {
      throw PromptError("template section '" + current + "' defined twice");
    }
  };
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto trimmed = util::trim(line);
    if (trimmed.starts_with("[[section:") && trimmed.ends_with("]]")) {
      flush();
      current = std::string(util::trim(trimmed.substr(10, trimmed.size() - 12)));
      if (current.empty()) throw PromptError("template section with empty name");
      body.clear();
      in_section = true;
      continue;
    }
    if (!in_section) {
      if (trimmed.empty() || trimmed.starts_with("#")) continue;
      throw PromptError("template text before the first [[section:...]] marker");
    }
    body += line;
    body += '\n';
  }
  flush();
  return PromptTemplate(std::move(sections));
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  try {
    return parse(util::read_file(path));
  } catch (const PromptError& e) {
    throw PromptError(path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw PromptError(e.what());
  }
}

namespace {

constexpr std::string_view kPairwiseTemplate = R"([[section:persona]]
You are taking part in a study of recommender systems. Play the role of the following user and answer every question from this user's point of view.
{persona}

[[section:history]]
These are the items you have interacted with recently, oldest first:
{history}

[[section:candidates]]
Two recommender systems produced the following recommendation lists for you.

Recommender System A:
{list_a}

Recommender System B:
{list_b}

[[section:dimensions]]
Compare the two lists on each of the following aspects. Each statement describes what a good recommendation list achieves for you:
{dimensions}

[[section:output]]
Work through the aspects one at a time. For each aspect write a heading with the aspect name, analyse both lists from your perspective, and end that analysis with exactly one of "A wins", "B wins" or "Tie". Then write an "Overall" heading and give an overall comparison that takes all aspects into account.
Finish your answer with a fenced JSON block in exactly this form, using "A", "B" or "tie" as values:
```json
{verdict_schema}
```
)";

constexpr std::string_view kAbsoluteTemplate = R"([[section:persona]]
You are taking part in a study of recommender systems. Play the role of the following user and answer every question from this user's point of view.
{persona}

[[section:history]]
These are the items you have interacted with recently, oldest first:
{history}

[[section:candidates]]
A recommender system produced the following recommendation list for you:
{list}

[[section:dimensions]]
Consider the following aspects when judging the list:
{dimensions}

[[section:output]]
Analyse the list from your perspective, then rate its overall quality with a single score between 0 and 1, where 1 is best.
Finish your answer with a fenced JSON block in exactly this form:
```json
{{"score": <number between 0 and 1>}}
```
)";

}  // namespace

PromptTemplate PromptTemplate::default_pairwise() { return parse(kPairwiseTemplate); }

PromptTemplate PromptTemplate::default_absolute() { return parse(kAbsoluteTemplate); }

bool PromptTemplate::has_section(std::string_view name) const {
  return sections_.find(name) != sections_.end();
}

const std::string& PromptTemplate::section(std::string_view name) const {
  auto it = sections_.find(name);
  if (it == sections_.end()) throw PromptError("template has no section '" + std::string(name) + "'");
  return it->second;
}

std::string PromptTemplate::render_section(std::string_view name,
                                           const std::map<std::string, std::string>& values) const {
  try {
    return render(section(name), values);
  } catch (const PromptError& e) {
    throw PromptError("section '" + std::string(name) + "': " + e.what());
  }
}

std::string render(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '{' && i + 1 < text.size() && text[i + 1] == '{') {
      out.push_back('{');
      i += 2;
    } else if (c == '}' && i + 1 < text.size() && text[i + 1] == '}') {
      out.push_back('}');
      i += 2;
    } else if (c == '{') {
      auto close = text.find('}', i + 1);
      if (close == std::string_view::npos) throw PromptError("unterminated placeholder");
      std::string name(text.substr(i + 1, close - i - 1));
      auto it = values.find(name);
      if (it == values.end()) throw PromptError("unresolved placeholder {" + name + "}");
      out += it->second;
      i = close + 1;
    } else if (c == '}') {
      throw PromptError("stray '}' in template; write '}}' for a literal brace");
    } else {
      out.push_back(c);
      ++i;
    }
  }
  return out;
}

// --- profile ----------------------------------------------------------------

std::string UserProfile::text() const {
  std::string out = persona;
  out += '\n';
  for (const auto& line : history) {
    out += line;
    out += '\n';
  }
  return out;
}

std::string render_item(const Item& item, bool include_abstract) {
  std::string out = item.title.empty() ? item.item_id : item.title;
  if (!item.categories.empty()) {
    out += " (";
    bool first = true;
    for (const auto& c : item.categories) {
      if (!first) out += ", ";
      out += c;
      first = false;
    }
    out += ')';
  }
  if (include_abstract && item.abstract && !item.abstract->empty()) {
    out += " - ";
    out += *item.abstract;
  }
  return out;
}

namespace {

std::string persona_text(const User& user) {
  if (user.attributes.empty()) return "You are a user of this platform.";

  auto label_for = [](const std::string& key) -> std::string {
    if (key == kAttrAgeRange) return "age";
    std::string label = key;
    std::replace(label.begin(), label.end(), '_', ' ');
    return label;
  };
  auto value_for = [](const std::string& key, const std::string& value) -> std::string {
    if (key == kAttrGender) {
      if (value == "F" || value == "f") return "female";
      if (value == "M" || value == "m") return "male";
    }
    return value;
  };

  std::vector<std::string> parts;
  for (auto key : {kAttrGender, kAttrAgeRange, kAttrOccupation}) {
    auto it = user.attributes.find(std::string(key));
    if (it != user.attributes.end() && !it->second.empty()) {
      parts.push_back(label_for(it->first) + ": " + value_for(it->first, it->second));
    }
  }
  for (const auto& [key, value] : user.attributes) {
    if (key == kAttrGender || key == kAttrAgeRange || key == kAttrOccupation) continue;
    if (!value.empty()) parts.push_back(label_for(key) + ": " + value);
  }
  if (parts.empty()) return "You are a user of this platform.";

  std::string out = "You are a user of this platform with the following profile: ";
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += "; ";
    out += parts[i];
  }
  out += '.';
  return out;
}

}  // namespace

UserProfile build_profile(const Corpus& corpus, std::string_view user_id,
                          const ProfileOptions& options) {
  if (options.max_history == 0) throw PromptError("max_history must be >= 1");
  const User* user = corpus.find_user(user_id);
  if (user == nullptr) throw PromptError("user '" + std::string(user_id) + "' is not in the corpus");

  UserProfile profile;
  profile.user_id = user->user_id;
  profile.persona = persona_text(*user);

  auto positives = corpus.positive_history(user_id);
  const std::size_t skip =
      positives.size() > options.max_history ? positives.size() - options.max_history : 0;
  for (std::size_t i = skip; i < positives.size(); ++i) {
    profile.history.push_back("- " + render_item(corpus.item(positives[i]->item_id),
                                                 options.include_abstract));
  }
  return profile;
}

// --- bundles ----------------------------------------------------------------

std::string_view to_string(JudgeMode mode) {
  return mode == JudgeMode::kPair ? "pair" : "absolute";
}

namespace {

std::string render_list(const RecList& rec, const Corpus& corpus, bool include_abstract) {
  std::string out;
  for (std::size_t i = 0; i < rec.items.size(); ++i) {
    if (i > 0) out += '\n';
    out += std::to_string(i + 1) + ". " + render_item(corpus.item(rec.items[i]), include_abstract);
  }
  return out;
}

std::string render_dimensions(const DimensionRegistry& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const auto& d = dims.dimensions()[i];
    if (i > 0) out += '\n';
    out += "- " + d.display_name() + ": " + d.description;
  }
  return out;
}

std::string verdict_schema(const DimensionRegistry& dims) {
  // Built by hand to keep the registry order in the example.
  std::string out = "{\"dimensions\": {";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i > 0) out += ", ";
    out += json(dims.dimensions()[i].key).dump() + ": \"A|B|tie\"";
  }
  out += "}, \"overall\": \"A|B|tie\"}";
  return out;
}

std::string history_text(const std::vector<std::string>& lines, std::size_t skip) {
  if (skip >= lines.size()) return "(no recorded history)";
  std::string out;
  for (std::size_t i = skip; i < lines.size(); ++i) {
    if (i > skip) out += '\n';
    out += lines[i];
  }
  return out;
}

// Renders all sections that exist in `tmpl`, shrinking history to fit.
std::string assemble(const UserProfile& profile, const PromptTemplate& tmpl,
                     std::map<std::string, std::string> values,
                     const std::vector<std::string_view>& required, std::size_t budget) {
  static constexpr std::string_view kOrder[] = {
      PromptTemplate::kPersona, PromptTemplate::kHistory, PromptTemplate::kCandidates,
      PromptTemplate::kDimensions, PromptTemplate::kOutput};
  for (auto name : required) {
    if (!tmpl.has_section(name)) {
      throw PromptError("template is missing required section '" + std::string(name) + "'");
    }
  }
  values["persona"] = profile.persona;

  std::size_t skip = 0;
  while (true) {
    values["history"] = history_text(profile.history, skip);
    std::string prompt;
    for (auto name : kOrder) {
      if (!tmpl.has_section(name)) continue;
      if (!prompt.empty()) prompt += "\n\n";
      prompt += tmpl.render_section(name, values);
    }
    prompt += '\n';
    if (prompt.size() <= budget) return prompt;
    if (skip >= profile.history.size()) {
      throw PromptError("prompt for user '" + profile.user_id + "' needs " +
                        std::to_string(prompt.size()) + " characters even without history; budget is " +
                        std::to_string(budget));
    }
    ++skip;
  }
}

std::string bundle_hash(JudgeMode mode, const std::string& prompt) {
  std::string keyed(to_string(mode));
  keyed += '\n';
  keyed += prompt;
  return util::sha256_hex(keyed);
}

}  // namespace

PromptBundle build_prompt(const UserProfile& profile, const RecList& rec_a, const RecList& rec_b,
                          const Corpus& corpus, const DimensionRegistry& dims,
                          const PromptTemplate& tmpl, const PromptOptions& options) {
  if (rec_a.user_id != rec_b.user_id) {
    throw PromptError("lists belong to different users: '" + rec_a.user_id + "' vs '" +
                      rec_b.user_id + "'");
  }
  if (profile.user_id != rec_a.user_id) {
    throw PromptError("profile of '" + profile.user_id + "' used for lists of '" + rec_a.user_id + "'");
  }
  if (dims.size() == 0) throw PromptError("dimension registry is empty");
  validate_rec_list(rec_a, corpus);
  validate_rec_list(rec_b, corpus);

  const RecList& first = options.swap ? rec_b : rec_a;
  const RecList& second = options.swap ? rec_a : rec_b;
  std::map<std::string, std::string> values{
      {"list_a", render_list(first, corpus, options.include_abstract)},
      {"list_b", render_list(second, corpus, options.include_abstract)},
      {"dimensions", render_dimensions(dims)},
      {"verdict_schema", verdict_schema(dims)},
  };

  PromptBundle bundle;
  bundle.mode = JudgeMode::kPair;
  bundle.user_id = rec_a.user_id;
  bundle.system_a_id = rec_a.system_id;
  bundle.system_b_id = rec_b.system_id;
  bundle.items_a = rec_a.items;
  bundle.items_b = rec_b.items;
  bundle.swap_applied = options.swap;
  bundle.dimension_keys = dims.keys();
  bundle.prompt_text = assemble(
      profile, tmpl, std::move(values),
      {PromptTemplate::kPersona, PromptTemplate::kHistory, PromptTemplate::kCandidates,
       PromptTemplate::kDimensions, PromptTemplate::kOutput},
      options.char_budget);
  bundle.content_hash = bundle_hash(bundle.mode, bundle.prompt_text);
  return bundle;
}

PromptBundle build_absolute_prompt(const UserProfile& profile, const RecList& rec,
                                   const Corpus& corpus, const DimensionRegistry& dims,
                                   const PromptTemplate& tmpl, const PromptOptions& options) {
  if (profile.user_id != rec.user_id) {
    throw PromptError("profile of '" + profile.user_id + "' used for list of '" + rec.user_id + "'");
  }
  validate_rec_list(rec, corpus);
  std::map<std::string, std::string> values{
      {"list", render_list(rec, corpus, options.include_abstract)},
      {"dimensions", render_dimensions(dims)},
  };

  PromptBundle bundle;
  bundle.mode = JudgeMode::kAbsolute;
  bundle.user_id = rec.user_id;
  bundle.system_a_id = rec.system_id;
  bundle.items_a = rec.items;
  bundle.dimension_keys = dims.keys();
  bundle.prompt_text = assemble(
      profile, tmpl, std::move(values),
      {PromptTemplate::kPersona, PromptTemplate::kHistory, PromptTemplate::kCandidates,
       PromptTemplate::kOutput},
      options.char_budget);
  bundle.content_hash = bundle_hash(bundle.mode, bundle.prompt_text);
  return bundle;
}

}  // namespace recarena::promptkit

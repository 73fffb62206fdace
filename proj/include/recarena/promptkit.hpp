#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "recarena/corpus.hpp"

namespace recarena::promptkit {

class PromptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- evaluation dimensions --------------------------------------------------

struct Dimension {
  std::string key;
  std::string description;

  /// Heading shown to the judge, e.g. "content_quality" -> "Content Quality".
  std::string display_name() const;
};

class DimensionRegistry {
 public:
  DimensionRegistry() = default;
  explicit DimensionRegistry(std::vector<Dimension> dims);

  /// accuracy, satisfaction, inspiration, content_quality, transparency, impact.
  static DimensionRegistry defaults();
  /// JSON array of {key, description}.
  static DimensionRegistry load(const std::filesystem::path& path);

  const std::vector<Dimension>& dimensions() const { return dims_; }
  std::vector<std::string> keys() const;
  const Dimension* find(std::string_view key) const;
  std::size_t size() const { return dims_.size(); }

 private:
  std::vector<Dimension> dims_;
};

// --- templates --------------------------------------------------------------

/// Named sections of {placeholder} text. In a template file each section
/// starts with a line "[[section:<name>]]". "{{" and "}}" render as literal
/// braces.
class PromptTemplate {
 public:
  static constexpr std::string_view kPersona = "persona";
  static constexpr std::string_view kHistory = "history";
  static constexpr std::string_view kCandidates = "candidates";
  static constexpr std::string_view kDimensions = "dimensions";
  static constexpr std::string_view kOutput = "output";

  PromptTemplate() = default;
  explicit PromptTemplate(std::map<std::string, std::string> sections);

  static PromptTemplate parse(std::string_view text);
  static PromptTemplate load(const std::filesystem::path& path);

  /// Five-part pair-wise judging template.
  static PromptTemplate default_pairwise();
  /// Single-list template requesting a score in [0, 1].
  static PromptTemplate default_absolute();

  bool has_section(std::string_view name) const;
  const std::string& section(std::string_view name) const;

  /// Throws PromptError for a missing section or an unresolved placeholder.
  std::string render_section(std::string_view name,
                             const std::map<std::string, std::string>& values) const;

 private:
  std::map<std::string, std::string, std::less<>> sections_;
};

/// Substitutes {name} markers; unknown names throw PromptError.
std::string render(std::string_view text, const std::map<std::string, std::string>& values);

// --- profile ----------------------------------------------------------------

struct ProfileOptions {
  std::size_t max_history = 50;
  bool include_abstract = false;
};

struct UserProfile {
  std::string user_id;
  std::string persona;
  /// Rendered history entries, oldest first.
  std::vector<std::string> history;

  std::string text() const;
};

/// "title (cat1, cat2)" with an optional " - abstract" suffix.
std::string render_item(const Item& item, bool include_abstract);

UserProfile build_profile(const Corpus& corpus, std::string_view user_id,
                          const ProfileOptions& options = {});

// --- prompt bundles ---------------------------------------------------------

enum class JudgeMode { kPair, kAbsolute };

std::string_view to_string(JudgeMode mode);

struct PromptBundle {
  JudgeMode mode = JudgeMode::kPair;
  std::string user_id;
  std::string system_a_id;
  std::string system_b_id;  // empty in absolute mode
  /// Logical lists; positions in the prompt are exchanged when swap_applied.
  std::vector<std::string> items_a;
  std::vector<std::string> items_b;
  std::string prompt_text;
  bool swap_applied = false;
  std::vector<std::string> dimension_keys;
  /// SHA-256 over mode and prompt text.
  std::string content_hash;

  const std::vector<std::string>& positional_a() const { return swap_applied ? items_b : items_a; }
  const std::vector<std::string>& positional_b() const { return swap_applied ? items_a : items_b; }
};

struct PromptOptions {
  bool swap = false;
  bool include_abstract = false;
  /// Upper bound on prompt length in characters. History lines are dropped,
  /// oldest first, until the prompt fits.
  std::size_t char_budget = 60000;
};

inline constexpr std::string_view kLabelA = "Recommender System A";
inline constexpr std::string_view kLabelB = "Recommender System B";

PromptBundle build_prompt(const UserProfile& profile, const RecList& rec_a,
                          const RecList& rec_b, const Corpus& corpus,
                          const DimensionRegistry& dims, const PromptTemplate& tmpl,
                          const PromptOptions& options = {});

PromptBundle build_absolute_prompt(const UserProfile& profile, const RecList& rec,
                                   const Corpus& corpus, const DimensionRegistry& dims,
                                   const PromptTemplate& tmpl,
                                   const PromptOptions& options = {});

}  // namespace recarena::promptkit

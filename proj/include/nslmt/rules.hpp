#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "nslmt/corpus.hpp"
#include "nslmt/random.hpp"

namespace nslmt {

enum class RuleCategory { morphological, syntactic, lexical };

inline constexpr RuleCategory kAllCategories[] = {RuleCategory::morphological, RuleCategory::syntactic,
                                                  RuleCategory::lexical};

std::string to_string(RuleCategory category);
RuleCategory parse_rule_category(std::string_view name);

/// Raised when a rule file is invalid. The message names the offending rule.
class RuleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TokenSet = std::unordered_set<std::string>;

/// One position of a token pattern. Every element is also a capture ($1, $2, ...).
struct PatternElement {
  enum class Kind { literal, token_class, wildcard };
  Kind kind = Kind::literal;
  std::string text;                          // literal token or class name
  std::shared_ptr<const TokenSet> members;   // resolved class members

  bool matches(const std::string& token) const;
};

/// Replaces a trailing `from` with `to` on a captured token.
struct SuffixSplice {
  std::string from;
  std::string to;
};

struct RewriteItem {
  enum class Kind { capture, literal };
  Kind kind = Kind::literal;
  std::size_t capture = 0;  // 0-based index into the pattern
  std::string literal;
  std::optional<SuffixSplice> splice;
};

struct RuleSpec {
  std::string rule_id;
  RuleCategory category = RuleCategory::morphological;
  std::vector<PatternElement> matcher;
  std::vector<RewriteItem> rewrite;
  double severity = 1.0;
  std::string description;
  std::string match_text;    // canonical pattern text
  std::string rewrite_text;  // canonical rewrite text

  /// Start positions of every site where the rule rewrites `tokens` into a
  /// different sentence.
  std::vector<std::size_t> match_sites(const std::vector<std::string>& tokens) const;

  /// Full sentence after rewriting the window starting at `site`.
  std::vector<std::string> rewrite_at(const std::vector<std::string>& tokens, std::size_t site) const;
};

struct RuleSet {
  std::string language;
  std::map<std::string, std::vector<std::string>> token_classes;
  std::vector<RuleSpec> rules;

  const RuleSpec* find(std::string_view rule_id) const;
  std::set<RuleCategory> categories() const;

  /// Every token a rewrite can emit that is not copied verbatim from the
  /// input sentence: rewrite literals and spliced class members.
  std::vector<std::string> output_vocabulary() const;
};

struct ViolationRecord {
  std::string source_id;
  std::string text;
  std::string rule_id;
  RuleCategory category = RuleCategory::morphological;
  double severity = 0.0;

  bool operator==(const ViolationRecord&) const = default;
};

struct ViolationSet {
  std::vector<ViolationRecord> records;
  std::size_t drawn_k = 0;
  bool no_applicable_rule = false;  // pair contributes positives only
};

/// Parses and validates a rule file. Validation is all-or-nothing.
RuleSet parse_ruleset(const std::string& json_text);
RuleSet load_ruleset(const std::filesystem::path& path);

/// Builds a validated RuleSet from in-memory definitions (used by generators).
struct RuleDefinition {
  std::string rule_id;
  std::string category;
  double severity = 1.0;
  std::string match;
  std::string rewrite;
  std::string description;
};
RuleSet build_ruleset(std::string language, std::map<std::string, std::vector<std::string>> token_classes,
                      const std::vector<RuleDefinition>& rules);

/// Canonical serialization (stable key order, two-space indent).
std::string ruleset_to_json(const RuleSet& ruleset);
std::uint64_t ruleset_hash(const RuleSet& ruleset);

/// True when some assignment of tokens to the pattern makes the rewrite
/// reproduce its input window. Conservative: may report true for rules whose
/// joint constraints are actually unsatisfiable, never false for a rule that
/// can produce the identity.
bool rewrite_can_be_identity(const RuleSpec& rule);

/// Rules with at least one match site in `sentence`, in rule-file order.
std::vector<const RuleSpec*> applicable_rules(const RuleSet& ruleset, std::string_view sentence);

/// Applies `rule` at one uniformly chosen match site.
/// Throws std::logic_error if the rule has no match site.
ViolationRecord apply_rule(const RuleSpec& rule, std::string_view sentence, Rng& rng,
                           std::string source_id = {});

inline constexpr int kDuplicateRetryBudget = 3;

/// Draws k ~ Uniform{k_min..k_max} and produces k independent single-rule
/// corruptions of the original target.
ViolationSet generate_violations(const ParallelPair& pair, const RuleSet& ruleset, int k_min, int k_max,
                                 Rng& rng);

RuleSet filter_by_category(const RuleSet& ruleset, const std::set<RuleCategory>& categories);

}  // namespace nslmt

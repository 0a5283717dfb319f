#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nslmt/corpus.hpp"

namespace nslmt {

struct RuleSet;

/// One lexeme of the toy language pair: its source-side and target-side form.
struct LexicalEntry {
  std::string source;
  std::string target;
};

/// Synthetic language pair with deliberately contrasting structure:
/// the source is SVO with prenominal adjectives, freestanding articles and a
/// plural suffix; the target is SOV with postnominal adjectives, a
/// postposed definite marker, a hyphenated plural suffix and subject-verb
/// agreement suffixes.
struct ToyLanguageSpec {
  std::string name = "toy";
  std::vector<LexicalEntry> nouns;
  std::vector<LexicalEntry> adjectives;
  std::vector<LexicalEntry> verbs;

  // Constituent order templates over {S, V, O}.
  std::string source_order = "SVO";
  std::string target_order = "SOV";
  bool source_adjective_prenominal = true;
  bool target_adjective_prenominal = false;

  // Morphology.
  std::string source_plural_suffix = "s";
  std::string target_plural_suffix = "-yan";
  std::string agreement_singular = "-ka";
  std::string agreement_plural = "-ndi";
  std::string target_definite = "di";

  // Source function words. The auxiliary never appears in generated text;
  // it is the interference token inserted by the lexical rules.
  std::string article_definite_singular = "le";
  std::string article_definite_plural = "les";
  std::string article_indefinite_singular = "un";
  std::string article_indefinite_plural = "des";
  std::string source_auxiliary = "a";

  double plural_probability = 0.35;
  double definite_probability = 0.5;
  double adjective_probability = 0.45;

  std::uint64_t seed = 1;

  std::vector<std::string> source_articles() const;
};

/// Throws std::invalid_argument if a vocabulary slot is empty, a template is
/// not a permutation of S/V/O, or two roles share a surface token.
void validate(const ToyLanguageSpec& spec);

ToyLanguageSpec default_toy_language();
ToyLanguageSpec load_toy_language(const std::filesystem::path& path);
ToyLanguageSpec toy_language_from_json(const std::string& json_text);
std::string toy_language_to_json(const ToyLanguageSpec& spec);

struct NounPhrase {
  std::size_t noun = 0;
  bool plural = false;
  bool definite = false;
  std::optional<std::size_t> adjective;
};

struct ToyClause {
  NounPhrase subject;
  NounPhrase object;
  std::size_t verb = 0;
};

/// The abstract clause for sentence `index`; a pure function of (spec, seed, index).
ToyClause sample_clause(const ToyLanguageSpec& spec, std::uint64_t index);

std::string realize_source(const ToyLanguageSpec& spec, const ToyClause& clause);
std::string realize_target(const ToyLanguageSpec& spec, const ToyClause& clause);

/// Ids are "toy-<index>".
std::vector<ParallelPair> generate_toy_corpus(const ToyLanguageSpec& spec, std::size_t n);

/// Recognizers for the two grammar templates. Return the parsed clause when
/// the sentence is well-formed (including agreement), std::nullopt otherwise.
std::optional<ToyClause> parse_source(const ToyLanguageSpec& spec, const std::string& sentence);
std::optional<ToyClause> parse_target(const ToyLanguageSpec& spec, const std::string& sentence);

/// The violation inventory for a toy target language: agreement, plural and
/// gender markers (morphological), verb placement, adjective and determiner
/// position (syntactic), article and auxiliary insertion (lexical).
RuleSet make_toy_ruleset(const ToyLanguageSpec& spec);

}  // namespace nslmt

#include "nslmt/toy_language.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "nslmt/random.hpp"
#include "nslmt/rules.hpp"
#include "nslmt/text.hpp"

namespace nslmt {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<std::string> ToyLanguageSpec::source_articles() const {
  return {article_definite_singular, article_definite_plural, article_indefinite_singular,
          article_indefinite_plural};
}

namespace {

bool is_order_template(const std::string& order) {
  std::string sorted = order;
  std::sort(sorted.begin(), sorted.end());
  return sorted == "OSV";
}

}  // namespace

void validate(const ToyLanguageSpec& spec) {
  if (spec.nouns.empty()) throw std::invalid_argument("toy language: empty noun vocabulary");
  if (spec.adjectives.empty()) throw std::invalid_argument("toy language: empty adjective vocabulary");
  if (spec.verbs.empty()) throw std::invalid_argument("toy language: empty verb vocabulary");
  if (!is_order_template(spec.source_order))
    throw std::invalid_argument("toy language: source_order must be a permutation of SVO");
  if (!is_order_template(spec.target_order))
    throw std::invalid_argument("toy language: target_order must be a permutation of SVO");
  if (spec.target_plural_suffix.empty() || spec.agreement_singular == spec.agreement_plural)
    throw std::invalid_argument("toy language: target morphology markers must be non-empty and distinct");
  for (double p : {spec.plural_probability, spec.definite_probability, spec.adjective_probability})
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("toy language: probabilities must lie in [0,1]");

  auto check_side = [](const std::vector<std::pair<std::string, std::string>>& tagged, const char* side) {
    std::set<std::string> seen;
    for (const auto& [tok, role] : tagged) {
      if (tok.empty() || split_whitespace(tok).size() != 1)
        throw std::invalid_argument(std::string("toy language: ") + side + " " + role +
                                    " entry must be a single non-empty token");
      if (!seen.insert(tok).second)
        throw std::invalid_argument(std::string("toy language: ") + side + " token '" + tok +
                                    "' is used by more than one entry");
    }
  };
  std::vector<std::pair<std::string, std::string>> src, tgt;
  for (const auto& e : spec.nouns) {
    src.emplace_back(e.source, "noun");
    src.emplace_back(e.source + spec.source_plural_suffix, "noun");
    tgt.emplace_back(e.target, "noun");
    tgt.emplace_back(e.target + spec.target_plural_suffix, "noun");
  }
  for (const auto& e : spec.adjectives) {
    src.emplace_back(e.source, "adjective");
    tgt.emplace_back(e.target, "adjective");
  }
  for (const auto& e : spec.verbs) {
    src.emplace_back(e.source, "verb");
    tgt.emplace_back(e.target + spec.agreement_singular, "verb");
    tgt.emplace_back(e.target + spec.agreement_plural, "verb");
  }
  for (const auto& a : spec.source_articles()) src.emplace_back(a, "article");
  tgt.emplace_back(spec.target_definite, "determiner");
  check_side(src, "source");
  check_side(tgt, "target");
  for (const auto& a : spec.source_articles())
    for (const auto& [tok, role] : tgt)
      if (tok == a) throw std::invalid_argument("toy language: source article '" + a + "' is also a target token");
}

ToyLanguageSpec default_toy_language() {
  ToyLanguageSpec spec;
  spec.name = "toy-zarma";
  spec.nouns = {{"étudiant", "talibo"}, {"maison", "fu"},   {"livre", "kitabu"}, {"chien", "hansi"},
                {"chat", "muusu"},      {"enfant", "zanka"}, {"vache", "haw"},    {"cheval", "bari"},
                {"femme", "woy"},       {"homme", "aru"},    {"arbre", "tuuri"},  {"poisson", "hamisa"}};
  spec.adjectives = {{"grand", "beeri"}, {"petit", "kayna"}, {"blanc", "kwaaray"}, {"noir", "bibi"},
                     {"bon", "hanno"},   {"mauvais", "laalo"}, {"nouveau", "taaga"}, {"vieux", "zeena"}};
  spec.verbs = {{"voit", "guna"},   {"mange", "nga"},  {"aime", "baa"},   {"prend", "sambu"},
                {"cherche", "ceeci"}, {"appelle", "ce"}, {"suit", "gana"}, {"frappe", "kar"}};
  spec.seed = 2024;
  return spec;
}

namespace {

std::vector<LexicalEntry> read_lexicon(const json& doc, const char* key, const std::vector<LexicalEntry>& fallback) {
  auto it = doc.find(key);
  if (it == doc.end()) return fallback;
  if (!it->is_array()) throw std::invalid_argument(std::string("toy language: '") + key + "' must be a list");
  std::vector<LexicalEntry> out;
  for (const auto& e : *it) {
    if (!e.is_object() || !e.contains("source") || !e.contains("target"))
      throw std::invalid_argument(std::string("toy language: '") + key + "' entries need source and target");
    out.push_back({e.at("source").get<std::string>(), e.at("target").get<std::string>()});
  }
  return out;
}

}  // namespace

ToyLanguageSpec toy_language_from_json(const std::string& json_text) {
  const json doc = json::parse(json_text);
  ToyLanguageSpec d = default_toy_language();
  ToyLanguageSpec s;
  s.name = doc.value("name", d.name);
  s.nouns = read_lexicon(doc, "nouns", d.nouns);
  s.adjectives = read_lexicon(doc, "adjectives", d.adjectives);
  s.verbs = read_lexicon(doc, "verbs", d.verbs);
  const json grammar = doc.value("grammar", json::object());
  s.source_order = grammar.value("source_order", d.source_order);
  s.target_order = grammar.value("target_order", d.target_order);
  s.source_adjective_prenominal = grammar.value("source_adjective_prenominal", d.source_adjective_prenominal);
  s.target_adjective_prenominal = grammar.value("target_adjective_prenominal", d.target_adjective_prenominal);
  const json morph = doc.value("morphology", json::object());
  s.source_plural_suffix = morph.value("source_plural", d.source_plural_suffix);
  s.target_plural_suffix = morph.value("target_plural", d.target_plural_suffix);
  s.agreement_singular = morph.value("agreement_singular", d.agreement_singular);
  s.agreement_plural = morph.value("agreement_plural", d.agreement_plural);
  s.target_definite = morph.value("target_definite", d.target_definite);
  const json fw = doc.value("source_function_words", json::object());
  s.article_definite_singular = fw.value("definite_singular", d.article_definite_singular);
  s.article_definite_plural = fw.value("definite_plural", d.article_definite_plural);
  s.article_indefinite_singular = fw.value("indefinite_singular", d.article_indefinite_singular);
  s.article_indefinite_plural = fw.value("indefinite_plural", d.article_indefinite_plural);
  s.source_auxiliary = fw.value("auxiliary", d.source_auxiliary);
  const json probs = doc.value("probabilities", json::object());
  s.plural_probability = probs.value("plural", d.plural_probability);
  s.definite_probability = probs.value("definite", d.definite_probability);
  s.adjective_probability = probs.value("adjective", d.adjective_probability);
  s.seed = doc.value("seed", d.seed);
  validate(s);
  return s;
}

ToyLanguageSpec load_toy_language(const std::filesystem::path& path) {
  return toy_language_from_json(read_file(path));
}

std::string toy_language_to_json(const ToyLanguageSpec& s) {
  auto lex = [](const std::vector<LexicalEntry>& entries) {
    ordered_json arr = ordered_json::array();
    for (const auto& e : entries) arr.push_back({{"source", e.source}, {"target", e.target}});
    return arr;
  };
  ordered_json doc;
  doc["name"] = s.name;
  doc["seed"] = s.seed;
  doc["nouns"] = lex(s.nouns);
  doc["adjectives"] = lex(s.adjectives);
  doc["verbs"] = lex(s.verbs);
  doc["grammar"] = {{"source_order", s.source_order},
                    {"target_order", s.target_order},
                    {"source_adjective_prenominal", s.source_adjective_prenominal},
                    {"target_adjective_prenominal", s.target_adjective_prenominal}};
  doc["morphology"] = {{"source_plural", s.source_plural_suffix},
                       {"target_plural", s.target_plural_suffix},
                       {"agreement_singular", s.agreement_singular},
                       {"agreement_plural", s.agreement_plural},
                       {"target_definite", s.target_definite}};
  doc["source_function_words"] = {{"definite_singular", s.article_definite_singular},
                                  {"definite_plural", s.article_definite_plural},
                                  {"indefinite_singular", s.article_indefinite_singular},
                                  {"indefinite_plural", s.article_indefinite_plural},
                                  {"auxiliary", s.source_auxiliary}};
  doc["probabilities"] = {{"plural", s.plural_probability},
                          {"definite", s.definite_probability},
                          {"adjective", s.adjective_probability}};
  return doc.dump(2) + "\n";
}

namespace {

NounPhrase sample_np(const ToyLanguageSpec& spec, Rng& rng) {
  NounPhrase np;
  np.noun = rng.index(spec.nouns.size());
  np.plural = rng.bernoulli(spec.plural_probability);
  np.definite = rng.bernoulli(spec.definite_probability);
  if (rng.bernoulli(spec.adjective_probability)) np.adjective = rng.index(spec.adjectives.size());
  return np;
}

void source_np(const ToyLanguageSpec& spec, const NounPhrase& np, std::vector<std::string>& out) {
  if (np.definite) out.push_back(np.plural ? spec.article_definite_plural : spec.article_definite_singular);
  else out.push_back(np.plural ? spec.article_indefinite_plural : spec.article_indefinite_singular);
  std::string noun = spec.nouns[np.noun].source + (np.plural ? spec.source_plural_suffix : "");
  if (np.adjective && spec.source_adjective_prenominal) out.push_back(spec.adjectives[*np.adjective].source);
  out.push_back(noun);
  if (np.adjective && !spec.source_adjective_prenominal) out.push_back(spec.adjectives[*np.adjective].source);
}

void target_np(const ToyLanguageSpec& spec, const NounPhrase& np, std::vector<std::string>& out) {
  std::string noun = spec.nouns[np.noun].target + (np.plural ? spec.target_plural_suffix : "");
  if (np.adjective && spec.target_adjective_prenominal) out.push_back(spec.adjectives[*np.adjective].target);
  out.push_back(noun);
  if (np.adjective && !spec.target_adjective_prenominal) out.push_back(spec.adjectives[*np.adjective].target);
  if (np.definite) out.push_back(spec.target_definite);
}

}  // namespace

ToyClause sample_clause(const ToyLanguageSpec& spec, std::uint64_t index) {
  Rng rng(derive_seed(spec.seed, {std::uint64_t{0x70795e}, index}));
  ToyClause c;
  c.subject = sample_np(spec, rng);
  c.object = sample_np(spec, rng);
  c.verb = rng.index(spec.verbs.size());
  return c;
}

std::string realize_source(const ToyLanguageSpec& spec, const ToyClause& c) {
  std::vector<std::string> out;
  for (char slot : spec.source_order) {
    if (slot == 'S') source_np(spec, c.subject, out);
    else if (slot == 'O') source_np(spec, c.object, out);
    else out.push_back(spec.verbs[c.verb].source);
  }
  return join(out);
}

std::string realize_target(const ToyLanguageSpec& spec, const ToyClause& c) {
  std::vector<std::string> out;
  for (char slot : spec.target_order) {
    if (slot == 'S') target_np(spec, c.subject, out);
    else if (slot == 'O') target_np(spec, c.object, out);
    else out.push_back(spec.verbs[c.verb].target +
                       (c.subject.plural ? spec.agreement_plural : spec.agreement_singular));
  }
  return join(out);
}

std::vector<ParallelPair> generate_toy_corpus(const ToyLanguageSpec& spec, std::size_t n) {
  validate(spec);
  std::vector<ParallelPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto clause = sample_clause(spec, i);
    out.push_back({"toy-" + std::to_string(i), realize_source(spec, clause), realize_target(spec, clause)});
  }
  return out;
}

namespace {

template <typename Get>
std::optional<std::size_t> lookup(const std::vector<LexicalEntry>& entries, const std::string& tok, Get get) {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (get(entries[i]) == tok) return i;
  return std::nullopt;
}

struct Cursor {
  const std::vector<std::string>& toks;
  std::size_t pos = 0;
  bool done() const { return pos >= toks.size(); }
  const std::string* peek() const { return done() ? nullptr : &toks[pos]; }
};

std::optional<NounPhrase> parse_source_np(const ToyLanguageSpec& spec, Cursor& cur) {
  NounPhrase np;
  const std::string* art = cur.peek();
  if (!art) return std::nullopt;
  bool art_plural;
  if (*art == spec.article_definite_singular) { np.definite = true; art_plural = false; }
  else if (*art == spec.article_definite_plural) { np.definite = true; art_plural = true; }
  else if (*art == spec.article_indefinite_singular) { np.definite = false; art_plural = false; }
  else if (*art == spec.article_indefinite_plural) { np.definite = false; art_plural = true; }
  else return std::nullopt;
  ++cur.pos;
  auto src = [](const LexicalEntry& e) { return e.source; };
  auto try_adj = [&]() {
    if (const auto* t = cur.peek()) {
      if (auto a = lookup(spec.adjectives, *t, src)) { np.adjective = a; ++cur.pos; }
    }
  };
  if (spec.source_adjective_prenominal) try_adj();
  const std::string* noun = cur.peek();
  if (!noun) return std::nullopt;
  if (auto n = lookup(spec.nouns, *noun, src)) { np.noun = *n; np.plural = false; }
  else if (auto p = lookup(spec.nouns, *noun, [&](const LexicalEntry& e) { return e.source + spec.source_plural_suffix; })) {
    np.noun = *p;
    np.plural = true;
  } else {
    return std::nullopt;
  }
  ++cur.pos;
  if (!spec.source_adjective_prenominal) try_adj();
  if (np.plural != art_plural) return std::nullopt;
  return np;
}

std::optional<NounPhrase> parse_target_np(const ToyLanguageSpec& spec, Cursor& cur) {
  NounPhrase np;
  auto tgt = [](const LexicalEntry& e) { return e.target; };
  auto try_adj = [&]() {
    if (const auto* t = cur.peek()) {
      if (auto a = lookup(spec.adjectives, *t, tgt)) { np.adjective = a; ++cur.pos; }
    }
  };
  if (spec.target_adjective_prenominal) try_adj();
  const std::string* noun = cur.peek();
  if (!noun) return std::nullopt;
  if (auto n = lookup(spec.nouns, *noun, tgt)) { np.noun = *n; np.plural = false; }
  else if (auto p = lookup(spec.nouns, *noun, [&](const LexicalEntry& e) { return e.target + spec.target_plural_suffix; })) {
    np.noun = *p;
    np.plural = true;
  } else {
    return std::nullopt;
  }
  ++cur.pos;
  if (!spec.target_adjective_prenominal) try_adj();
  if (const auto* t = cur.peek(); t && *t == spec.target_definite) { np.definite = true; ++cur.pos; }
  return np;
}

}  // namespace

std::optional<ToyClause> parse_source(const ToyLanguageSpec& spec, const std::string& sentence) {
  const auto toks = split_whitespace(sentence);
  Cursor cur{toks};
  ToyClause c;
  for (char slot : spec.source_order) {
    if (slot == 'V') {
      const auto* t = cur.peek();
      if (!t) return std::nullopt;
      auto v = lookup(spec.verbs, *t, [](const LexicalEntry& e) { return e.source; });
      if (!v) return std::nullopt;
      c.verb = *v;
      ++cur.pos;
    } else {
      auto np = parse_source_np(spec, cur);
      if (!np) return std::nullopt;
      (slot == 'S' ? c.subject : c.object) = *np;
    }
  }
  if (!cur.done()) return std::nullopt;
  return c;
}

std::optional<ToyClause> parse_target(const ToyLanguageSpec& spec, const std::string& sentence) {
  const auto toks = split_whitespace(sentence);
  Cursor cur{toks};
  ToyClause c;
  std::optional<bool> verb_plural;
  for (char slot : spec.target_order) {
    if (slot == 'V') {
      const auto* t = cur.peek();
      if (!t) return std::nullopt;
      if (auto v = lookup(spec.verbs, *t, [&](const LexicalEntry& e) { return e.target + spec.agreement_singular; })) {
        c.verb = *v;
        verb_plural = false;
      } else if (auto w = lookup(spec.verbs, *t, [&](const LexicalEntry& e) { return e.target + spec.agreement_plural; })) {
        c.verb = *w;
        verb_plural = true;
      } else {
        return std::nullopt;
      }
      ++cur.pos;
    } else {
      auto np = parse_target_np(spec, cur);
      if (!np) return std::nullopt;
      (slot == 'S' ? c.subject : c.object) = *np;
    }
  }
  if (!cur.done()) return std::nullopt;
  if (verb_plural && *verb_plural != c.subject.plural) return std::nullopt;
  return c;
}

RuleSet make_toy_ruleset(const ToyLanguageSpec& spec) {
  validate(spec);
  std::vector<std::string> noun_sg, noun_pl, adj, verb_sg, verb_pl;
  for (const auto& e : spec.nouns) {
    noun_sg.push_back(e.target);
    noun_pl.push_back(e.target + spec.target_plural_suffix);
  }
  for (const auto& e : spec.adjectives) adj.push_back(e.target);
  for (const auto& e : spec.verbs) {
    verb_sg.push_back(e.target + spec.agreement_singular);
    verb_pl.push_back(e.target + spec.agreement_plural);
  }
  std::vector<std::string> noun = noun_sg, verb = verb_sg;
  noun.insert(noun.end(), noun_pl.begin(), noun_pl.end());
  verb.insert(verb.end(), verb_pl.begin(), verb_pl.end());

  std::map<std::string, std::vector<std::string>> classes = {
      {"noun", noun}, {"noun_sg", noun_sg}, {"noun_pl", noun_pl}, {"adj", adj},
      {"verb", verb}, {"verb_sg", verb_sg}, {"verb_pl", verb_pl}};

  const std::string& pl = spec.target_plural_suffix;
  const std::string& sg_agr = spec.agreement_singular;
  const std::string& pl_agr = spec.agreement_plural;
  const std::string& det = spec.target_definite;
  const std::string& src_pl = spec.source_plural_suffix;

  std::vector<RuleDefinition> rules = {
      {"plural-source-suffix", "morphological", 1.0, "CLASS:noun_pl", "$1:" + pl + ">" + src_pl,
       "source-language plural suffix replaces the target plural marker"},
      {"plural-marker-dropped", "morphological", 1.0, "CLASS:noun_pl", "$1:" + pl + ">",
       "plural marker omitted, breaking number agreement"},
      {"agreement-singular-to-plural", "morphological", 1.0, "CLASS:verb_sg", "$1:" + sg_agr + ">" + pl_agr,
       "verb carries plural agreement with a singular subject"},
      {"agreement-plural-to-singular", "morphological", 1.0, "CLASS:verb_pl", "$1:" + pl_agr + ">" + sg_agr,
       "verb carries singular agreement with a plural subject"},
      {"gender-marker", "morphological", 1.0, "CLASS:adj", "$1:>e",
       "source-style feminine marker added to an adjective"},
      {"verb-before-bare-object", "syntactic", 0.9, "CLASS:noun CLASS:verb", "$2 $1",
       "source SVO order: verb precedes a bare object"},
      {"verb-before-modified-object", "syntactic", 0.9, "CLASS:noun CLASS:adj CLASS:verb", "$3 $1 $2",
       "source SVO order: verb precedes an adjective-modified object"},
      {"verb-before-definite-object", "syntactic", 0.9, "CLASS:noun " + det + " CLASS:verb", "$3 $1 $2",
       "source SVO order: verb precedes a definite object"},
      {"verb-before-modified-definite-object", "syntactic", 0.9,
       "CLASS:noun CLASS:adj " + det + " CLASS:verb", "$4 $1 $2 $3",
       "source SVO order: verb precedes a modified definite object"},
      {"adjective-prenominal", "syntactic", 0.8, "CLASS:noun CLASS:adj", "$2 $1",
       "adjective moved to the source-style prenominal position"},
      {"determiner-preposed", "syntactic", 0.9, "CLASS:noun " + det, "$2 $1",
       "definite marker moved before the noun"},
      {"determiner-preposed-modified", "syntactic", 0.9, "CLASS:noun CLASS:adj " + det, "$3 $1 $2",
       "definite marker moved before a modified noun"},
      {"article-definite-singular", "lexical", 0.7, "CLASS:noun_sg", spec.article_definite_singular + " $1",
       "source definite article inserted before a singular noun"},
      {"article-indefinite-singular", "lexical", 0.7, "CLASS:noun_sg", spec.article_indefinite_singular + " $1",
       "source indefinite article inserted before a singular noun"},
      {"article-definite-plural", "lexical", 0.7, "CLASS:noun_pl", spec.article_definite_plural + " $1",
       "source definite article inserted before a plural noun"},
      {"article-indefinite-plural", "lexical", 0.7, "CLASS:noun_pl", spec.article_indefinite_plural + " $1",
       "source indefinite article inserted before a plural noun"},
      {"article-replaces-determiner", "lexical", 0.7, "CLASS:noun " + det,
       spec.article_definite_singular + " $1", "source article used instead of the postposed definite marker"},
      {"auxiliary-insertion", "lexical", 0.7, "CLASS:verb", spec.source_auxiliary + " $1",
       "source auxiliary inserted before the verb"},
  };
  return build_ruleset(spec.name, std::move(classes), rules);
}

}  // namespace nslmt

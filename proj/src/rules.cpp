#include "nslmt/rules.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "nslmt/text.hpp"

namespace nslmt {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(RuleCategory category) {
  switch (category) {
    case RuleCategory::morphological: return "morphological";
    case RuleCategory::syntactic: return "syntactic";
    case RuleCategory::lexical: return "lexical";
  }
  return "unknown";
}

RuleCategory parse_rule_category(std::string_view name) {
  if (name == "morphological") return RuleCategory::morphological;
  if (name == "syntactic") return RuleCategory::syntactic;
  if (name == "lexical") return RuleCategory::lexical;
  throw RuleError("unknown category '" + std::string(name) + "'");
}

bool PatternElement::matches(const std::string& token) const {
  switch (kind) {
    case Kind::literal: return token == text;
    case Kind::token_class: return members && members->count(token) > 0;
    case Kind::wildcard: return true;
  }
  return false;
}

namespace {

std::optional<std::string> apply_splice(const std::string& token, const SuffixSplice& splice) {
  if (!ends_with(token, splice.from)) return std::nullopt;
  return token.substr(0, token.size() - splice.from.size()) + splice.to;
}

// Rewrites the window; nullopt when a splice does not apply to its capture.
std::optional<std::vector<std::string>> rewrite_window(const RuleSpec& rule,
                                                       const std::vector<std::string>& tokens,
                                                       std::size_t site) {
  std::vector<std::string> out;
  out.reserve(rule.rewrite.size());
  for (const auto& item : rule.rewrite) {
    if (item.kind == RewriteItem::Kind::literal) {
      out.push_back(item.literal);
      continue;
    }
    const std::string& captured = tokens[site + item.capture];
    if (item.splice) {
      auto spliced = apply_splice(captured, *item.splice);
      if (!spliced) return std::nullopt;
      if (!spliced->empty()) out.push_back(std::move(*spliced));
    } else {
      out.push_back(captured);
    }
  }
  return out;
}

}  // namespace

std::vector<std::size_t> RuleSpec::match_sites(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> sites;
  const std::size_t len = matcher.size();
  if (len == 0 || tokens.size() < len) return sites;
  for (std::size_t i = 0; i + len <= tokens.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < len && ok; ++k) ok = matcher[k].matches(tokens[i + k]);
    if (!ok) continue;
    auto window = rewrite_window(*this, tokens, i);
    if (!window) continue;
    if (std::equal(window->begin(), window->end(), tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + len)) &&
        window->size() == len) {
      continue;
    }
    sites.push_back(i);
  }
  return sites;
}

std::vector<std::string> RuleSpec::rewrite_at(const std::vector<std::string>& tokens, std::size_t site) const {
  auto window = rewrite_window(*this, tokens, site);
  if (!window) throw std::logic_error("rule '" + rule_id + "' does not rewrite at site " + std::to_string(site));
  std::vector<std::string> out(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(site));
  out.insert(out.end(), window->begin(), window->end());
  out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(site + matcher.size()), tokens.end());
  return out;
}

const RuleSpec* RuleSet::find(std::string_view rule_id) const {
  for (const auto& r : rules)
    if (r.rule_id == rule_id) return &r;
  return nullptr;
}

std::set<RuleCategory> RuleSet::categories() const {
  std::set<RuleCategory> out;
  for (const auto& r : rules) out.insert(r.category);
  return out;
}

std::vector<std::string> RuleSet::output_vocabulary() const {
  std::set<std::string> vocab;
  for (const auto& rule : rules) {
    for (const auto& item : rule.rewrite) {
      if (item.kind == RewriteItem::Kind::literal) {
        vocab.insert(item.literal);
      } else if (item.splice) {
        const auto& el = rule.matcher[item.capture];
        if (el.kind == PatternElement::Kind::token_class) {
          for (const auto& tok : token_classes.at(el.text)) {
            if (auto s = apply_splice(tok, *item.splice); s && !s->empty()) vocab.insert(*s);
          }
        } else if (el.kind == PatternElement::Kind::literal) {
          if (auto s = apply_splice(el.text, *item.splice); s && !s->empty()) vocab.insert(*s);
        }
      }
    }
  }
  return {vocab.begin(), vocab.end()};
}

namespace {

struct ClassTable {
  std::unordered_map<std::string, std::shared_ptr<const TokenSet>> sets;
};

std::vector<PatternElement> parse_pattern(const std::string& text, const ClassTable& classes,
                                          const std::string& rule_id) {
  std::vector<PatternElement> out;
  for (auto& tok : split_whitespace(text)) {
    PatternElement el;
    if (tok == "*") {
      el.kind = PatternElement::Kind::wildcard;
      el.text = "*";
    } else if (tok.rfind("CLASS:", 0) == 0) {
      el.kind = PatternElement::Kind::token_class;
      el.text = tok.substr(6);
      auto it = classes.sets.find(el.text);
      if (it == classes.sets.end())
        throw RuleError("rule '" + rule_id + "': undefined token class '" + el.text + "'");
      el.members = it->second;
    } else {
      el.kind = PatternElement::Kind::literal;
      el.text = tok;
    }
    out.push_back(std::move(el));
  }
  if (out.empty()) throw RuleError("rule '" + rule_id + "': empty match pattern");
  return out;
}

std::vector<RewriteItem> parse_rewrite(const std::string& text, std::size_t pattern_len,
                                       const std::string& rule_id) {
  std::vector<RewriteItem> out;
  for (auto& tok : split_whitespace(text)) {
    RewriteItem item;
    if (tok.size() >= 2 && tok[0] == '$' && std::isdigit(static_cast<unsigned char>(tok[1]))) {
      std::size_t pos = 1;
      while (pos < tok.size() && std::isdigit(static_cast<unsigned char>(tok[pos]))) ++pos;
      const std::size_t n = std::stoul(tok.substr(1, pos - 1));
      if (n == 0 || n > pattern_len)
        throw RuleError("rule '" + rule_id + "': capture $" + std::to_string(n) + " out of range");
      item.kind = RewriteItem::Kind::capture;
      item.capture = n - 1;
      if (pos < tok.size()) {
        if (tok[pos] != ':') throw RuleError("rule '" + rule_id + "': malformed capture '" + tok + "'");
        const auto spec = tok.substr(pos + 1);
        const auto gt = spec.find('>');
        if (gt == std::string::npos)
          throw RuleError("rule '" + rule_id + "': suffix splice '" + tok + "' needs the form $N:from>to");
        SuffixSplice splice{spec.substr(0, gt), spec.substr(gt + 1)};
        if (splice.from == splice.to)
          throw RuleError("rule '" + rule_id + "': suffix splice '" + tok + "' is the identity");
        item.splice = std::move(splice);
      }
    } else {
      item.kind = RewriteItem::Kind::literal;
      item.literal = tok;
    }
    out.push_back(std::move(item));
  }
  return out;
}

using Domain = std::optional<std::set<std::string>>;  // nullopt = any token

Domain domain_of(const PatternElement& el, const std::map<std::string, std::vector<std::string>>& classes) {
  switch (el.kind) {
    case PatternElement::Kind::literal: return std::set<std::string>{el.text};
    case PatternElement::Kind::token_class: {
      const auto& toks = classes.at(el.text);
      return std::set<std::string>(toks.begin(), toks.end());
    }
    case PatternElement::Kind::wildcard: return std::nullopt;
  }
  return std::nullopt;
}

Domain intersect(const Domain& a, const Domain& b) {
  if (!a) return b;
  if (!b) return a;
  std::set<std::string> out;
  std::set_intersection(a->begin(), a->end(), b->begin(), b->end(), std::inserter(out, out.begin()));
  return out;
}

bool rewrite_identity_possible(const RuleSpec& rule, const std::map<std::string, std::vector<std::string>>& classes) {
  const std::size_t n = rule.matcher.size();
  if (rule.rewrite.size() != n) {
    // A splice to the empty string drops a token, so lengths can still line up.
    bool any_drop = std::any_of(rule.rewrite.begin(), rule.rewrite.end(),
                                [](const RewriteItem& it) { return it.splice && it.splice->to.empty(); });
    if (!any_drop) return false;
    return true;  // conservative
  }
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<Domain> dom(n);
  for (std::size_t i = 0; i < n; ++i) dom[i] = domain_of(rule.matcher[i], classes);

  std::vector<std::pair<std::size_t, std::string>> literal_constraints;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& item = rule.rewrite[i];
    if (item.kind == RewriteItem::Kind::literal) {
      literal_constraints.emplace_back(i, item.literal);
      continue;
    }
    const std::size_t j = item.capture;
    if (item.splice) {
      if (j == i) return false;  // non-identity splice on the same token always changes it
      if (item.splice->to.empty()) return true;  // conservative
      if (!dom[j]) continue;                     // wildcard source: assume feasible
      bool feasible = false;
      for (const auto& tok : *dom[j]) {
        auto s = apply_splice(tok, *item.splice);
        if (s && (!dom[i] || dom[i]->count(*s))) { feasible = true; break; }
      }
      if (!feasible) return false;
      continue;
    }
    if (j != i) parent[find(i)] = find(j);
  }
  std::map<std::size_t, Domain> group;
  std::map<std::size_t, bool> group_init;
  for (std::size_t i = 0; i < n; ++i) {
    auto r = find(i);
    if (!group_init[r]) { group[r] = dom[i]; group_init[r] = true; }
    else group[r] = intersect(group[r], dom[i]);
  }
  for (auto& [pos, lit] : literal_constraints) {
    auto r = find(pos);
    group[r] = intersect(group[r], std::set<std::string>{lit});
  }
  for (auto& [r, d] : group)
    if (d && d->empty()) return false;
  return true;
}

}  // namespace

bool rewrite_can_be_identity(const RuleSpec& rule) {
  std::map<std::string, std::vector<std::string>> classes;
  for (const auto& el : rule.matcher) {
    if (el.kind == PatternElement::Kind::token_class && el.members) {
      std::vector<std::string> toks(el.members->begin(), el.members->end());
      std::sort(toks.begin(), toks.end());
      classes[el.text] = std::move(toks);
    }
  }
  return rewrite_identity_possible(rule, classes);
}

RuleSet build_ruleset(std::string language, std::map<std::string, std::vector<std::string>> token_classes,
                      const std::vector<RuleDefinition>& defs) {
  RuleSet rs;
  rs.language = std::move(language);
  ClassTable table;
  for (auto& [name, toks] : token_classes) {
    if (name.empty()) throw RuleError("token class with empty name");
    table.sets[name] = std::make_shared<const TokenSet>(toks.begin(), toks.end());
  }
  rs.token_classes = std::move(token_classes);
  std::unordered_set<std::string> ids;
  for (const auto& def : defs) {
    const std::string id = def.rule_id.empty() ? std::string("<unnamed>") : def.rule_id;
    if (def.rule_id.empty()) throw RuleError("rule '" + id + "': missing rule_id");
    if (!ids.insert(def.rule_id).second) throw RuleError("rule '" + id + "': duplicate rule_id");
    RuleSpec rule;
    rule.rule_id = def.rule_id;
    try {
      rule.category = parse_rule_category(def.category);
    } catch (const RuleError& e) {
      throw RuleError("rule '" + id + "': " + e.what());
    }
    if (!(def.severity >= 0.0 && def.severity <= 1.0))
      throw RuleError("rule '" + id + "': severity " + json(def.severity).dump() + " outside [0,1]");
    rule.severity = def.severity;
    rule.description = def.description;
    rule.matcher = parse_pattern(def.match, table, id);
    rule.rewrite = parse_rewrite(def.rewrite, rule.matcher.size(), id);
    rule.match_text = join(split_whitespace(def.match));
    rule.rewrite_text = join(split_whitespace(def.rewrite));
    if (rewrite_identity_possible(rule, rs.token_classes))
      throw RuleError("rule '" + id + "': rewrite can reproduce a matching input unchanged");
    rs.rules.push_back(std::move(rule));
  }
  return rs;
}

RuleSet parse_ruleset(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw RuleError(std::string("rule file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw RuleError("rule file must be a JSON object");
  std::string language = doc.value("language", "");
  std::map<std::string, std::vector<std::string>> classes;
  if (auto it = doc.find("token_classes"); it != doc.end()) {
    if (!it->is_object()) throw RuleError("token_classes must be an object");
    for (auto& [name, toks] : it->items()) {
      if (!toks.is_array()) throw RuleError("token class '" + name + "' must be a list");
      std::vector<std::string> list;
      for (auto& t : toks) {
        if (!t.is_string()) throw RuleError("token class '" + name + "' contains a non-string");
        list.push_back(t.get<std::string>());
      }
      classes[name] = std::move(list);
    }
  }
  std::vector<RuleDefinition> defs;
  if (auto it = doc.find("rules"); it != doc.end()) {
    if (!it->is_array()) throw RuleError("rules must be a list");
    std::size_t idx = 0;
    for (auto& r : *it) {
      if (!r.is_object()) throw RuleError("rule #" + std::to_string(idx) + " is not an object");
      RuleDefinition def;
      def.rule_id = r.value("rule_id", "");
      const std::string label = def.rule_id.empty() ? "#" + std::to_string(idx) : def.rule_id;
      auto get_str = [&](const char* key, bool required) -> std::string {
        auto f = r.find(key);
        if (f == r.end()) {
          if (required) throw RuleError("rule '" + label + "': missing field '" + key + "'");
          return {};
        }
        if (!f->is_string()) throw RuleError("rule '" + label + "': field '" + key + "' must be a string");
        return f->get<std::string>();
      };
      def.category = get_str("category", true);
      def.match = get_str("match", true);
      def.rewrite = get_str("rewrite", true);
      def.description = get_str("description", false);
      auto sev = r.find("severity");
      if (sev == r.end() || !sev->is_number())
        throw RuleError("rule '" + label + "': severity must be a number");
      def.severity = sev->get<double>();
      if (def.rule_id.empty()) throw RuleError("rule '" + label + "': missing rule_id");
      defs.push_back(std::move(def));
      ++idx;
    }
  }
  return build_ruleset(std::move(language), std::move(classes), defs);
}

RuleSet load_ruleset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw RuleError("rule file not found: " + path.string());
  return parse_ruleset(read_file(path));
}

std::string ruleset_to_json(const RuleSet& rs) {
  ordered_json doc;
  doc["language"] = rs.language;
  ordered_json classes = ordered_json::object();
  for (const auto& [name, toks] : rs.token_classes) classes[name] = toks;
  doc["token_classes"] = classes;
  ordered_json rules = ordered_json::array();
  for (const auto& r : rs.rules) {
    ordered_json o;
    o["rule_id"] = r.rule_id;
    o["category"] = to_string(r.category);
    o["severity"] = r.severity;
    o["match"] = r.match_text;
    o["rewrite"] = r.rewrite_text;
    o["description"] = r.description;
    rules.push_back(o);
  }
  doc["rules"] = rules;
  return doc.dump(2) + "\n";
}

std::uint64_t ruleset_hash(const RuleSet& rs) { return fnv1a64(ruleset_to_json(rs)); }

std::vector<const RuleSpec*> applicable_rules(const RuleSet& ruleset, std::string_view sentence) {
  const auto tokens = split_whitespace(sentence);
  std::vector<const RuleSpec*> out;
  for (const auto& rule : ruleset.rules)
    if (!rule.match_sites(tokens).empty()) out.push_back(&rule);
  return out;
}

ViolationRecord apply_rule(const RuleSpec& rule, std::string_view sentence, Rng& rng, std::string source_id) {
  const auto tokens = split_whitespace(sentence);
  const auto sites = rule.match_sites(tokens);
  if (sites.empty())
    throw std::logic_error("apply_rule: rule '" + rule.rule_id + "' is not applicable to \"" +
                           std::string(sentence) + "\"");
  const std::size_t site = sites[rng.index(sites.size())];
  ViolationRecord rec;
  rec.source_id = std::move(source_id);
  rec.text = join(rule.rewrite_at(tokens, site));
  rec.rule_id = rule.rule_id;
  rec.category = rule.category;
  rec.severity = rule.severity;
  return rec;
}

ViolationSet generate_violations(const ParallelPair& pair, const RuleSet& ruleset, int k_min, int k_max,
                                 Rng& rng) {
  if (k_min < 1) throw std::invalid_argument("generate_violations: k_min must be >= 1");
  if (k_min > k_max)
    throw std::invalid_argument("generate_violations: k_min (" + std::to_string(k_min) + ") > k_max (" +
                                std::to_string(k_max) + ")");
  ViolationSet out;
  out.drawn_k = static_cast<std::size_t>(rng.uniform_int(k_min, k_max));
  const auto applicable = applicable_rules(ruleset, pair.target);
  if (applicable.empty()) {
    out.no_applicable_rule = true;
    return out;
  }
  std::unordered_set<std::string> texts;
  for (std::size_t j = 0; j < out.drawn_k; ++j) {
    ViolationRecord rec;
    for (int attempt = 0; attempt <= kDuplicateRetryBudget; ++attempt) {
      const RuleSpec* rule = applicable[rng.index(applicable.size())];
      rec = apply_rule(*rule, pair.target, rng, pair.id);
      if (!texts.count(rec.text)) break;
    }
    texts.insert(rec.text);
    out.records.push_back(std::move(rec));
  }
  return out;
}

RuleSet filter_by_category(const RuleSet& ruleset, const std::set<RuleCategory>& categories) {
  RuleSet out;
  out.language = ruleset.language;
  out.token_classes = ruleset.token_classes;
  for (const auto& r : ruleset.rules)
    if (categories.count(r.category)) out.rules.push_back(r);
  return out;
}

}  // namespace nslmt

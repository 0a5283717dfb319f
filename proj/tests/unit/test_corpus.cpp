#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "nslmt/corpus.hpp"
#include "nslmt/random.hpp"
#include "nslmt/text.hpp"
#include "nslmt/toy_language.hpp"

using namespace nslmt;

namespace {

std::vector<ParallelPair> numbered(std::size_t n) {
  std::vector<ParallelPair> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({std::to_string(i), "s" + std::to_string(i), "t" + std::to_string(i)});
  return out;
}

std::set<std::string> ids(const std::vector<ParallelPair>& ps) {
  std::set<std::string> s;
  for (const auto& p : ps) s.insert(p.id);
  return s;
}

}  // namespace

TEST_CASE("tsv records get index ids") {
  auto pairs = parse_corpus("bonjour\thello\nmerci\tthanks", CorpusFormat::tsv);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == ParallelPair{"0", "bonjour", "hello"});
  CHECK(pairs[1] == ParallelPair{"1", "merci", "thanks"});
}

TEST_CASE("empty files are empty corpora") {
  CHECK(parse_corpus("", CorpusFormat::jsonl).empty());
  CHECK(parse_corpus("", CorpusFormat::tsv).empty());
}

TEST_CASE("jsonl errors name the line") {
  const std::string text = "{\"source\":\"a\",\"target\":\"b\"}\n{\"source\":\"c\"}\n";
  try {
    parse_corpus(text, CorpusFormat::jsonl);
    FAIL("expected an error");
  } catch (const CorpusError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_corpus("not json\n", CorpusFormat::jsonl), CorpusError);
  CHECK_THROWS_AS(parse_corpus("only-one-column\n", CorpusFormat::tsv), CorpusError);
}

TEST_CASE("duplicate ids are rejected by name") {
  const std::string text = "{\"id\":\"x\",\"source\":\"a\",\"target\":\"b\"}\n{\"id\":\"x\",\"source\":\"c\",\"target\":\"d\"}\n";
  try {
    parse_corpus(text, CorpusFormat::jsonl);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("x") != std::string::npos);
  }
}

TEST_CASE("explicit and implicit ids in jsonl") {
  auto pairs = parse_corpus("{\"id\":\"p\",\"source\":\"a\",\"target\":\"b\"}\n{\"source\":\"c\",\"target\":\"d\"}\n",
                            CorpusFormat::jsonl);
  CHECK(pairs[0].id == "p");
  CHECK(pairs[1].id == "1");
}

TEST_CASE("write then load round-trips") {
  const auto dir = test::temp_dir("corpus_roundtrip");
  const auto pairs = generate_toy_corpus(default_toy_language(), 50);
  for (auto fmt : {CorpusFormat::jsonl, CorpusFormat::tsv}) {
    const auto path = dir / (fmt == CorpusFormat::jsonl ? "c.jsonl" : "c.tsv");
    write_corpus(pairs, path, fmt);
    auto back = load_corpus(path, corpus_format_for(path));
    REQUIRE(back.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(back[i].source == pairs[i].source);
      CHECK(back[i].target == pairs[i].target);
      if (fmt == CorpusFormat::jsonl) CHECK(back[i].id == pairs[i].id);
    }
    write_corpus(back, dir / "again", fmt);
    if (fmt == CorpusFormat::jsonl) CHECK(read_file(dir / "again") == read_file(path));
  }
}

TEST_CASE("splits of 10 pairs into 6/2/2") {
  auto s = make_splits(numbered(10), {6, 2, 2}, 7);
  CHECK(s.train.size() == 6);
  CHECK(s.validation.size() == 2);
  CHECK(s.test.size() == 2);
  CHECK_NOTHROW(check_disjoint(s));
  auto again = make_splits(numbered(10), {6, 2, 2}, 7);
  CHECK(again.train == s.train);
  CHECK(again.validation == s.validation);
  CHECK(again.test == s.test);
}

TEST_CASE("full-scale protocol over 50,000 pairs") {
  auto s = make_splits(numbered(50000), {15000, 500, 1000}, 3);
  CHECK(s.train.size() == 15000);
  CHECK(s.validation.size() == 500);
  CHECK(s.test.size() == 1000);
  CHECK_NOTHROW(check_disjoint(s));
}

TEST_CASE("insufficient pairs reports both counts") {
  try {
    make_splits(numbered(5), {4, 1, 1}, 1);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find('6') != std::string::npos);
    CHECK(msg.find('5') != std::string::npos);
  }
}

TEST_CASE("split disjointness over random sizes and seeds") {
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(60);
    const std::size_t a = rng.index(n + 1);
    const std::size_t b = rng.index(n - a + 1);
    const std::size_t c = rng.index(n - a - b + 1);
    auto s = make_splits(numbered(n), {a, b, c}, rng.next_u64());
    CHECK(s.train.size() == a);
    CHECK(s.validation.size() == b);
    CHECK(s.test.size() == c);
    auto all = ids(s.train);
    for (const auto& id : ids(s.validation)) CHECK(all.insert(id).second);
    for (const auto& id : ids(s.test)) CHECK(all.insert(id).second);
  }
}

TEST_CASE("check_disjoint detects overlap") {
  CorpusSplit s;
  s.train = numbered(3);
  s.test = {s.train[1]};
  CHECK_THROWS(check_disjoint(s));
}

TEST_CASE("subsample nesting, identity and bounds") {
  auto split = make_splits(numbered(3000), {2000, 100, 100}, 5);
  auto full = subsample_train(split, 2000, 9);
  CHECK(full.train == split.train);
  CHECK(full.validation == split.validation);
  std::vector<std::size_t> sizes = {100, 500, 1000, 2000};
  std::set<std::string> prev;
  for (auto n : sizes) {
    auto sub = subsample_train(split, n, 9);
    CHECK(sub.train.size() == n);
    CHECK(sub.validation == split.validation);
    CHECK(sub.test == split.test);
    auto cur = ids(sub.train);
    for (const auto& id : prev) CHECK(cur.count(id));
    prev = cur;
  }
  CHECK_THROWS(subsample_train(split, 2001, 9));
}

TEST_CASE("toy corpus generation") {
  const auto spec = default_toy_language();
  CHECK(generate_toy_corpus(spec, 0).empty());
  auto a = generate_toy_corpus(spec, 200);
  auto b = generate_toy_corpus(spec, 200);
  CHECK(a == b);
  std::set<std::string> pids;
  for (const auto& p : a) CHECK(pids.insert(p.id).second);
}

TEST_CASE("no source article appears in any target") {
  const auto spec = default_toy_language();
  const auto articles = spec.source_articles();
  for (const auto& p : generate_toy_corpus(spec, 1000))
    for (const auto& tok : split_whitespace(p.target))
      for (const auto& a : articles) CHECK_MESSAGE(tok != a, p.target);
}

TEST_CASE("every generated sentence parses back") {
  const auto spec = default_toy_language();
  for (std::uint64_t i = 0; i < 500; ++i) {
    const auto clause = sample_clause(spec, i);
    const auto src = realize_source(spec, clause);
    const auto tgt = realize_target(spec, clause);
    auto ps = parse_source(spec, src);
    auto pt = parse_target(spec, tgt);
    REQUIRE(ps);
    REQUIRE(pt);
    CHECK(realize_source(spec, *ps) == src);
    CHECK(realize_target(spec, *pt) == tgt);
    CHECK(realize_target(spec, *ps) == tgt);
  }
}

TEST_CASE("source and target templates contrast") {
  const auto spec = default_toy_language();
  ToyClause c;
  c.subject = {0, false, true, 1};
  c.object = {2, true, false, std::nullopt};
  c.verb = 0;
  const auto src = split_whitespace(realize_source(spec, c));
  const auto tgt = split_whitespace(realize_target(spec, c));
  // SVO with prenominal adjective and articles; SOV with postnominal adjective.
  CHECK(src[0] == spec.article_definite_singular);
  CHECK(src[1] == spec.adjectives[1].source);
  CHECK(src[2] == spec.nouns[0].source);
  CHECK(tgt[0] == spec.nouns[0].target);
  CHECK(tgt[1] == spec.adjectives[1].target);
  CHECK(tgt[2] == spec.target_definite);
  CHECK(tgt[3] == spec.nouns[2].target + spec.target_plural_suffix);
  CHECK(ends_with(tgt.back(), spec.agreement_singular));
}

TEST_CASE("toy language json round-trips and validates") {
  const auto spec = default_toy_language();
  const auto back = toy_language_from_json(toy_language_to_json(spec));
  CHECK(toy_language_to_json(back) == toy_language_to_json(spec));
  auto bad = spec;
  bad.verbs.clear();
  CHECK_THROWS(validate(bad));
  CHECK_THROWS(generate_toy_corpus(bad, 3));
}

TEST_CASE("shipped toy language matches the built-in one") {
  const auto shipped = load_toy_language(std::filesystem::path(NSLMT_DATA_DIR) / "data/toy/toy_language.json");
  CHECK(toy_language_to_json(shipped) == toy_language_to_json(default_toy_language()));
}

TEST_CASE("corpus hash is content dependent") {
  auto a = numbered(5);
  auto b = a;
  CHECK(corpus_hash(a) == corpus_hash(b));
  b[3].target += "x";
  CHECK(corpus_hash(a) != corpus_hash(b));
}

#include "nslmt/corpus.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "nslmt/random.hpp"
#include "nslmt/text.hpp"

namespace nslmt {

using nlohmann::json;

CorpusFormat parse_corpus_format(const std::string& name) {
  if (name == "jsonl") return CorpusFormat::jsonl;
  if (name == "tsv") return CorpusFormat::tsv;
  throw std::invalid_argument("unknown corpus format '" + name + "' (expected jsonl or tsv)");
}

CorpusFormat corpus_format_for(const std::filesystem::path& path) {
  return path.extension() == ".tsv" ? CorpusFormat::tsv : CorpusFormat::jsonl;
}

namespace {

std::string require_text(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw CorpusError(line, std::string("missing \"") + key + "\" field");
  if (!it->is_string()) throw CorpusError(line, std::string("\"") + key + "\" must be a string");
  auto value = it->get<std::string>();
  if (trim(value).empty()) throw CorpusError(line, std::string("\"") + key + "\" is empty");
  return value;
}

std::vector<std::string> split_lines(const std::string& contents) {
  std::vector<std::string> lines;
  std::string line;
  std::istringstream in(contents);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::vector<ParallelPair> parse_corpus(const std::string& contents, CorpusFormat format) {
  std::vector<ParallelPair> pairs;
  std::unordered_set<std::string> seen;
  const auto lines = split_lines(contents);
  std::size_t record = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const std::string& line = lines[i];
    if (trim(line).empty()) continue;
    ParallelPair pair;
    if (format == CorpusFormat::jsonl) {
      json obj;
      try {
        obj = json::parse(line);
      } catch (const json::parse_error& e) {
        throw CorpusError(line_no, std::string("invalid JSON: ") + e.what());
      }
      if (!obj.is_object()) throw CorpusError(line_no, "record is not a JSON object");
      pair.source = require_text(obj, "source", line_no);
      pair.target = require_text(obj, "target", line_no);
      if (auto it = obj.find("id"); it != obj.end() && !it->is_null()) {
        if (it->is_string()) pair.id = it->get<std::string>();
        else if (it->is_number_integer()) pair.id = std::to_string(it->get<long long>());
        else throw CorpusError(line_no, "\"id\" must be a string");
      } else {
        pair.id = std::to_string(record);
      }
    } else {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw CorpusError(line_no, "expected two tab-separated columns");
      if (line.find('\t', tab + 1) != std::string::npos)
        throw CorpusError(line_no, "expected exactly two tab-separated columns");
      pair.source = line.substr(0, tab);
      pair.target = line.substr(tab + 1);
      if (trim(pair.source).empty()) throw CorpusError(line_no, "source column is empty");
      if (trim(pair.target).empty()) throw CorpusError(line_no, "target column is empty");
      pair.id = std::to_string(record);
    }
    if (!seen.insert(pair.id).second) throw CorpusError(line_no, "duplicate id '" + pair.id + "'");
    pairs.push_back(std::move(pair));
    ++record;
  }
  return pairs;
}

std::vector<ParallelPair> load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("corpus file not found: " + path.string());
  return parse_corpus(read_file(path), format);
}

std::string serialize_corpus(const std::vector<ParallelPair>& pairs, CorpusFormat format) {
  std::string out;
  for (const auto& p : pairs) {
    if (format == CorpusFormat::jsonl) {
      json obj = {{"id", p.id}, {"source", p.source}, {"target", p.target}};
      out += obj.dump();
    } else {
      out += p.source;
      out += '\t';
      out += p.target;
    }
    out += '\n';
  }
  return out;
}

void write_corpus(const std::vector<ParallelPair>& pairs, const std::filesystem::path& path,
                  CorpusFormat format) {
  write_file(path, serialize_corpus(pairs, format));
}

CorpusSplit make_splits(const std::vector<ParallelPair>& pairs, SplitSizes sizes, std::uint64_t seed) {
  const std::size_t required = sizes.train + sizes.validation + sizes.test;
  if (required > pairs.size()) {
    throw std::invalid_argument("make_splits: requires " + std::to_string(required) +
                                " pairs but only " + std::to_string(pairs.size()) + " available");
  }
  Rng rng(derive_seed(seed, {std::string_view("splits")}));
  const auto perm = random_permutation(pairs.size(), rng);
  CorpusSplit split;
  std::size_t cursor = 0;
  auto take = [&](std::vector<ParallelPair>& dst, std::size_t n) {
    dst.reserve(n);
    for (std::size_t i = 0; i < n; ++i) dst.push_back(pairs[perm[cursor++]]);
  };
  take(split.train, sizes.train);
  take(split.validation, sizes.validation);
  take(split.test, sizes.test);
  return split;
}

CorpusSplit subsample_train(const CorpusSplit& split, std::size_t n, std::uint64_t seed) {
  if (n > split.train.size()) {
    throw std::invalid_argument("subsample_train: n=" + std::to_string(n) + " exceeds train size " +
                                std::to_string(split.train.size()));
  }
  Rng rng(derive_seed(seed, {std::string_view("subsample")}));
  auto perm = random_permutation(split.train.size(), rng);
  perm.resize(n);
  std::sort(perm.begin(), perm.end());
  CorpusSplit out;
  out.validation = split.validation;
  out.test = split.test;
  out.train.reserve(n);
  for (auto idx : perm) out.train.push_back(split.train[idx]);
  return out;
}

void check_disjoint(const CorpusSplit& split) {
  std::unordered_set<std::string> ids;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& p : *part) {
      if (!ids.insert(p.id).second) throw std::logic_error("id '" + p.id + "' appears in more than one split");
    }
  }
}

std::uint64_t corpus_hash(const std::vector<ParallelPair>& pairs) {
  std::uint64_t h = fnv1a64("corpus");
  for (const auto& p : pairs) {
    h = fnv1a64(p.id, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
    h = fnv1a64(p.source, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
    h = fnv1a64(p.target, h);
    h = fnv1a64(std::string_view("\x1e", 1), h);
  }
  return h;
}

}  // namespace nslmt

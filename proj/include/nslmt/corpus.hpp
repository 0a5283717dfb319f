#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace nslmt {

struct ParallelPair {
  std::string id;
  std::string source;
  std::string target;

  bool operator==(const ParallelPair&) const = default;
};

struct CorpusSplit {
  std::vector<ParallelPair> train;
  std::vector<ParallelPair> validation;
  std::vector<ParallelPair> test;
};

enum class CorpusFormat { jsonl, tsv };

CorpusFormat parse_corpus_format(const std::string& name);
/// Guesses the format from the file extension (".tsv" -> tsv, otherwise jsonl).
CorpusFormat corpus_format_for(const std::filesystem::path& path);

/// Raised for malformed corpus files; carries the 1-based line number.
class CorpusError : public std::runtime_error {
 public:
  CorpusError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::vector<ParallelPair> parse_corpus(const std::string& contents, CorpusFormat format);
std::vector<ParallelPair> load_corpus(const std::filesystem::path& path, CorpusFormat format);

std::string serialize_corpus(const std::vector<ParallelPair>& pairs, CorpusFormat format);
void write_corpus(const std::vector<ParallelPair>& pairs, const std::filesystem::path& path,
                  CorpusFormat format);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

/// Seeded shuffle, then partition in order: train, validation, test.
CorpusSplit make_splits(const std::vector<ParallelPair>& pairs, SplitSizes sizes, std::uint64_t seed);

/// Replaces train with a seeded n-subset. Subsets are nested in n for a fixed
/// seed and keep the original relative order, so n == train size is the identity.
CorpusSplit subsample_train(const CorpusSplit& split, std::size_t n, std::uint64_t seed);

/// Throws if any id appears in more than one split.
void check_disjoint(const CorpusSplit& split);

/// Stable content hash of a pair sequence (ids, sources and targets, in order).
std::uint64_t corpus_hash(const std::vector<ParallelPair>& pairs);

}  // namespace nslmt

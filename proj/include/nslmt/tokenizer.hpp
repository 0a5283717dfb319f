#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nslmt/corpus.hpp"

namespace nslmt {

using TokenIds = std::vector<int>;

/// Closed-vocabulary whitespace tokenizer.
class Tokenizer {
 public:
  static constexpr int pad = 0;
  static constexpr int bos = 1;
  static constexpr int eos = 2;
  static constexpr int unk = 3;
  static constexpr int num_special = 4;

  Tokenizer();
  /// Specials are prepended; duplicates and special names are ignored.
  explicit Tokenizer(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// [bos, w1 .. wn, eos]; unknown words map to unk.
  TokenIds encode(std::string_view sentence) const;
  /// Drops specials other than unk; stops at the first eos after position 0.
  std::string decode(const TokenIds& ids) const;

  bool operator==(const Tokenizer& other) const { return tokens_ == other.tokens_; }

 private:
  void add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Vocabulary: every source and target token of the pairs in first-appearance
/// order, then any extra tokens (e.g. a ruleset's output vocabulary).
Tokenizer build_tokenizer(const std::vector<ParallelPair>& pairs, const std::vector<std::string>& extra = {});

}  // namespace nslmt

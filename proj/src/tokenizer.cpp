#include "nslmt/tokenizer.hpp"

#include <stdexcept>

#include "nslmt/text.hpp"

namespace nslmt {

namespace {
const std::vector<std::string> kSpecials = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Tokenizer::Tokenizer() {
  for (const auto& s : kSpecials) add(s);
}

Tokenizer::Tokenizer(const std::vector<std::string>& tokens) : Tokenizer() {
  for (const auto& t : tokens) add(t);
}

void Tokenizer::add(const std::string& token) {
  if (token.empty() || index_.count(token)) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

int Tokenizer::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk : it->second;
}

bool Tokenizer::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Tokenizer::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(tokens_.size()));
  return tokens_[static_cast<std::size_t>(id)];
}

TokenIds Tokenizer::encode(std::string_view sentence) const {
  TokenIds ids{bos};
  for (const auto& w : split_whitespace(sentence)) ids.push_back(id(w));
  ids.push_back(eos);
  return ids;
}

std::string Tokenizer::decode(const TokenIds& ids) const {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int t = ids[i];
    if (t == eos && i > 0) break;
    if (t == pad || t == bos || t == eos) continue;
    words.push_back(token(t));
  }
  return join(words);
}

Tokenizer build_tokenizer(const std::vector<ParallelPair>& pairs, const std::vector<std::string>& extra) {
  if (pairs.empty()) throw std::invalid_argument("build_tokenizer: empty corpus");
  std::vector<std::string> tokens;
  for (const auto& p : pairs) {
    for (auto& w : split_whitespace(p.source)) tokens.push_back(std::move(w));
    for (auto& w : split_whitespace(p.target)) tokens.push_back(std::move(w));
  }
  tokens.insert(tokens.end(), extra.begin(), extra.end());
  return Tokenizer(tokens);
}

}  // namespace nslmt

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "nslmt/model.hpp"
#include "nslmt/toy_language.hpp"

namespace nslmt::test {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::path(NSLMT_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline ModelConfig tiny_model(std::size_t vocab, std::size_t dim = 16, std::uint64_t seed = 1) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.dim = dim;
  c.ffn_dim = 2 * dim;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.heads = 4;
  c.max_len = 32;
  c.init_seed = seed;
  return c;
}

inline double rel_err(double a, double b) {
  const double d = std::abs(a - b);
  const double s = std::max({std::abs(a), std::abs(b), 1e-8});
  return d / s;
}

}  // namespace nslmt::test

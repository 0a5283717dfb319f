#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nslmt/autodiff.hpp"
#include "nslmt/tokenizer.hpp"

namespace nslmt {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t dim = 64;
  std::size_t ffn_dim = 128;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t heads = 4;
  std::size_t max_len = 128;
  std::uint64_t init_seed = 1;

  void validate() const;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

/// One decoder sequence in a packed batch: a bos/eos-framed target paired
/// with the index of its source in the batch's source list.
struct DecoderItem {
  std::size_t source = 0;
  TokenIds target;
};

struct EncoderOutput {
  Var memory;                        // (sources * source_len, dim)
  std::size_t source_len = 0;
  std::vector<std::size_t> lengths;  // valid length per source
};

/// Teacher-forced scores of a packed batch. Token t of item i (predicting
/// target[t + 1]) sits at token_logp[offsets[i] + t].
struct BatchScores {
  Var token_logp;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> lengths;
};

/// Pre-LN transformer encoder-decoder with tied input/output embeddings and
/// sinusoidal positions. Pad and bos are never predicted.
class Seq2SeqModel {
 public:
  explicit Seq2SeqModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();

  EncoderOutput encode(Tape& tape, const std::vector<TokenIds>& sources) const;
  /// Log-probability rows (items * target_len, vocab) for next-token prediction.
  Var decode_log_probs(Tape& tape, const EncoderOutput& enc, const std::vector<DecoderItem>& items,
                       std::size_t& target_len) const;
  BatchScores score(Tape& tape, const std::vector<TokenIds>& sources, const std::vector<DecoderItem>& items) const;

 private:
  struct Attn {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct Ffn {
    std::size_t w1, b1, w2, b2;
  };
  struct Ln {
    std::size_t g, b;
  };
  struct EncLayer {
    Ln ln1;
    Attn self;
    Ln ln2;
    Ffn ffn;
  };
  struct DecLayer {
    Ln ln1;
    Attn self;
    Ln ln2;
    Attn cross;
    Ln ln3;
    Ffn ffn;
  };

  std::size_t add_param(const std::string& name, Shape shape, double bound);
  std::size_t add_const(const std::string& name, Shape shape, double value);
  Attn make_attn(const std::string& prefix);
  Ffn make_ffn(const std::string& prefix);
  Ln make_ln(const std::string& prefix);

  Var embed(Tape& tape, Var table, const std::vector<std::size_t>& ids, std::size_t groups, std::size_t len) const;
  void check_ids(const TokenIds& ids) const;

  ModelConfig config_;
  std::vector<NamedParameter> params_;
  std::size_t embedding_ = 0, out_bias_ = 0;
  std::vector<EncLayer> enc_;
  std::vector<DecLayer> dec_;
  Ln enc_final_{}, dec_final_{};
  std::vector<double> positions_;  // (max_len, dim)
};

/// Per-token and total log-probability of y given x (teacher forcing).
struct SequenceLogProb {
  double total = 0.0;
  std::vector<double> per_token;
};
SequenceLogProb log_prob(const Seq2SeqModel& model, const TokenIds& x, const TokenIds& y);

/// Batched log P(y_i | x_i) without building gradients.
std::vector<double> sequence_log_probs(const Seq2SeqModel& model, const std::vector<TokenIds>& xs,
                                       const std::vector<TokenIds>& ys, std::size_t batch = 64);

/// Argmax decoding from bos until eos or max_len generated tokens. Output is
/// framed [bos, ..., eos] when eos was produced, [bos, ...] otherwise.
TokenIds greedy_decode(const Seq2SeqModel& model, const TokenIds& x, std::size_t max_len);
std::vector<TokenIds> greedy_decode_batch(const Seq2SeqModel& model, const std::vector<TokenIds>& xs,
                                          std::size_t max_len, std::size_t batch = 64);

std::vector<double> sinusoidal_positions(std::size_t max_len, std::size_t dim);

}  // namespace nslmt

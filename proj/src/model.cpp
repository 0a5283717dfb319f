#include "nslmt/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "nslmt/random.hpp"

namespace nslmt {

void ModelConfig::validate() const {
  if (vocab_size <= static_cast<std::size_t>(Tokenizer::num_special))
    throw std::invalid_argument("model: vocabulary must contain tokens beyond the specials");
  if (dim == 0 || ffn_dim == 0 || heads == 0 || max_len == 0)
    throw std::invalid_argument("model: dim, ffn_dim, heads and max_len must be positive");
  if (dim % heads != 0) throw std::invalid_argument("model: dim must be divisible by heads");
  if (dim % 2 != 0) throw std::invalid_argument("model: dim must be even for sinusoidal positions");
}

std::vector<double> sinusoidal_positions(std::size_t max_len, std::size_t dim) {
  std::vector<double> pe(max_len * dim);
  for (std::size_t p = 0; p < max_len; ++p)
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
      pe[p * dim + 2 * i] = std::sin(static_cast<double>(p) * freq);
      pe[p * dim + 2 * i + 1] = std::cos(static_cast<double>(p) * freq);
    }
  return pe;
}

namespace {
double glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}
}  // namespace

std::size_t Seq2SeqModel::add_param(const std::string& name, Shape shape, double bound) {
  Tensor t(std::move(shape));
  t.requires_grad = true;
  Rng rng(derive_seed(config_.init_seed, {std::string_view("init"), std::string_view(name)}));
  for (auto& x : t.data) x = rng.uniform(-bound, bound);
  params_.push_back({name, std::move(t)});
  return params_.size() - 1;
}

std::size_t Seq2SeqModel::add_const(const std::string& name, Shape shape, double value) {
  Tensor t(std::move(shape), value);
  t.requires_grad = true;
  params_.push_back({name, std::move(t)});
  return params_.size() - 1;
}

Seq2SeqModel::Attn Seq2SeqModel::make_attn(const std::string& p) {
  const std::size_t D = config_.dim;
  const double b = glorot(D, D);
  Attn a{};
  a.wq = add_param(p + ".wq", {D, D}, b);
  a.bq = add_const(p + ".bq", {D}, 0.0);
  a.wk = add_param(p + ".wk", {D, D}, b);
  a.bk = add_const(p + ".bk", {D}, 0.0);
  a.wv = add_param(p + ".wv", {D, D}, b);
  a.bv = add_const(p + ".bv", {D}, 0.0);
  a.wo = add_param(p + ".wo", {D, D}, b);
  a.bo = add_const(p + ".bo", {D}, 0.0);
  return a;
}

Seq2SeqModel::Ffn Seq2SeqModel::make_ffn(const std::string& p) {
  const std::size_t D = config_.dim, F = config_.ffn_dim;
  Ffn f{};
  f.w1 = add_param(p + ".w1", {D, F}, glorot(D, F));
  f.b1 = add_const(p + ".b1", {F}, 0.0);
  f.w2 = add_param(p + ".w2", {F, D}, glorot(F, D));
  f.b2 = add_const(p + ".b2", {D}, 0.0);
  return f;
}

Seq2SeqModel::Ln Seq2SeqModel::make_ln(const std::string& p) {
  const std::size_t D = config_.dim;
  return Ln{add_const(p + ".gain", {D}, 1.0), add_const(p + ".bias", {D}, 0.0)};
}

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const std::size_t D = config_.dim;
  params_.reserve(8 + 20 * (config_.encoder_layers + config_.decoder_layers) + 16);
  embedding_ = add_param("embedding", {config_.vocab_size, D}, std::sqrt(3.0 / static_cast<double>(D)));
  out_bias_ = add_const("output.bias", {config_.vocab_size}, 0.0);
  for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    EncLayer e;
    e.ln1 = make_ln(p + ".ln1");
    e.self = make_attn(p + ".self");
    e.ln2 = make_ln(p + ".ln2");
    e.ffn = make_ffn(p + ".ffn");
    enc_.push_back(e);
  }
  enc_final_ = make_ln("encoder.final");
  for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
    const std::string p = "decoder." + std::to_string(l);
    DecLayer d;
    d.ln1 = make_ln(p + ".ln1");
    d.self = make_attn(p + ".self");
    d.ln2 = make_ln(p + ".ln2");
    d.cross = make_attn(p + ".cross");
    d.ln3 = make_ln(p + ".ln3");
    d.ffn = make_ffn(p + ".ffn");
    dec_.push_back(d);
  }
  dec_final_ = make_ln("decoder.final");
  positions_ = sinusoidal_positions(config_.max_len, D);
}

std::size_t Seq2SeqModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void Seq2SeqModel::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Seq2SeqModel::check_ids(const TokenIds& ids) const {
  if (ids.empty()) throw std::invalid_argument("model: empty token sequence");
  if (ids.size() > config_.max_len)
    throw std::invalid_argument("model: sequence of " + std::to_string(ids.size()) + " tokens exceeds max_len " +
                                std::to_string(config_.max_len));
  for (int t : ids)
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size)
      throw std::out_of_range("model: token id " + std::to_string(t) + " outside vocabulary of size " +
                              std::to_string(config_.vocab_size));
}

Var Seq2SeqModel::embed(Tape& tape, Var table, const std::vector<std::size_t>& ids, std::size_t groups,
                        std::size_t len) const {
  const std::size_t D = config_.dim;
  Var e = scale(embedding_lookup(table, ids), std::sqrt(static_cast<double>(D)));
  std::vector<double> pos(groups * len * D);
  for (std::size_t g = 0; g < groups; ++g)
    std::copy_n(positions_.begin(), len * D, pos.begin() + g * len * D);
  return add(e, tape.constant(Shape{groups * len, D}, std::move(pos)));
}

namespace {

struct Bind {
  Tape& tape;
  std::vector<NamedParameter>& params;
  std::vector<std::optional<Var>> cache;
  Var operator()(std::size_t i) {
    if (!cache[i]) cache[i] = tape.parameter(params[i].tensor);
    return *cache[i];
  }
};

}  // namespace

EncoderOutput Seq2SeqModel::encode(Tape& tape, const std::vector<TokenIds>& sources) const {
  if (sources.empty()) throw std::invalid_argument("model: no sources to encode");
  auto& params = const_cast<std::vector<NamedParameter>&>(params_);
  Bind P{tape, params, std::vector<std::optional<Var>>(params.size())};
  EncoderOutput out;
  for (const auto& s : sources) {
    check_ids(s);
    out.source_len = std::max(out.source_len, s.size());
    out.lengths.push_back(s.size());
  }
  const std::size_t S = sources.size(), T = out.source_len, D = config_.dim;
  std::vector<std::size_t> ids(S * T, Tokenizer::pad);
  for (std::size_t i = 0; i < S; ++i)
    for (std::size_t t = 0; t < sources[i].size(); ++t) ids[i * T + t] = static_cast<std::size_t>(sources[i][t]);
  Var h = embed(tape, P(embedding_), ids, S, T);
  kernels::AttentionShape shape;
  shape.dim = D;
  shape.heads = config_.heads;
  shape.query_len = shape.key_len = T;
  for (std::size_t i = 0; i < S; ++i) shape.key_group_of.push_back(i);
  shape.key_valid = out.lengths;
  for (const auto& L : enc_) {
    Var x = layer_norm(h, P(L.ln1.g), P(L.ln1.b));
    Var q = add_row_vector(matmul(x, P(L.self.wq)), P(L.self.bq));
    Var k = add_row_vector(matmul(x, P(L.self.wk)), P(L.self.bk));
    Var v = add_row_vector(matmul(x, P(L.self.wv)), P(L.self.bv));
    Var a = add_row_vector(matmul(attention(q, k, v, shape), P(L.self.wo)), P(L.self.bo));
    h = add(h, a);
    x = layer_norm(h, P(L.ln2.g), P(L.ln2.b));
    Var f = add_row_vector(matmul(gelu(add_row_vector(matmul(x, P(L.ffn.w1)), P(L.ffn.b1))), P(L.ffn.w2)),
                           P(L.ffn.b2));
    h = add(h, f);
  }
  out.memory = layer_norm(h, P(enc_final_.g), P(enc_final_.b));
  return out;
}

Var Seq2SeqModel::decode_log_probs(Tape& tape, const EncoderOutput& enc, const std::vector<DecoderItem>& items,
                                   std::size_t& target_len) const {
  if (items.empty()) throw std::invalid_argument("model: no decoder items");
  auto& params = const_cast<std::vector<NamedParameter>&>(params_);
  Bind P{tape, params, std::vector<std::optional<Var>>(params.size())};
  const std::size_t N = items.size(), D = config_.dim;
  std::size_t T = 0;
  std::vector<std::size_t> in_len(N);
  for (std::size_t i = 0; i < N; ++i) {
    check_ids(items[i].target);
    if (items[i].source >= enc.lengths.size())
      throw std::out_of_range("model: decoder item refers to source " + std::to_string(items[i].source));
    in_len[i] = std::max<std::size_t>(1, items[i].target.size() - 1);
    T = std::max(T, in_len[i]);
  }
  target_len = T;
  std::vector<std::size_t> ids(N * T, Tokenizer::pad);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t t = 0; t < in_len[i]; ++t) ids[i * T + t] = static_cast<std::size_t>(items[i].target[t]);
  Var emb = P(embedding_);
  Var h = embed(tape, emb, ids, N, T);
  kernels::AttentionShape self;
  self.dim = D;
  self.heads = config_.heads;
  self.query_len = self.key_len = T;
  self.causal = true;
  for (std::size_t i = 0; i < N; ++i) self.key_group_of.push_back(i);
  self.key_valid = in_len;
  kernels::AttentionShape cross;
  cross.dim = D;
  cross.heads = config_.heads;
  cross.query_len = T;
  cross.key_len = enc.source_len;
  for (const auto& it : items) cross.key_group_of.push_back(it.source);
  cross.key_valid = enc.lengths;
  for (const auto& L : dec_) {
    Var x = layer_norm(h, P(L.ln1.g), P(L.ln1.b));
    Var q = add_row_vector(matmul(x, P(L.self.wq)), P(L.self.bq));
    Var k = add_row_vector(matmul(x, P(L.self.wk)), P(L.self.bk));
    Var v = add_row_vector(matmul(x, P(L.self.wv)), P(L.self.bv));
    h = add(h, add_row_vector(matmul(attention(q, k, v, self), P(L.self.wo)), P(L.self.bo)));
    x = layer_norm(h, P(L.ln2.g), P(L.ln2.b));
    q = add_row_vector(matmul(x, P(L.cross.wq)), P(L.cross.bq));
    k = add_row_vector(matmul(enc.memory, P(L.cross.wk)), P(L.cross.bk));
    v = add_row_vector(matmul(enc.memory, P(L.cross.wv)), P(L.cross.bv));
    h = add(h, add_row_vector(matmul(attention(q, k, v, cross), P(L.cross.wo)), P(L.cross.bo)));
    x = layer_norm(h, P(L.ln3.g), P(L.ln3.b));
    Var f = add_row_vector(matmul(gelu(add_row_vector(matmul(x, P(L.ffn.w1)), P(L.ffn.b1))), P(L.ffn.w2)),
                           P(L.ffn.b2));
    h = add(h, f);
  }
  h = layer_norm(h, P(dec_final_.g), P(dec_final_.b));
  Var logits = add_row_vector(matmul_transposed(h, emb), P(out_bias_));
  std::vector<bool> mask(config_.vocab_size, false);
  mask[Tokenizer::pad] = true;
  mask[Tokenizer::bos] = true;
  logits = masked_fill(logits, mask, -std::numeric_limits<double>::infinity());
  return log_softmax_rows(logits);
}

BatchScores Seq2SeqModel::score(Tape& tape, const std::vector<TokenIds>& sources,
                                const std::vector<DecoderItem>& items) const {
  for (const auto& it : items)
    if (it.target.size() < 2) throw std::invalid_argument("model: target must hold at least bos and one token");
  EncoderOutput enc = encode(tape, sources);
  std::size_t T = 0;
  Var lp = decode_log_probs(tape, enc, items, T);
  BatchScores out;
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out.offsets.push_back(rows.size());
    const std::size_t n = items[i].target.size() - 1;
    out.lengths.push_back(n);
    for (std::size_t t = 0; t < n; ++t) {
      rows.push_back(i * T + t);
      cols.push_back(static_cast<std::size_t>(items[i].target[t + 1]));
    }
  }
  out.token_logp = gather(lp, rows, cols);
  return out;
}

namespace {
void check_framed(const TokenIds& ids, const char* what) {
  if (ids.size() < 2 || ids.front() != Tokenizer::bos || ids.back() != Tokenizer::eos)
    throw std::invalid_argument(std::string("log_prob: ") + what + " must be bos/eos-framed");
}
}  // namespace

SequenceLogProb log_prob(const Seq2SeqModel& model, const TokenIds& x, const TokenIds& y) {
  check_framed(x, "source");
  check_framed(y, "target");
  Tape tape(false);
  BatchScores s = model.score(tape, {x}, {DecoderItem{0, y}});
  SequenceLogProb out;
  auto v = s.token_logp.value();
  out.per_token.assign(v.begin(), v.end());
  for (double t : out.per_token) out.total += t;
  return out;
}

std::vector<double> sequence_log_probs(const Seq2SeqModel& model, const std::vector<TokenIds>& xs,
                                       const std::vector<TokenIds>& ys, std::size_t batch) {
  if (xs.size() != ys.size()) throw std::invalid_argument("sequence_log_probs: source/target count mismatch");
  std::vector<double> out(xs.size(), 0.0);
  for (std::size_t b = 0; b < xs.size(); b += batch) {
    const std::size_t e = std::min(xs.size(), b + batch);
    Tape tape(false);
    std::vector<TokenIds> src(xs.begin() + b, xs.begin() + e);
    std::vector<DecoderItem> items;
    for (std::size_t i = b; i < e; ++i) items.push_back({i - b, ys[i]});
    BatchScores s = model.score(tape, src, items);
    auto v = s.token_logp.value();
    for (std::size_t i = 0; i < items.size(); ++i) {
      double total = 0.0;
      for (std::size_t t = 0; t < s.lengths[i]; ++t) total += v[s.offsets[i] + t];
      out[b + i] = total;
    }
  }
  return out;
}

std::vector<TokenIds> greedy_decode_batch(const Seq2SeqModel& model, const std::vector<TokenIds>& xs,
                                          std::size_t max_len, std::size_t batch) {
  if (max_len == 0) throw std::invalid_argument("greedy_decode: max_len must be at least 1");
  const std::size_t cap = std::min(max_len, model.config().max_len - 1);
  std::vector<TokenIds> out(xs.size(), TokenIds{Tokenizer::bos});
  for (std::size_t b = 0; b < xs.size(); b += batch) {
    const std::size_t e = std::min(xs.size(), b + batch);
    Tape tape(false);
    std::vector<TokenIds> src(xs.begin() + b, xs.begin() + e);
    EncoderOutput enc = model.encode(tape, src);
    std::vector<std::size_t> live;
    for (std::size_t i = b; i < e; ++i) live.push_back(i);
    for (std::size_t step = 0; step < cap && !live.empty(); ++step) {
      std::vector<DecoderItem> items;
      for (auto i : live) {
        TokenIds t = out[i];
        t.push_back(Tokenizer::pad);
        items.push_back({i - b, std::move(t)});
      }
      std::size_t T = 0;
      Var lp = model.decode_log_probs(tape, enc, items, T);
      auto v = lp.value();
      const std::size_t V = lp.cols();
      std::vector<std::size_t> next_live;
      for (std::size_t j = 0; j < live.size(); ++j) {
        const std::size_t i = live[j];
        const std::size_t row = j * T + out[i].size() - 1;
        std::size_t best = 0;
        for (std::size_t c = 1; c < V; ++c)
          if (v[row * V + c] > v[row * V + best]) best = c;
        out[i].push_back(static_cast<int>(best));
        if (static_cast<int>(best) != Tokenizer::eos) next_live.push_back(i);
      }
      live = std::move(next_live);
    }
  }
  return out;
}

TokenIds greedy_decode(const Seq2SeqModel& model, const TokenIds& x, std::size_t max_len) {
  return greedy_decode_batch(model, {x}, max_len, 1)[0];
}

}  // namespace nslmt

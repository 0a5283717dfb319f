// Serial against OpenMP kernels, plus one full training step.
#include <benchmark/benchmark.h>

#include "nslmt/kernels.hpp"
#include "nslmt/loss.hpp"
#include "nslmt/random.hpp"
#include "nslmt/toy_language.hpp"
#include "nslmt/trainer.hpp"

using namespace nslmt;
namespace k = nslmt::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Parallel>
void BM_gemm_nn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::parallel::gemm_nn(n, n, n, a, b, c, false);
    else
      k::serial::gemm_nn(n, n, n, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <bool Parallel>
void BM_log_softmax(benchmark::State& state) {
  const std::size_t rows = static_cast<std::size_t>(state.range(0)), cols = 512;
  const auto x = random_vec(rows * cols, 3);
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::parallel::log_softmax_rows(rows, cols, x, y);
    else
      k::serial::log_softmax_rows(rows, cols, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_attention(benchmark::State& state) {
  k::AttentionShape s;
  s.dim = 64;
  s.heads = 4;
  s.query_len = s.key_len = static_cast<std::size_t>(state.range(0));
  s.causal = true;
  const std::size_t groups = 16;
  for (std::size_t g = 0; g < groups; ++g) {
    s.key_group_of.push_back(g);
    s.key_valid.push_back(s.key_len);
  }
  const std::size_t rows = groups * s.query_len;
  const auto q = random_vec(rows * s.dim, 4), kk = random_vec(rows * s.dim, 5), v = random_vec(rows * s.dim, 6);
  std::vector<double> out(rows * s.dim), probs(groups * s.heads * s.query_len * s.key_len);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::parallel::attention_forward(s, q, kk, v, out, probs);
    else
      k::serial::attention_forward(s, q, kk, v, out, probs);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_train_step(benchmark::State& state) {
  k::set_backend(state.range(0) ? k::Backend::parallel : k::Backend::serial);
  const auto spec = default_toy_language();
  const auto rules = make_toy_ruleset(spec);
  const auto corpus = generate_toy_corpus(spec, 16);
  const Tokenizer tok = build_tokenizer(corpus, rules.output_vocabulary());
  ModelConfig mc;
  mc.vocab_size = tok.size();
  mc.dim = 32;
  mc.ffn_dim = 64;
  mc.encoder_layers = mc.decoder_layers = 2;
  mc.heads = 4;
  Seq2SeqModel model(mc);
  TrainConfig cfg;
  std::vector<const ParallelPair*> ps;
  std::vector<ViolationSet> vs;
  for (const auto& p : corpus) {
    ps.push_back(&p);
    vs.push_back(pair_violations(p, rules, cfg, 0));
  }
  Rng rng(1);
  const auto batch = assemble_batch(tok, ps, vs, cfg.negative_scope, rng);
  for (auto _ : state) {
    model.zero_grad();
    Tape tape;
    tape.backward(nsl_loss(model, tape, batch, 0.7, PenaltyForm::unlikelihood).total);
  }
  k::set_backend(k::Backend::parallel);
}

}  // namespace

BENCHMARK(BM_gemm_nn<false>)->Name("gemm_nn/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_nn<true>)->Name("gemm_nn/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_log_softmax<false>)->Name("log_softmax/serial")->Arg(256)->Arg(2048);
BENCHMARK(BM_log_softmax<true>)->Name("log_softmax/parallel")->Arg(256)->Arg(2048);
BENCHMARK(BM_attention<false>)->Name("attention/serial")->Arg(16)->Arg(48);
BENCHMARK(BM_attention<true>)->Name("attention/parallel")->Arg(16)->Arg(48);
BENCHMARK(BM_train_step)->Name("nsl_step")->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

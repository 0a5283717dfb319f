#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "nslmt/checkpoint.hpp"
#include "nslmt/random.hpp"
#include "nslmt/text.hpp"
#include "nslmt/trainer.hpp"

using namespace nslmt;

namespace {

struct Toy {
  ToyLanguageSpec spec = default_toy_language();
  RuleSet rules = make_toy_ruleset(spec);
  CorpusSplit split;
  Tokenizer tok;
  explicit Toy(std::size_t n_train = 48) {
    split = make_splits(generate_toy_corpus(spec, n_train + 40), {n_train, 20, 20}, 7);
    tok = build_tokenizer(split.train, rules.output_vocabulary());
  }
  ModelConfig model_config(std::size_t dim = 16) const { return test::tiny_model(tok.size(), dim, 1); }
};

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  c.learning_rate = 1e-3;
  c.warmup_steps = 4;
  return c;
}

std::vector<double> flat_params(const Seq2SeqModel& m) {
  std::vector<double> v;
  for (const auto& p : m.parameters()) v.insert(v.end(), p.tensor.data.begin(), p.tensor.data.end());
  return v;
}

}  // namespace

TEST_CASE("clip_gradients") {
  std::vector<NamedParameter> ps(1);
  ps[0].tensor = Tensor({2}, 0.0);
  ps[0].tensor.ensure_grad();
  CHECK(clip_gradients(ps, 1.0) == 1.0);
  ps[0].tensor.grad = {3.0, 4.0};
  CHECK(clip_gradients(ps, 1.0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(ps[0].tensor.grad[0] == doctest::Approx(0.6));
  CHECK(ps[0].tensor.grad[1] == doctest::Approx(0.8));
  CHECK(global_grad_norm(ps) == doctest::Approx(1.0));
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<NamedParameter> many(3);
    for (auto& p : many) {
      p.tensor = Tensor({1 + rng.index(20)});
      p.tensor.ensure_grad();
      for (auto& g : p.tensor.grad) g = rng.uniform(-5, 5);
    }
    const double clip = rng.uniform(0.1, 3.0);
    const double before = global_grad_norm(many);
    const double s = clip_gradients(many, clip);
    CHECK(global_grad_norm(many) <= clip + 1e-9);
    if (before <= clip) CHECK(s == 1.0);
  }
}

TEST_CASE("learning-rate schedule") {
  CHECK(lr_at(250, 2e-5, 500) == doctest::Approx(1e-5).epsilon(1e-15));
  CHECK(lr_at(500, 2e-5, 500) == 2e-5);
  CHECK(lr_at(10000, 2e-5, 500) == 2e-5);
  CHECK(lr_at(1, 1.0, 0) == 1.0);
  CHECK_THROWS(lr_at(0, 2e-5, 500));
}

TEST_CASE("AdamW matches a direct transcription of the update") {
  std::vector<NamedParameter> ps(1);
  ps[0].tensor = Tensor({3}, std::vector<double>{0.5, -1.0, 2.0});
  AdamWConfig cfg;
  AdamW opt(ps, cfg);
  std::vector<double> x = ps[0].tensor.data, m(3, 0.0), v(3, 0.0);
  const std::vector<std::vector<double>> gs = {{0.1, -0.2, 0.3}, {-1.0, 0.5, 0.0}, {0.2, 0.2, -0.7}};
  for (std::size_t t = 1; t <= gs.size(); ++t) {
    ps[0].tensor.grad = gs[t - 1];
    opt.step(ps, 0.01);
    for (std::size_t i = 0; i < 3; ++i) {
      x[i] -= 0.01 * cfg.weight_decay * x[i];
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * gs[t - 1][i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * gs[t - 1][i] * gs[t - 1][i];
      const double mh = m[i] / (1 - std::pow(cfg.beta1, static_cast<double>(t)));
      const double vh = v[i] / (1 - std::pow(cfg.beta2, static_cast<double>(t)));
      x[i] -= 0.01 * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(ps[0].tensor.data[i] == doctest::Approx(x[i]).epsilon(1e-13));
  CHECK(opt.steps() == 3);
}

TEST_CASE("train config defaults, json and validation") {
  const TrainConfig d;
  CHECK(d.epochs == 3);
  CHECK(d.batch_size == 16);
  CHECK(d.learning_rate == 2e-5);
  CHECK(d.warmup_steps == 500);
  CHECK(d.clip_norm == 1.0);
  CHECK(d.alpha == 0.7);
  CHECK(d.k_min == 3);
  CHECK(d.k_max == 5);
  CHECK(d.penalty_form == PenaltyForm::unlikelihood);
  CHECK(d.max_len == 128);
  CHECK(d.adamw.weight_decay == 0.01);
  TrainConfig c = quick_config();
  c.alpha = 0.3;
  c.penalty_form = PenaltyForm::literal;
  CHECK(to_json(train_config_from_json(to_json(c))) == to_json(c));
  CHECK_THROWS(train_config_from_json(nlohmann::json{{"alpah", 0.5}}));
  CHECK_THROWS(train_config_from_json(nlohmann::json{{"alpha", -0.5}}));
  CHECK_THROWS(train_config_from_json(nlohmann::json{{"k_min", 4}, {"k_max", 2}}));
  CHECK_THROWS(train_config_from_json(nlohmann::json{{"clip_norm", 0.0}}));
  CHECK_THROWS(train_config_from_json(nlohmann::json{{"batch_size", 0}}));
}

TEST_CASE("violation streams are pure in seed, epoch and pair id") {
  Toy toy;
  const auto cfg = quick_config();
  const auto& p = toy.split.train[0];
  CHECK(pair_violations(p, toy.rules, cfg, 0).records == pair_violations(p, toy.rules, cfg, 0).records);
  bool differs = false;
  for (int e = 1; e < 6; ++e) differs = differs || pair_violations(p, toy.rules, cfg, e).records != pair_violations(p, toy.rules, cfg, 0).records;
  CHECK(differs);
}

TEST_CASE("batches cover the epoch, keep partial batches and interleave") {
  Toy toy(50);
  const auto cfg = quick_config();
  CHECK(steps_per_epoch(50, 8) == 7);
  std::multiset<std::string> seen;
  for (long long b = 0; b < 7; ++b)
    for (auto* p : batch_pairs(toy.split.train, cfg, 0, b)) seen.insert(p->id);
  CHECK(seen.size() == 50);
  CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == 50);
  CHECK(batch_pairs(toy.split.train, cfg, 0, 6).size() == 2);

  bool negative_first_somewhere = false;
  for (long long b = 0; b < 7; ++b) {
    const auto pairs = batch_pairs(toy.split.train, cfg, 0, b);
    std::vector<ViolationSet> vs;
    std::size_t nneg = 0;
    for (auto* p : pairs) {
      vs.push_back(pair_violations(*p, toy.rules, cfg, 0));
      nneg += vs.back().records.size();
    }
    Rng rng(static_cast<std::uint64_t>(b));
    const auto batch = assemble_batch(toy.tok, pairs, vs, NegativeScope::divergent, rng);
    CHECK(batch.positive_count() == pairs.size());
    CHECK(batch.negative_count() == nneg);
    std::size_t next_pos = 0;
    for (const auto& it : batch.items) {
      if (!it.negative) {
        CHECK(it.source == next_pos);
        ++next_pos;
      } else {
        CHECK(it.severity > 0.0);
      }
    }
    negative_first_somewhere = negative_first_somewhere || batch.items.front().negative;
  }
  CHECK(negative_first_somewhere);
}

TEST_CASE("realized ratio over an epoch at the defaults") {
  Toy toy(1500);
  TrainConfig cfg;
  std::size_t pos = 0, neg = 0, without = 0;
  for (const auto& p : toy.split.train) {
    const auto vs = pair_violations(p, toy.rules, cfg, 0);
    ++pos;
    neg += vs.records.size();
    without += vs.no_applicable_rule ? 1 : 0;
  }
  CHECK(without == 0);
  const double ratio = static_cast<double>(neg) / static_cast<double>(pos);
  CHECK(ratio >= 3.9);
  CHECK(ratio <= 4.1);
}

TEST_CASE("training is deterministic and logs every step") {
  Toy toy;
  auto cfg = quick_config();
  Seq2SeqModel a(toy.model_config()), b(toy.model_config());
  std::ostringstream la, lb;
  TrainOptions oa, ob;
  oa.metrics_log = &la;
  ob.metrics_log = &lb;
  const auto ra = train(a, toy.tok, toy.split, toy.rules, cfg, nullptr, oa);
  const auto rb = train(b, toy.tok, toy.split, toy.rules, cfg, nullptr, ob);
  CHECK(la.str() == lb.str());
  CHECK(flat_params(a) == flat_params(b));
  CHECK(ra.steps.size() == static_cast<std::size_t>(2 * steps_per_epoch(48, 8)));
  CHECK(ra.epochs.size() == 2);
  std::istringstream lines(la.str());
  std::string line;
  std::getline(lines, line);
  const auto j = nlohmann::json::parse(line);
  for (const char* key : {"step", "total", "l_pos", "l_neg", "alpha", "n_pos", "n_neg", "mean_severity"})
    CHECK(j.contains(key));
  CHECK(j["n_neg"].get<int>() > 0);
  CHECK(ra.realized_ratio() >= 3.0);
  CHECK(ra.realized_ratio() <= 5.0);
}

TEST_CASE("alpha zero reproduces the MLE trajectory bit for bit") {
  Toy toy;
  auto nsl = quick_config();
  nsl.alpha = 0.0;
  auto mle = quick_config();
  mle.objective = Objective::mle;
  for (const RuleSet* rules : std::vector<const RuleSet*>{&toy.rules, nullptr}) {
    const RuleSet empty{toy.rules.language, toy.rules.token_classes, {}};
    Seq2SeqModel a(toy.model_config()), b(toy.model_config());
    const auto ra = train(a, toy.tok, toy.split, rules ? *rules : empty, nsl);
    const auto rb = train(b, toy.tok, toy.split, rules ? *rules : empty, mle);
    REQUIRE(ra.steps.size() == rb.steps.size());
    for (std::size_t i = 0; i < ra.steps.size(); ++i) {
      CHECK(ra.steps[i].report.total == rb.steps[i].report.total);
      CHECK(ra.steps[i].report.l_pos == rb.steps[i].report.l_pos);
      CHECK(rb.steps[i].report.l_neg == 0.0);
      CHECK(rb.steps[i].report.n_neg == 0);
      CHECK(ra.steps[i].grad_norm == rb.steps[i].grad_norm);
    }
    CHECK(flat_params(a) == flat_params(b));
  }
}

TEST_CASE("train rejects an empty split and a mismatched tokenizer") {
  Toy toy;
  Seq2SeqModel m(toy.model_config());
  CorpusSplit empty = toy.split;
  empty.train.clear();
  CHECK_THROWS(train(m, toy.tok, empty, toy.rules, quick_config()));
  const Tokenizer small = build_tokenizer({{"0", "a", "b"}});
  CHECK_THROWS(train(m, small, toy.split, toy.rules, quick_config()));
}

TEST_CASE("checkpoint round-trip, resume and error handling") {
  Toy toy;
  const auto dir = test::temp_dir("checkpoint");
  auto cfg = quick_config();
  cfg.epochs = 4;
  Seq2SeqModel fresh(toy.model_config());
  save_checkpoint(dir / "fresh.ckpt", fresh, toy.tok, cfg, TrainState{0, AdamW(fresh.parameters(), cfg.adamw)});
  auto ck = load_checkpoint(dir / "fresh.ckpt");
  CHECK(flat_params(*ck.model) == flat_params(fresh));
  CHECK(ck.tokenizer == toy.tok);
  CHECK(to_json(ck.train_config) == to_json(cfg));
  CHECK(to_json(ck.model_config) == to_json(fresh.config()));

  // Uninterrupted run vs stop-at-10 then resume.
  Seq2SeqModel full(toy.model_config());
  const auto rf = train(full, toy.tok, toy.split, toy.rules, cfg);
  Seq2SeqModel part(toy.model_config());
  TrainOptions stop;
  stop.stop_after_step = 10;
  const auto rp = train(part, toy.tok, toy.split, toy.rules, cfg, nullptr, stop);
  CHECK(rp.state.step == 10);
  save_checkpoint(dir / "mid.ckpt", part, toy.tok, cfg, rp.state);
  auto mid = resume(dir / "mid.ckpt", toy.tok);
  const auto rr = train(*mid.model, toy.tok, toy.split, toy.rules, mid.train_config, &mid.state);
  std::string joined;
  for (const auto& l : rp.steps) joined += to_json(l).dump() + "\n";
  for (const auto& l : rr.steps) joined += to_json(l).dump() + "\n";
  std::string reference;
  for (const auto& l : rf.steps) reference += to_json(l).dump() + "\n";
  CHECK(joined == reference);
  CHECK(flat_params(*mid.model) == flat_params(full));

  const Tokenizer other = build_tokenizer({{"0", "x y", "z"}});
  CHECK_THROWS_WITH_AS(resume(dir / "mid.ckpt", other), doctest::Contains("vocabulary"), CheckpointError);

  std::string bytes = read_file(dir / "mid.ckpt");
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x5a;
  write_file(dir / "corrupt.ckpt", flipped);
  CHECK_THROWS_AS(load_checkpoint(dir / "corrupt.ckpt"), CheckpointError);
  std::string versioned = bytes;
  versioned[11] = 9;
  write_file(dir / "version.ckpt", versioned);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "version.ckpt"), doctest::Contains("version"), CheckpointError);
  write_file(dir / "magic.ckpt", "not a checkpoint");
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), CheckpointError);
  write_file(dir / "truncated.ckpt", bytes.substr(0, bytes.size() - 20));
  CHECK_THROWS_AS(load_checkpoint(dir / "truncated.ckpt"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
}

TEST_CASE("negative-space training suppresses fresh violations (200 pairs, 100 epochs)") {
  const auto spec = default_toy_language();
  const auto rules = make_toy_ruleset(spec);
  const auto split = make_splits(generate_toy_corpus(spec, 400), {200, 50, 100}, 7);
  const Tokenizer tok = build_tokenizer(split.train, rules.output_vocabulary());
  ModelConfig mc = test::tiny_model(tok.size(), 32, 1);
  mc.max_len = 128;
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.learning_rate = 1e-3;
  cfg.warmup_steps = 100;
  std::vector<TokenIds> xs, ys;
  for (const auto& p : split.train) {
    Rng rng(derive_seed(97, {std::string_view(p.id)}));
    for (const auto& v : generate_violations(p, rules, 3, 5, rng).records) {
      xs.push_back(tok.encode(p.source));
      ys.push_back(tok.encode(v.text));
    }
  }
  auto mean_prob = [&](const Seq2SeqModel& m) {
    double s = 0;
    for (double lp : sequence_log_probs(m, xs, ys)) s += std::exp(lp);
    return s / static_cast<double>(xs.size());
  };
  std::vector<TokenIds> px, py;
  for (const auto& p : split.train) {
    px.push_back(tok.encode(p.source));
    py.push_back(tok.encode(p.target));
  }
  auto mean_pos = [&](const Seq2SeqModel& m) {
    double s = 0;
    for (double lp : sequence_log_probs(m, px, py)) s += std::exp(lp);
    return s / static_cast<double>(px.size());
  };
  Seq2SeqModel mle_model(mc), nsl_model(mc);
  TrainConfig mle = cfg;
  mle.objective = Objective::mle;
  train(mle_model, tok, split, rules, mle);
  train(nsl_model, tok, split, rules, cfg);
  const double p_mle = mean_prob(mle_model), p_nsl = mean_prob(nsl_model);
  MESSAGE("mean violation probability: mle " << p_mle << " nsl " << p_nsl);
  MESSAGE("mean reference probability: mle " << mean_pos(mle_model) << " nsl " << mean_pos(nsl_model));
  CHECK(p_nsl * 10.0 <= p_mle);
}

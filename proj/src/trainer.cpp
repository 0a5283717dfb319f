#include "nslmt/trainer.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

namespace nslmt {

std::string to_string(Objective objective) { return objective == Objective::mle ? "mle" : "nsl"; }

Objective parse_objective(const std::string& name) {
  if (name == "mle") return Objective::mle;
  if (name == "nsl") return Objective::nsl;
  throw std::invalid_argument("unknown objective '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || max_len < 2) throw std::invalid_argument("train config: counts must be positive");
  if (warmup_steps < 0) throw std::invalid_argument("train config: warmup_steps must be non-negative");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be positive");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("train config: clip_norm must be positive");
  if (!(alpha >= 0.0)) throw std::invalid_argument("train config: alpha must be non-negative");
  if (k_min < 1 || k_min > k_max) throw std::invalid_argument("train config: need 1 <= k_min <= k_max");
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["warmup_steps"] = c.warmup_steps;
  j["clip_norm"] = c.clip_norm;
  j["alpha"] = c.alpha;
  j["k_min"] = c.k_min;
  j["k_max"] = c.k_max;
  j["penalty_form"] = to_string(c.penalty_form);
  j["negative_scope"] = to_string(c.negative_scope);
  j["objective"] = to_string(c.objective);
  j["seed"] = c.seed;
  j["max_len"] = c.max_len;
  j["beta1"] = c.adamw.beta1;
  j["beta2"] = c.adamw.beta2;
  j["eps"] = c.adamw.eps;
  j["weight_decay"] = c.adamw.weight_decay;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    if (k == "epochs") c.epochs = v.get<int>();
    else if (k == "batch_size") c.batch_size = v.get<int>();
    else if (k == "learning_rate") c.learning_rate = v.get<double>();
    else if (k == "warmup_steps") c.warmup_steps = v.get<long long>();
    else if (k == "clip_norm") c.clip_norm = v.get<double>();
    else if (k == "alpha") c.alpha = v.get<double>();
    else if (k == "k_min") c.k_min = v.get<int>();
    else if (k == "k_max") c.k_max = v.get<int>();
    else if (k == "penalty_form") c.penalty_form = parse_penalty_form(v.get<std::string>());
    else if (k == "negative_scope") c.negative_scope = parse_negative_scope(v.get<std::string>());
    else if (k == "objective") c.objective = parse_objective(v.get<std::string>());
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else if (k == "max_len") c.max_len = v.get<int>();
    else if (k == "beta1") c.adamw.beta1 = v.get<double>();
    else if (k == "beta2") c.adamw.beta2 = v.get<double>();
    else if (k == "eps") c.adamw.eps = v.get<double>();
    else if (k == "weight_decay") c.adamw.weight_decay = v.get<double>();
    else throw std::invalid_argument("train config: unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

long long steps_per_epoch(std::size_t train_size, int batch_size) {
  const auto b = static_cast<std::size_t>(batch_size);
  return static_cast<long long>((train_size + b - 1) / b);
}

ViolationSet pair_violations(const ParallelPair& pair, const RuleSet& ruleset, const TrainConfig& config,
                             int epoch) {
  const std::string e = std::to_string(epoch);
  Rng rng(derive_seed(config.seed, {std::string_view("violations"), std::string_view(e), std::string_view(pair.id)}));
  return generate_violations(pair, ruleset, config.k_min, config.k_max, rng);
}

std::vector<const ParallelPair*> batch_pairs(const std::vector<ParallelPair>& train, const TrainConfig& config,
                                             int epoch, long long batch_index) {
  Rng order_rng(derive_seed(config.seed, {0x65706f6368ULL, static_cast<std::uint64_t>(epoch)}));
  const auto order = random_permutation(train.size(), order_rng);
  const std::size_t b = static_cast<std::size_t>(config.batch_size);
  const std::size_t begin = static_cast<std::size_t>(batch_index) * b;
  const std::size_t end = std::min(train.size(), begin + b);
  std::vector<const ParallelPair*> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(&train[order[i]]);
  return out;
}

MixedBatch assemble_batch(const Tokenizer& tokenizer, const std::vector<const ParallelPair*>& pairs,
                          const std::vector<ViolationSet>& violations, NegativeScope scope, Rng& rng) {
  MixedBatch batch;
  std::vector<BatchItem> pos, neg;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    batch.sources.push_back(tokenizer.encode(pairs[i]->source));
    BatchItem p;
    p.source = i;
    p.target = tokenizer.encode(pairs[i]->target);
    p.pair_id = pairs[i]->id;
    if (i < violations.size()) {
      for (const auto& v : violations[i].records) {
        BatchItem n;
        n.negative = true;
        n.source = i;
        n.target = tokenizer.encode(v.text);
        n.severity = v.severity;
        n.scope_begin = scope == NegativeScope::full ? 0 : divergence_start(p.target, n.target);
        n.scope_length = scope == NegativeScope::first ? 1 : 0;
        n.pair_id = pairs[i]->id;
        n.rule_id = v.rule_id;
        neg.push_back(std::move(n));
      }
    }
    pos.push_back(std::move(p));
  }
  std::vector<char> slot(pos.size() + neg.size(), 0);
  std::fill(slot.begin(), slot.begin() + static_cast<std::ptrdiff_t>(pos.size()), 1);
  if (!neg.empty()) rng.shuffle(slot);
  std::size_t ip = 0, in = 0;
  for (char s : slot) batch.items.push_back(s ? std::move(pos[ip++]) : std::move(neg[in++]));
  return batch;
}

double mean_positive_loss(const Seq2SeqModel& model, const Tokenizer& tokenizer,
                          const std::vector<ParallelPair>& pairs) {
  if (pairs.empty()) return 0.0;
  std::vector<TokenIds> xs, ys;
  for (const auto& p : pairs) {
    xs.push_back(tokenizer.encode(p.source));
    ys.push_back(tokenizer.encode(p.target));
  }
  const auto lp = sequence_log_probs(model, xs, ys);
  double s = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) s += -lp[i] / static_cast<double>(ys[i].size() - 1);
  return s / static_cast<double>(lp.size());
}

nlohmann::ordered_json to_json(const StepLog& l) {
  nlohmann::ordered_json j;
  j["step"] = l.step;
  j["total"] = l.report.total;
  j["l_pos"] = l.report.l_pos;
  j["l_neg"] = l.report.l_neg;
  j["alpha"] = l.report.alpha;
  j["n_pos"] = l.report.n_pos;
  j["n_neg"] = l.report.n_neg;
  j["mean_severity"] = l.report.mean_severity;
  j["epoch"] = l.epoch;
  j["lr"] = l.lr;
  j["grad_norm"] = l.grad_norm;
  j["clip_scale"] = l.clip_scale;
  return j;
}

nlohmann::ordered_json to_json(const EpochLog& l) {
  nlohmann::ordered_json j;
  j["epoch"] = l.epoch;
  j["step"] = l.step;
  j["validation_positive_loss"] = l.validation_positive_loss;
  j["positives"] = l.positives;
  j["negatives"] = l.negatives;
  j["pairs_without_rules"] = l.pairs_without_rules;
  return j;
}

TrainResult train(Seq2SeqModel& model, const Tokenizer& tokenizer, const CorpusSplit& split, const RuleSet& ruleset,
                  const TrainConfig& config, const TrainState* resume, const TrainOptions& options) {
  config.validate();
  if (split.train.empty()) throw std::invalid_argument("train: empty train split");
  if (model.config().vocab_size != tokenizer.size())
    throw std::invalid_argument("train: model vocabulary size " + std::to_string(model.config().vocab_size) +
                                " does not match tokenizer size " + std::to_string(tokenizer.size()));
  auto& params = model.parameters();
  TrainResult result;
  if (resume) {
    result.state = *resume;
  } else {
    result.state.optimizer = AdamW(params, config.adamw);
  }
  const long long per_epoch = steps_per_epoch(split.train.size(), config.batch_size);
  const long long total_steps = per_epoch * config.epochs;
  long long last = total_steps;
  if (options.stop_after_step > 0) last = std::min(last, options.stop_after_step);
  const bool use_negatives = config.objective == Objective::nsl;
  EpochLog epoch_acc;

  for (long long step = result.state.step + 1; step <= last; ++step) {
    const int epoch = static_cast<int>((step - 1) / per_epoch);
    const long long bi = (step - 1) % per_epoch;
    if (bi == 0 || step == result.state.step + 1) {
      epoch_acc = EpochLog{};
      epoch_acc.epoch = epoch;
    }
    const auto pairs = batch_pairs(split.train, config, epoch, bi);
    std::vector<ViolationSet> vsets(pairs.size());
    if (use_negatives) {
#pragma omp parallel for schedule(dynamic)
      for (long long i = 0; i < static_cast<long long>(pairs.size()); ++i)
        vsets[static_cast<std::size_t>(i)] = pair_violations(*pairs[static_cast<std::size_t>(i)], ruleset, config, epoch);
    }
    Rng mix_rng(derive_seed(config.seed, {0x6d6978ULL, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(bi)}));
    MixedBatch batch = assemble_batch(tokenizer, pairs, vsets, config.negative_scope, mix_rng);

    Tape tape;
    LossResult loss = nsl_loss(model, tape, batch, use_negatives ? config.alpha : 0.0, config.penalty_form);
    model.zero_grad();
    tape.backward(loss.total);

    StepLog log;
    log.step = step;
    log.epoch = epoch;
    log.report = loss.report;
    log.grad_norm = global_grad_norm(params);
    log.clip_scale = clip_gradients(params, config.clip_norm);
    log.lr = lr_at(step, config.learning_rate, config.warmup_steps);
    result.state.optimizer.step(params, log.lr);
    result.state.step = step;

    result.positives += loss.report.n_pos;
    result.negatives += loss.report.n_neg;
    epoch_acc.positives += loss.report.n_pos;
    epoch_acc.negatives += loss.report.n_neg;
    for (const auto& v : vsets) epoch_acc.pairs_without_rules += v.no_applicable_rule ? 1 : 0;
    if (options.metrics_log) *options.metrics_log << to_json(log).dump() << '\n';
    result.steps.push_back(log);

    if (bi == per_epoch - 1) {
      epoch_acc.step = step;
      epoch_acc.validation_positive_loss = mean_positive_loss(model, tokenizer, split.validation);
      if (options.metrics_log) *options.metrics_log << to_json(epoch_acc).dump() << '\n';
      result.epochs.push_back(epoch_acc);
    }
  }
  for (auto& p : params) p.tensor.grad.clear();
  return result;
}

}  // namespace nslmt

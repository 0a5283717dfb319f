#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "nslmt/corpus.hpp"
#include "nslmt/loss.hpp"
#include "nslmt/optimizer.hpp"
#include "nslmt/rules.hpp"

namespace nslmt {

enum class Objective { mle, nsl };
std::string to_string(Objective objective);
Objective parse_objective(const std::string& name);

struct TrainConfig {
  int epochs = 3;
  int batch_size = 16;  // positives per step
  double learning_rate = 2e-5;
  long long warmup_steps = 500;
  double clip_norm = 1.0;
  double alpha = 0.7;
  int k_min = 3;
  int k_max = 5;
  PenaltyForm penalty_form = PenaltyForm::unlikelihood;
  NegativeScope negative_scope = NegativeScope::divergent;
  Objective objective = Objective::nsl;
  std::uint64_t seed = 1;
  int max_len = 128;
  AdamWConfig adamw;

  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& config);
/// Fields absent from j keep the values of `base`; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct StepLog {
  long long step = 0;
  int epoch = 0;
  LossReport report;
  double lr = 0.0;
  double grad_norm = 0.0;
  double clip_scale = 1.0;
};

struct EpochLog {
  int epoch = 0;
  long long step = 0;
  double validation_positive_loss = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t pairs_without_rules = 0;
};

struct TrainState {
  long long step = 0;
  AdamW optimizer;
};

struct TrainResult {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  TrainState state;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double realized_ratio() const {
    return positives ? static_cast<double>(negatives) / static_cast<double>(positives) : 0.0;
  }
};

struct TrainOptions {
  /// Stop once this global step has been taken (<= 0: run to the end).
  long long stop_after_step = 0;
  /// Receives one JSON object per step and per epoch.
  std::ostream* metrics_log = nullptr;
};

long long steps_per_epoch(std::size_t train_size, int batch_size);

/// Violation set of one pair for one epoch. Pure in (seed, epoch, pair id).
ViolationSet pair_violations(const ParallelPair& pair, const RuleSet& ruleset, const TrainConfig& config, int epoch);

/// Training pairs of one step, in epoch order.
std::vector<const ParallelPair*> batch_pairs(const std::vector<ParallelPair>& train, const TrainConfig& config,
                                             int epoch, long long batch_index);

/// Interleaves positives with their violations under a random order that
/// keeps positives (and negatives) in their relative order.
MixedBatch assemble_batch(const Tokenizer& tokenizer, const std::vector<const ParallelPair*>& pairs,
                          const std::vector<ViolationSet>& violations, NegativeScope scope, Rng& rng);

/// Mean over pairs of per-sentence token-mean negative log-likelihood.
double mean_positive_loss(const Seq2SeqModel& model, const Tokenizer& tokenizer,
                          const std::vector<ParallelPair>& pairs);

/// Runs the training procedure. With `resume`, continues from resume->step.
TrainResult train(Seq2SeqModel& model, const Tokenizer& tokenizer, const CorpusSplit& split, const RuleSet& ruleset,
                  const TrainConfig& config, const TrainState* resume = nullptr, const TrainOptions& options = {});

nlohmann::ordered_json to_json(const StepLog& log);
nlohmann::ordered_json to_json(const EpochLog& log);

}  // namespace nslmt

#pragma once

#include <string>
#include <vector>

#include "nslmt/model.hpp"

namespace nslmt {

enum class PenaltyForm { literal, unlikelihood };
std::string to_string(PenaltyForm form);
PenaltyForm parse_penalty_form(const std::string& name);

/// Which violation tokens the negative term covers: every token, the suffix
/// starting at the first token that differs from the gold target, or only
/// that first differing token.
enum class NegativeScope { full, divergent, first };
std::string to_string(NegativeScope scope);
NegativeScope parse_negative_scope(const std::string& name);

struct BatchItem {
  bool negative = false;
  std::size_t source = 0;  // index into MixedBatch::sources
  TokenIds target;         // bos/eos-framed
  double severity = 0.0;   // negatives only
  /// First predicted-token position the penalty covers (0 = first token after bos).
  std::size_t scope_begin = 0;
  /// Number of covered positions from scope_begin (0 = through eos).
  std::size_t scope_length = 0;
  std::string pair_id;
  std::string rule_id;
};

/// Positives and negatives in presentation order, sharing encoded sources.
struct MixedBatch {
  std::vector<TokenIds> sources;
  std::vector<BatchItem> items;

  std::size_t positive_count() const;
  std::size_t negative_count() const;
};

/// Predicted-token index of the first position where v differs from y
/// (both framed). Identical sequences return the last position.
std::size_t divergence_start(const TokenIds& y, const TokenIds& v);

struct LossReport {
  double total = 0.0;
  double l_pos = 0.0;
  double l_neg = 0.0;
  double alpha = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double mean_severity = 0.0;
};

struct LossResult {
  Var total;
  Var l_pos;
  Var l_neg;
  LossReport report;
};

/// Mean over positives of per-sentence token-mean negative log-likelihood.
Var positive_loss(const BatchScores& scores, const MixedBatch& batch);
/// Severity-weighted penalty; exact zero when the batch has no negatives.
Var negative_loss(Tape& tape, const BatchScores& scores, const MixedBatch& batch, PenaltyForm form);
LossResult nsl_loss(Tape& tape, const BatchScores& scores, const MixedBatch& batch, double alpha, PenaltyForm form);

Var positive_loss(const Seq2SeqModel& model, Tape& tape, const MixedBatch& batch);
Var negative_loss(const Seq2SeqModel& model, Tape& tape, const MixedBatch& batch, PenaltyForm form);
LossResult nsl_loss(const Seq2SeqModel& model, Tape& tape, const MixedBatch& batch, double alpha, PenaltyForm form);

}  // namespace nslmt

#include "nslmt/loss.hpp"

#include <algorithm>
#include <stdexcept>

namespace nslmt {

std::string to_string(PenaltyForm form) { return form == PenaltyForm::literal ? "literal" : "unlikelihood"; }

PenaltyForm parse_penalty_form(const std::string& name) {
  if (name == "literal") return PenaltyForm::literal;
  if (name == "unlikelihood") return PenaltyForm::unlikelihood;
  throw std::invalid_argument("unknown penalty form '" + name + "'");
}

std::string to_string(NegativeScope scope) {
  switch (scope) {
    case NegativeScope::full: return "full";
    case NegativeScope::divergent: return "divergent";
    case NegativeScope::first: return "first";
  }
  return "divergent";
}

NegativeScope parse_negative_scope(const std::string& name) {
  if (name == "full") return NegativeScope::full;
  if (name == "divergent") return NegativeScope::divergent;
  if (name == "first") return NegativeScope::first;
  throw std::invalid_argument("unknown negative scope '" + name + "'");
}

std::size_t MixedBatch::positive_count() const {
  std::size_t n = 0;
  for (const auto& it : items) n += it.negative ? 0 : 1;
  return n;
}

std::size_t MixedBatch::negative_count() const { return items.size() - positive_count(); }

std::size_t divergence_start(const TokenIds& y, const TokenIds& v) {
  std::size_t j = 1;
  while (j < y.size() && j < v.size() && y[j] == v[j]) ++j;
  if (j >= v.size()) j = v.size() - 1;
  return j - 1;
}

namespace {

void check_scores(const BatchScores& scores, const MixedBatch& batch) {
  if (scores.offsets.size() != batch.items.size())
    throw std::invalid_argument("loss: scores do not match the batch");
}

}  // namespace

Var positive_loss(const BatchScores& scores, const MixedBatch& batch) {
  check_scores(scores, batch);
  const std::size_t n_pos = batch.positive_count();
  if (n_pos == 0) throw std::invalid_argument("positive_loss: batch has no positives");
  std::vector<double> w(scores.token_logp.numel(), 0.0);
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    if (batch.items[i].negative) continue;
    const double wi = -1.0 / (static_cast<double>(n_pos) * static_cast<double>(scores.lengths[i]));
    for (std::size_t t = 0; t < scores.lengths[i]; ++t) w[scores.offsets[i] + t] = wi;
  }
  return weighted_sum(scores.token_logp, w);
}

Var negative_loss(Tape& tape, const BatchScores& scores, const MixedBatch& batch, PenaltyForm form) {
  check_scores(scores, batch);
  const std::size_t n_neg = batch.negative_count();
  if (n_neg == 0) return tape.constant(Shape{}, {0.0});
  std::vector<std::size_t> rows, cols;
  std::vector<double> w;
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    const auto& it = batch.items[i];
    if (!it.negative) continue;
    if (!(it.severity >= 0.0 && it.severity <= 1.0))
      throw std::invalid_argument("negative_loss: severity outside [0, 1]");
    const std::size_t begin = std::min(it.scope_begin, scores.lengths[i] - 1);
    std::size_t len = scores.lengths[i] - begin;
    if (it.scope_length > 0) len = std::min(len, it.scope_length);
    const double wi = it.severity / (static_cast<double>(n_neg) * static_cast<double>(len));
    for (std::size_t t = begin; t < begin + len; ++t) {
      rows.push_back(0);
      cols.push_back(scores.offsets[i] + t);
      w.push_back(form == PenaltyForm::literal ? wi : -wi);
    }
  }
  Var lp = gather(scores.token_logp, rows, cols);
  if (form == PenaltyForm::literal) return weighted_sum(lp, w);
  return weighted_sum(log1m_exp(lp), w);
}

LossResult nsl_loss(Tape& tape, const BatchScores& scores, const MixedBatch& batch, double alpha, PenaltyForm form) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("nsl_loss: alpha must be non-negative");
  LossResult r;
  r.l_pos = positive_loss(scores, batch);
  r.l_neg = negative_loss(tape, scores, batch, form);
  r.total = add(r.l_pos, scale(r.l_neg, alpha));
  auto& rep = r.report;
  rep.l_pos = r.l_pos.item();
  rep.l_neg = r.l_neg.item();
  rep.alpha = alpha;
  rep.total = r.total.item();
  rep.n_pos = batch.positive_count();
  rep.n_neg = batch.negative_count();
  double s = 0.0;
  for (const auto& it : batch.items)
    if (it.negative) s += it.severity;
  rep.mean_severity = rep.n_neg ? s / static_cast<double>(rep.n_neg) : 0.0;
  return r;
}

namespace {

BatchScores score_batch(const Seq2SeqModel& model, Tape& tape, const MixedBatch& batch) {
  std::vector<DecoderItem> items;
  items.reserve(batch.items.size());
  for (const auto& it : batch.items) items.push_back({it.source, it.target});
  return model.score(tape, batch.sources, items);
}

}  // namespace

Var positive_loss(const Seq2SeqModel& model, Tape& tape, const MixedBatch& batch) {
  return positive_loss(score_batch(model, tape, batch), batch);
}

Var negative_loss(const Seq2SeqModel& model, Tape& tape, const MixedBatch& batch, PenaltyForm form) {
  if (batch.negative_count() == 0) return tape.constant(Shape{}, {0.0});
  return negative_loss(tape, score_batch(model, tape, batch), batch, form);
}

LossResult nsl_loss(const Seq2SeqModel& model, Tape& tape, const MixedBatch& batch, double alpha, PenaltyForm form) {
  return nsl_loss(tape, score_batch(model, tape, batch), batch, alpha, form);
}

}  // namespace nslmt

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace nslmt {

/// Corpus metric as additive per-segment statistics plus a score over their sums.
struct CorpusMetric {
  std::string name;
  std::function<std::vector<double>(const std::string& hyp, const std::string& ref)> segment_statistics;
  std::function<double(const std::vector<double>& totals)> score;
};

CorpusMetric bleu_metric();
CorpusMetric chrf_pp_metric();
CorpusMetric metric_by_name(const std::string& name);

/// Corpus BLEU on the 0-100 scale: clipped n-gram precisions up to order
/// N = min(4, longest hypothesis), geometric mean, brevity penalty, no smoothing.
double bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references);
/// Highest n-gram order used by bleu() for these hypotheses.
int bleu_max_order(const std::vector<std::string>& hypotheses);

/// chrF++ on the 0-100 scale: character 1..6-grams (whitespace removed) and
/// word 1..2-grams (edge punctuation split off), counts aggregated over the
/// corpus. Precision and recall are averaged over orders present on both
/// sides, then combined with beta = 2. Matches sacrebleu's default chrF++.
double chrf_pp(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references);

double corpus_score(const CorpusMetric& metric, const std::vector<std::string>& hypotheses,
                    const std::vector<std::string>& references);

struct MetricReport {
  std::string name;
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_segments = 0;
  int iterations = 0;
  int max_order = 0;  // BLEU order cap; 0 for other metrics
};

nlohmann::ordered_json to_json(const MetricReport& report);

/// Percentile bootstrap (2.5 / 97.5, linear interpolation) over segments
/// resampled with replacement.
MetricReport bootstrap_ci(const CorpusMetric& metric, const std::vector<std::string>& hypotheses,
                          const std::vector<std::string>& references, int iterations = 1000,
                          std::uint64_t seed = 0);

/// Linear-interpolated percentile of sorted values, q in [0, 1].
double percentile(const std::vector<double>& sorted, double q);

double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace nslmt

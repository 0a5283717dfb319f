#include "nslmt/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>

#include "nslmt/random.hpp"
#include "nslmt/text.hpp"

namespace nslmt {

namespace {

constexpr int kBleuOrder = 4;
constexpr int kCharOrder = 6;
constexpr int kWordOrder = 2;
constexpr double kBeta = 2.0;

template <typename Seq>
std::map<Seq, int> ngram_counts(const std::vector<typename Seq::value_type>& items, int n) {
  std::map<Seq, int> out;
  if (static_cast<int>(items.size()) < n) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= items.size(); ++i)
    ++out[Seq(items.begin() + static_cast<std::ptrdiff_t>(i), items.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return out;
}

template <typename Map>
double clipped_matches(const Map& hyp, const Map& ref) {
  double m = 0.0;
  for (const auto& [g, c] : hyp) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

template <typename Map>
double total(const Map& m) {
  double t = 0.0;
  for (const auto& [g, c] : m) t += c;
  return t;
}

// BLEU statistics: [hyp_len, ref_len, match_1..4, total_1..4]
std::vector<double> bleu_stats(const std::string& hyp, const std::string& ref) {
  const auto h = split_whitespace(hyp);
  const auto r = split_whitespace(ref);
  std::vector<double> s(2 + 2 * kBleuOrder, 0.0);
  s[0] = static_cast<double>(h.size());
  s[1] = static_cast<double>(r.size());
  for (int n = 1; n <= kBleuOrder; ++n) {
    const auto hc = ngram_counts<std::vector<std::string>>(h, n);
    const auto rc = ngram_counts<std::vector<std::string>>(r, n);
    s[1 + n] = clipped_matches(hc, rc);
    s[1 + kBleuOrder + n] = total(hc);
  }
  return s;
}

int bleu_order_from_totals(const std::vector<double>& s) {
  int order = 0;
  for (int n = 1; n <= kBleuOrder; ++n)
    if (s[1 + kBleuOrder + n] > 0) order = n;
  return order;
}

double bleu_score(const std::vector<double>& s) {
  const double c = s[0], r = s[1];
  if (c <= 0.0) return 0.0;
  const int order = bleu_order_from_totals(s);
  if (order == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= order; ++n) {
    const double m = s[1 + n];
    const double t = s[1 + kBleuOrder + n];
    if (m <= 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_sum / order);
}

// Words with one leading or trailing ASCII punctuation mark split off.
std::vector<std::string> chrf_words(const std::string& text) {
  auto punct = [](char c) { return c >= 0 && c < 0x7f && std::ispunct(static_cast<unsigned char>(c)); };
  std::vector<std::string> out;
  for (const auto& w : split_whitespace(text)) {
    if (w.size() > 1 && punct(w.back())) {
      out.push_back(w.substr(0, w.size() - 1));
      out.push_back(w.substr(w.size() - 1));
    } else if (w.size() > 1 && punct(w.front())) {
      out.push_back(w.substr(0, 1));
      out.push_back(w.substr(1));
    } else {
      out.push_back(w);
    }
  }
  return out;
}

// chrF++ statistics per order (chars 1..6, then words 1..2): [match, hyp_total, ref_total]
std::vector<double> chrf_stats(const std::string& hyp, const std::string& ref) {
  auto strip = [](const std::string& s) {
    std::u32string out;
    for (char32_t c : utf8_decode(s))
      if (c != U' ' && c != U'\t' && c != U'\n' && c != U'\r') out.push_back(c);
    return std::vector<char32_t>(out.begin(), out.end());
  };
  const auto hc = strip(hyp), rc = strip(ref);
  const auto hw = chrf_words(hyp), rw = chrf_words(ref);
  std::vector<double> s;
  s.reserve(3 * (kCharOrder + kWordOrder));
  for (int n = 1; n <= kCharOrder; ++n) {
    const auto a = ngram_counts<std::u32string>(hc, n);
    const auto b = ngram_counts<std::u32string>(rc, n);
    s.push_back(clipped_matches(a, b));
    s.push_back(total(a));
    s.push_back(total(b));
  }
  for (int n = 1; n <= kWordOrder; ++n) {
    const auto a = ngram_counts<std::vector<std::string>>(hw, n);
    const auto b = ngram_counts<std::vector<std::string>>(rw, n);
    s.push_back(clipped_matches(a, b));
    s.push_back(total(a));
    s.push_back(total(b));
  }
  return s;
}

double chrf_score(const std::vector<double>& s) {
  const double b2 = kBeta * kBeta;
  double p_sum = 0.0, r_sum = 0.0;
  int effective = 0;
  for (std::size_t o = 0; o + 2 < s.size(); o += 3) {
    const double m = s[o], h = s[o + 1], r = s[o + 2];
    if (h <= 0.0 || r <= 0.0) continue;
    ++effective;
    p_sum += m / h;
    r_sum += m / r;
  }
  if (effective == 0) return 0.0;
  const double p = p_sum / effective, rec = r_sum / effective;
  if (p + rec <= 0.0) return 0.0;
  return 100.0 * (1.0 + b2) * p * rec / (b2 * p + rec);
}

void check_inputs(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  if (hyps.size() != refs.size())
    throw std::invalid_argument("metric: " + std::to_string(hyps.size()) + " hypotheses but " +
                                std::to_string(refs.size()) + " references");
  if (hyps.empty()) throw std::invalid_argument("metric: empty hypothesis list");
}

std::vector<std::vector<double>> all_stats(const CorpusMetric& metric, const std::vector<std::string>& hyps,
                                           const std::vector<std::string>& refs) {
  check_inputs(hyps, refs);
  std::vector<std::vector<double>> out(hyps.size());
  for (std::size_t i = 0; i < hyps.size(); ++i) out[i] = metric.segment_statistics(hyps[i], refs[i]);
  return out;
}

}  // namespace

CorpusMetric bleu_metric() { return {"bleu", bleu_stats, bleu_score}; }
CorpusMetric chrf_pp_metric() { return {"chrfpp", chrf_stats, chrf_score}; }

CorpusMetric metric_by_name(const std::string& name) {
  if (name == "bleu") return bleu_metric();
  if (name == "chrfpp" || name == "chrf++" || name == "chrf_pp") return chrf_pp_metric();
  throw std::invalid_argument("unknown metric '" + name + "'");
}

double corpus_score(const CorpusMetric& metric, const std::vector<std::string>& hyps,
                    const std::vector<std::string>& refs) {
  const auto stats = all_stats(metric, hyps, refs);
  std::vector<double> totals(stats[0].size(), 0.0);
  for (const auto& s : stats)
    for (std::size_t j = 0; j < s.size(); ++j) totals[j] += s[j];
  return metric.score(totals);
}

double bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  return corpus_score(bleu_metric(), hyps, refs);
}

int bleu_max_order(const std::vector<std::string>& hyps) {
  std::size_t longest = 0;
  for (const auto& h : hyps) longest = std::max(longest, split_whitespace(h).size());
  return static_cast<int>(std::min<std::size_t>(kBleuOrder, longest));
}

double chrf_pp(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  return corpus_score(chrf_pp_metric(), hyps, refs);
}

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("percentile of empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(sorted.size() - 1, lo + 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

MetricReport bootstrap_ci(const CorpusMetric& metric, const std::vector<std::string>& hyps,
                          const std::vector<std::string>& refs, int iterations, std::uint64_t seed) {
  if (iterations < 1) throw std::invalid_argument("bootstrap_ci: iterations must be >= 1");
  const auto stats = all_stats(metric, hyps, refs);
  const std::size_t n = stats.size(), width = stats[0].size();
  std::vector<double> totals(width, 0.0);
  for (const auto& s : stats)
    for (std::size_t j = 0; j < width; ++j) totals[j] += s[j];
  MetricReport rep;
  rep.name = metric.name;
  rep.point = metric.score(totals);
  rep.n_segments = n;
  rep.iterations = iterations;
  if (metric.name == "bleu") rep.max_order = bleu_max_order(hyps);
  std::vector<double> values(static_cast<std::size_t>(iterations));
#pragma omp parallel for schedule(static)
  for (int it = 0; it < iterations; ++it) {
    Rng rng(derive_seed(seed, {0x626f6f74ULL, static_cast<std::uint64_t>(it)}));
    std::vector<double> t(width, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const auto& row = stats[rng.index(n)];
      for (std::size_t j = 0; j < width; ++j) t[j] += row[j];
    }
    values[static_cast<std::size_t>(it)] = metric.score(t);
  }
  std::sort(values.begin(), values.end());
  rep.ci_low = percentile(values, 0.025);
  rep.ci_high = percentile(values, 0.975);
  return rep;
}

nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["metric"] = r.name;
  j["point"] = r.point;
  j["ci_low"] = r.ci_low;
  j["ci_high"] = r.ci_high;
  j["n_segments"] = r.n_segments;
  j["iterations"] = r.iterations;
  if (r.name == "bleu") j["max_order"] = r.max_order;
  return j;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: length mismatch");
  if (xs.size() < 2) throw std::invalid_argument("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: zero variance, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace nslmt

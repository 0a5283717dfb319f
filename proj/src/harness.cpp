#include "nslmt/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "nslmt/random.hpp"
#include "nslmt/text.hpp"

namespace nslmt {

using ojson = nlohmann::ordered_json;

std::string version_string() { return "nslmt 0.1.0"; }

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::compare: return "compare";
    case ExperimentKind::ablation: return "ablation";
    case ExperimentKind::data_efficiency: return "data_efficiency";
    case ExperimentKind::alpha_sweep: return "alpha_sweep";
    case ExperimentKind::ratio_sweep: return "ratio_sweep";
    case ExperimentKind::size_correlation: return "size_correlation";
  }
  return "compare";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (auto k : {ExperimentKind::compare, ExperimentKind::ablation, ExperimentKind::data_efficiency,
                 ExperimentKind::alpha_sweep, ExperimentKind::ratio_sweep, ExperimentKind::size_correlation})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown experiment kind '" + name + "'");
}

std::filesystem::path default_data_root() {
#ifdef NSLMT_DATA_DIR
  if (std::filesystem::exists(NSLMT_DATA_DIR)) return NSLMT_DATA_DIR;
#endif
  return std::filesystem::current_path();
}

std::pair<int, int> ratio_to_k_range(const std::string& ratio) {
  if (ratio == "2:1") return {1, 2};
  if (ratio == "4:1") return {3, 5};
  if (ratio == "6:1") return {5, 7};
  const auto dash = ratio.find('-');
  if (dash != std::string::npos) {
    try {
      const int a = std::stoi(ratio.substr(0, dash));
      const int b = std::stoi(ratio.substr(dash + 1));
      if (a >= 1 && a <= b) return {a, b};
    } catch (const std::exception&) {
    }
  }
  throw std::invalid_argument("unknown violation ratio '" + ratio + "' (expected 2:1, 4:1, 6:1 or k_min-k_max)");
}

void ExperimentPlan::validate() const {
  if (name.empty()) throw std::invalid_argument("plan: missing name");
  if (seeds.empty()) throw std::invalid_argument("plan " + name + ": no replicate seeds");
  std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size()) throw std::invalid_argument("plan " + name + ": replicate seeds must be distinct");
  const bool needs_sweep = kind == ExperimentKind::data_efficiency || kind == ExperimentKind::alpha_sweep ||
                           kind == ExperimentKind::ratio_sweep || kind == ExperimentKind::size_correlation;
  if (needs_sweep && (sweep.is_null() || sweep.empty()))
    throw std::invalid_argument("plan " + name + ": sweep values must be non-empty");
  if (kind == ExperimentKind::alpha_sweep)
    for (const auto& v : sweep)
      if (!v.is_number() || v.get<double>() < 0.0) throw std::invalid_argument("plan " + name + ": alpha values must be >= 0");
  if (kind == ExperimentKind::ratio_sweep)
    for (const auto& v : sweep) ratio_to_k_range(v.get<std::string>());
  if (kind == ExperimentKind::data_efficiency) {
    std::size_t prev = 0;
    for (const auto& v : sweep) {
      const auto n = v.get<std::size_t>();
      if (n == 0 || n <= prev) throw std::invalid_argument("plan " + name + ": sizes must be positive and ascending");
      prev = n;
    }
  }
  train.validate();
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentPlan plan_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  static const std::set<std::string> known = {"name",   "kind",  "description", "corpus", "rules",
                                              "splits", "model", "train",       "evaluation", "sweep",
                                              "include_full", "alpha_control", "seeds"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw std::invalid_argument("plan: unknown key '" + it.key() + "'");
  ExperimentPlan p;
  p.name = j.at("name").get<std::string>();
  p.kind = parse_experiment_kind(j.at("kind").get<std::string>());
  read_if(j, "description", p.description);
  if (j.contains("corpus")) {
    const auto& c = j.at("corpus");
    if (c.contains("path")) p.corpus.path = resolve(c.at("path").get<std::string>(), base);
    if (c.contains("format")) p.corpus.format = parse_corpus_format(c.at("format").get<std::string>());
    if (c.contains("toy_language")) p.corpus.toy_language = resolve(c.at("toy_language").get<std::string>(), base);
    read_if(c, "size", p.corpus.toy_size);
  }
  if (j.contains("rules")) p.rules = resolve(j.at("rules").get<std::string>(), base);
  if (j.contains("splits")) {
    const auto& s = j.at("splits");
    read_if(s, "train", p.splits.train);
    read_if(s, "validation", p.splits.validation);
    read_if(s, "test", p.splits.test);
    read_if(s, "seed", p.split_seed);
  }
  if (j.contains("model")) p.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) p.train = train_config_from_json(j.at("train"));
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    read_if(e, "bootstrap_iterations", p.evaluation.bootstrap_iterations);
    read_if(e, "bootstrap_seed", p.evaluation.bootstrap_seed);
    read_if(e, "max_decode_len", p.evaluation.max_decode_len);
    read_if(e, "violation_seed", p.evaluation.violation_seed);
  }
  if (j.contains("sweep")) p.sweep = j.at("sweep");
  read_if(j, "include_full", p.include_full);
  read_if(j, "alpha_control", p.alpha_control);
  read_if(j, "seeds", p.seeds);
  p.validate();
  return p;
}

ExperimentPlan load_plan(const std::filesystem::path& path, const std::filesystem::path& base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("plan " + path.string() + ": " + e.what());
  }
  return plan_from_json(j, base.empty() ? default_data_root() : base);
}

ExperimentData prepare_data(const ExperimentPlan& plan) {
  ExperimentData d;
  std::optional<ToyLanguageSpec> spec;
  if (plan.corpus.path) {
    d.corpus = load_corpus(*plan.corpus.path, plan.corpus.format.value_or(corpus_format_for(*plan.corpus.path)));
  } else {
    spec = plan.corpus.toy_language ? load_toy_language(*plan.corpus.toy_language) : default_toy_language();
    d.corpus = generate_toy_corpus(*spec, plan.corpus.toy_size);
  }
  d.corpus_hash = corpus_hash(d.corpus);
  d.split = make_splits(d.corpus, plan.splits, plan.split_seed);
  if (!plan.rules.empty()) {
    d.rules = load_ruleset(plan.rules);
  } else if (spec) {
    d.rules = make_toy_ruleset(*spec);
  } else {
    throw std::invalid_argument("plan " + plan.name + ": a rule file is required for non-toy corpora");
  }
  for (const auto& p : d.split.test) {
    Rng rng(derive_seed(plan.evaluation.violation_seed, {std::string_view("heldout"), std::string_view(p.id)}));
    auto vs = generate_violations(p, d.rules, 3, 5, rng);
    for (auto& r : vs.records) d.heldout.push_back(std::move(r));
  }
  return d;
}

const ResultRow* RunCache::find(const std::string& hash) const {
  auto it = rows_.find(hash);
  return it == rows_.end() ? nullptr : &it->second;
}

void RunCache::insert(const std::string& hash, ResultRow row) { rows_.insert_or_assign(hash, std::move(row)); }

namespace {

RuleSet condition_rules(const ExperimentData& data, const Condition& c) {
  if (c.method == "normal" || c.constraints == "none") return RuleSet{data.rules.language, data.rules.token_classes, {}};
  if (c.constraints == "all") return data.rules;
  return filter_by_category(data.rules, {parse_rule_category(c.constraints)});
}

CorpusSplit condition_split(const ExperimentPlan& plan, const ExperimentData& data, const Condition& c) {
  if (c.data_size == 0 || c.data_size == data.split.train.size()) return data.split;
  return subsample_train(data.split, c.data_size, plan.split_seed);
}

ojson split_json(const ExperimentPlan& plan, const CorpusSplit& split) {
  ojson j;
  j["seed"] = plan.split_seed;
  j["train"] = split.train.size();
  j["validation"] = split.validation.size();
  j["test"] = split.test.size();
  j["train_hash"] = hex64(corpus_hash(split.train));
  j["validation_hash"] = hex64(corpus_hash(split.validation));
  j["test_hash"] = hex64(corpus_hash(split.test));
  return j;
}

}  // namespace

ojson cell_manifest(const ExperimentPlan& plan, const ExperimentData& data, const Condition& c, const RuleSet& rules,
                    const CorpusSplit& split) {
  ojson m;
  m["version"] = version_string();
  m["method"] = c.method;
  m["constraints"] = c.constraints;
  m["corpus_hash"] = hex64(data.corpus_hash);
  m["corpus_pairs"] = data.corpus.size();
  m["split"] = split_json(plan, split);
  m["ruleset_hash"] = hex64(ruleset_hash(rules));
  m["vocabulary_rules_hash"] = hex64(ruleset_hash(data.rules));
  auto& ids = m["rule_ids"] = ojson::array();
  for (const auto& r : rules.rules) ids.push_back(r.rule_id);
  m["model"] = to_json(c.model);
  m["train"] = to_json(c.train);
  ojson e;
  e["bootstrap_iterations"] = plan.evaluation.bootstrap_iterations;
  e["bootstrap_seed"] = plan.evaluation.bootstrap_seed;
  e["max_decode_len"] = plan.evaluation.max_decode_len;
  e["violation_seed"] = plan.evaluation.violation_seed;
  e["heldout_violations"] = data.heldout.size();
  m["evaluation"] = e;
  return m;
}

ResultRow run_condition(const ExperimentPlan& plan, const ExperimentData& data, const Condition& c, RunCache* cache) {
  const RuleSet rules = condition_rules(data, c);
  const CorpusSplit split = condition_split(plan, data, c);
  const Tokenizer tok = build_tokenizer(split.train, data.rules.output_vocabulary());
  Condition cond = c;
  cond.model.vocab_size = tok.size();
  cond.model.init_seed = c.seed;
  cond.train.seed = c.seed;
  if (cond.method == "normal") {
    cond.train.objective = Objective::mle;
    cond.train.alpha = 0.0;
  }
  const ojson manifest = cell_manifest(plan, data, cond, rules, split);
  const std::string hash = hex64(fnv1a64(manifest.dump()));
  if (cache) {
    if (const ResultRow* hit = cache->find(hash)) {
      cache->count_hit();
      ResultRow r = *hit;
      r.experiment = plan.name;
      r.ratio = c.ratio;
      return r;
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  Seq2SeqModel model(cond.model);
  TrainResult tr = train(model, tok, split, rules, cond.train);

  std::vector<TokenIds> xs;
  std::vector<std::string> refs;
  for (const auto& p : split.test) {
    xs.push_back(tok.encode(p.source));
    refs.push_back(p.target);
  }
  ResultRow row;
  for (const auto& ids : greedy_decode_batch(model, xs, plan.evaluation.max_decode_len))
    row.hypotheses.push_back(tok.decode(ids));
  row.bleu = bootstrap_ci(bleu_metric(), row.hypotheses, refs, plan.evaluation.bootstrap_iterations,
                          plan.evaluation.bootstrap_seed);
  row.chrfpp = bootstrap_ci(chrf_pp_metric(), row.hypotheses, refs, plan.evaluation.bootstrap_iterations,
                            plan.evaluation.bootstrap_seed);

  std::map<std::string, const ParallelPair*> by_id;
  for (const auto& p : split.test) by_id[p.id] = &p;
  std::vector<TokenIds> vx, vy;
  for (const auto& v : data.heldout) {
    vx.push_back(tok.encode(by_id.at(v.source_id)->source));
    vy.push_back(tok.encode(v.text));
  }
  if (!vx.empty()) {
    const auto lp = sequence_log_probs(model, vx, vy);
    double sp = 0.0, sl = 0.0;
    for (double l : lp) {
      sp += std::exp(l);
      sl += l;
    }
    row.heldout_violation_prob = sp / static_cast<double>(lp.size());
    row.heldout_violation_logprob = sl / static_cast<double>(lp.size());
  }
  row.heldout_violations = vx.size();
  row.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  row.experiment = plan.name;
  row.method = cond.method;
  row.constraints = cond.method == "normal" ? "none" : cond.constraints;
  row.data_size = split.train.size();
  row.alpha = cond.train.alpha;
  row.ratio = c.ratio;
  row.k_min = cond.method == "normal" ? 0 : cond.train.k_min;
  row.k_max = cond.method == "normal" ? 0 : cond.train.k_max;
  row.seed = c.seed;
  row.model_dim = cond.model.dim;
  if (!tr.steps.empty()) row.final_loss = tr.steps.back().report;
  if (!tr.epochs.empty()) row.validation_positive_loss = tr.epochs.back().validation_positive_loss;
  row.realized_ratio = tr.realized_ratio();
  row.steps = tr.state.step;
  row.manifest_hash = hash;
  row.manifest = manifest;
  if (cache) cache->insert(hash, row);
  return row;
}

namespace {

Condition base_condition(const ExperimentPlan& plan, std::uint64_t seed, const std::string& method) {
  Condition c;
  c.method = method;
  c.constraints = method == "normal" ? "none" : "all";
  c.seed = seed;
  c.model = plan.model;
  c.train = plan.train;
  return c;
}

double half_width(const MetricReport& r) { return 0.5 * (r.ci_high - r.ci_low); }

ojson metric_pair(const MetricReport& base, const MetricReport& ours) {
  ojson j;
  j["normal"] = base.point;
  j["nsl"] = ours.point;
  j["delta"] = ours.point - base.point;
  j["relative_delta_percent"] = base.point != 0.0 ? 100.0 * (ours.point - base.point) / base.point : 0.0;
  j["normal_ci_half_width"] = half_width(base);
  j["nsl_ci_half_width"] = half_width(ours);
  j["gap_exceeds_ci"] = ours.point - base.point > std::max(half_width(base), half_width(ours));
  return j;
}

ojson mean_sd(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  ojson j;
  j["mean"] = m;
  j["sd"] = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
  j["n"] = v.size();
  return j;
}

/// Mean and sd of BLEU / chrF++ per label when there are several seeds.
ojson aggregate(const std::vector<ResultRow>& rows, const std::function<std::string(const ResultRow&)>& label) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    const auto k = label(r);
    if (!groups.count(k)) order.push_back(k);
    groups[k].first.push_back(r.bleu.point);
    groups[k].second.push_back(r.chrfpp.point);
  }
  ojson out = ojson::object();
  for (const auto& k : order) {
    out[k]["bleu"] = mean_sd(groups[k].first);
    out[k]["chrfpp"] = mean_sd(groups[k].second);
  }
  return out;
}

}  // namespace

ExperimentResult run_compare(const ExperimentPlan& plan, RunCache* cache) {
  const ExperimentData data = prepare_data(plan);
  ExperimentResult res{plan.name, ExperimentKind::compare, {}, ojson::object()};
  auto& per_seed = res.summary["per_seed"] = ojson::array();
  for (auto seed : plan.seeds) {
    ResultRow normal = run_condition(plan, data, base_condition(plan, seed, "normal"), cache);
    ResultRow nsl = run_condition(plan, data, base_condition(plan, seed, "nsl"), cache);
    ojson s;
    s["seed"] = seed;
    s["bleu"] = metric_pair(normal.bleu, nsl.bleu);
    s["chrfpp"] = metric_pair(normal.chrfpp, nsl.chrfpp);
    s["heldout_violation_prob"] = {{"normal", normal.heldout_violation_prob}, {"nsl", nsl.heldout_violation_prob}};
    per_seed.push_back(s);
    res.rows.push_back(std::move(normal));
    res.rows.push_back(std::move(nsl));
  }
  res.summary["comet"] = "unavailable";
  if (plan.seeds.size() > 1) res.summary["aggregate"] = aggregate(res.rows, [](const ResultRow& r) { return r.method; });
  return res;
}

ExperimentResult run_ablation(const ExperimentPlan& plan, RunCache* cache) {
  const ExperimentData data = prepare_data(plan);
  const auto cats = data.rules.categories();
  for (auto c : kAllCategories)
    if (!cats.count(c)) throw std::invalid_argument("ablation: ruleset has no " + to_string(c) + " rules");
  ExperimentResult res{plan.name, ExperimentKind::ablation, {}, ojson::object()};
  auto& per_seed = res.summary["per_seed"] = ojson::array();
  for (auto seed : plan.seeds) {
    ResultRow base = run_condition(plan, data, base_condition(plan, seed, "normal"), cache);
    std::vector<ResultRow> singles;
    for (auto cat : kAllCategories) {
      Condition c = base_condition(plan, seed, "nsl");
      c.constraints = to_string(cat);
      singles.push_back(run_condition(plan, data, c, cache));
    }
    ResultRow full = run_condition(plan, data, base_condition(plan, seed, "nsl"), cache);
    ojson s;
    s["seed"] = seed;
    s["baseline_bleu"] = base.bleu.point;
    double best = -1.0;
    std::string best_name;
    bool all_above = true;
    for (const auto& r : singles) {
      s["single_bleu"][r.constraints] = r.bleu.point;
      all_above = all_above && r.bleu.point >= base.bleu.point;
      if (r.bleu.point > best) {
        best = r.bleu.point;
        best_name = r.constraints;
      }
    }
    s["full_bleu"] = full.bleu.point;
    s["best_single"] = best_name;
    s["each_single_at_least_baseline"] = all_above;
    s["full_at_least_best_single"] = full.bleu.point >= best;
    per_seed.push_back(s);
    res.rows.push_back(std::move(base));
    for (auto& r : singles) res.rows.push_back(std::move(r));
    res.rows.push_back(std::move(full));
  }
  if (plan.seeds.size() > 1)
    res.summary["aggregate"] = aggregate(res.rows, [](const ResultRow& r) { return r.constraints; });
  return res;
}

ExperimentResult run_data_efficiency(const ExperimentPlan& plan, RunCache* cache) {
  const ExperimentData data = prepare_data(plan);
  const std::size_t full = data.split.train.size();
  std::vector<std::size_t> sizes;
  for (const auto& v : plan.sweep) {
    const auto n = v.get<std::size_t>();
    if (n > full)
      throw std::invalid_argument("data_efficiency: size " + std::to_string(n) + " exceeds train split of " +
                                  std::to_string(full));
    sizes.push_back(n);
  }
  if (plan.include_full && sizes.back() < full) sizes.push_back(full);
  ExperimentResult res{plan.name, ExperimentKind::data_efficiency, {}, ojson::object()};
  auto& per_seed = res.summary["per_seed"] = ojson::array();
  for (auto seed : plan.seeds) {
    std::map<std::size_t, double> normal_bleu, nsl_bleu;
    for (auto n : sizes) {
      for (const char* method : {"normal", "nsl"}) {
        Condition c = base_condition(plan, seed, method);
        c.data_size = n;
        ResultRow r = run_condition(plan, data, c, cache);
        (r.method == "normal" ? normal_bleu : nsl_bleu)[n] = r.bleu.point;
        res.rows.push_back(std::move(r));
      }
    }
    ojson s;
    s["seed"] = seed;
    auto& points = s["sizes"] = ojson::array();
    for (auto n : sizes) {
      ojson p;
      p["size"] = n;
      p["normal_bleu"] = normal_bleu[n];
      p["nsl_bleu"] = nsl_bleu[n];
      p["gain"] = nsl_bleu[n] - normal_bleu[n];
      p["nsl_at_least_normal"] = nsl_bleu[n] >= normal_bleu[n];
      const std::size_t target = std::min(5 * n, full);
      const auto it = normal_bleu.find(target);
      if (it != normal_bleu.end() && target != n) {
        p["normal_at_5x_size"] = target;
        p["normal_at_5x_bleu"] = it->second;
        p["nsl_matches_normal_at_5x"] = nsl_bleu[n] >= it->second;
      }
      double multiplier = 0.0;
      for (auto m : sizes)
        if (nsl_bleu[n] >= normal_bleu[m]) multiplier = std::max(multiplier, static_cast<double>(m) / n);
      p["realized_multiplier"] = multiplier;
      points.push_back(p);
    }
    per_seed.push_back(s);
  }
  if (plan.seeds.size() > 1)
    res.summary["aggregate"] = aggregate(res.rows, [](const ResultRow& r) {
      return r.method + "@" + std::to_string(r.data_size);
    });
  return res;
}

ExperimentResult run_alpha_sweep(const ExperimentPlan& plan, RunCache* cache) {
  const ExperimentData data = prepare_data(plan);
  ExperimentResult res{plan.name, ExperimentKind::alpha_sweep, {}, ojson::object()};
  auto& per_seed = res.summary["per_seed"] = ojson::array();
  for (auto seed : plan.seeds) {
    ojson s;
    s["seed"] = seed;
    double lo = 1e300, hi = -1e300;
    std::vector<double> swept;
    for (const auto& v : plan.sweep) {
      Condition c = base_condition(plan, seed, "nsl");
      c.train.alpha = v.get<double>();
      ResultRow r = run_condition(plan, data, c, cache);
      lo = std::min(lo, r.bleu.point);
      hi = std::max(hi, r.bleu.point);
      swept.push_back(r.bleu.point);
      s["bleu_by_alpha"].push_back({{"alpha", r.alpha}, {"bleu", r.bleu.point}, {"chrfpp", r.chrfpp.point}});
      res.rows.push_back(std::move(r));
    }
    s["bleu_range"] = hi - lo;
    if (plan.alpha_control) {
      ResultRow control = run_condition(plan, data, base_condition(plan, seed, "normal"), cache);
      control.method = "control";
      s["control_bleu"] = control.bleu.point;
      s["control_strictly_worse"] =
          std::all_of(swept.begin(), swept.end(), [&](double b) { return control.bleu.point < b; });
      res.rows.push_back(std::move(control));
    }
    per_seed.push_back(s);
  }
  return res;
}

ExperimentResult run_ratio_sweep(const ExperimentPlan& plan, RunCache* cache) {
  const ExperimentData data = prepare_data(plan);
  ExperimentResult res{plan.name, ExperimentKind::ratio_sweep, {}, ojson::object()};
  auto& per_seed = res.summary["per_seed"] = ojson::array();
  for (auto seed : plan.seeds) {
    ojson s;
    s["seed"] = seed;
    std::map<std::string, double> bleu;
    std::vector<std::string> labels;
    for (const auto& v : plan.sweep) {
      const std::string label = v.get<std::string>();
      const auto [kmin, kmax] = ratio_to_k_range(label);
      Condition c = base_condition(plan, seed, "nsl");
      c.train.k_min = kmin;
      c.train.k_max = kmax;
      c.ratio = label;
      ResultRow r = run_condition(plan, data, c, cache);
      r.ratio = label;
      bleu[label] = r.bleu.point;
      labels.push_back(label);
      s["rows"].push_back({{"ratio", label},
                           {"k_min", kmin},
                           {"k_max", kmax},
                           {"realized_ratio", r.realized_ratio},
                           {"ratio_within_bounds", r.realized_ratio >= kmin && r.realized_ratio <= kmax},
                           {"bleu", r.bleu.point}});
      res.rows.push_back(std::move(r));
    }
    bool increasing = true;
    for (std::size_t i = 1; i < labels.size(); ++i) increasing = increasing && bleu[labels[i]] > bleu[labels[i - 1]];
    s["bleu_increases_with_ratio"] = increasing;
    if (bleu.count("6:1") && bleu.count("4:1")) s["observed_6to1_above_4to1"] = bleu["6:1"] > bleu["4:1"];
    per_seed.push_back(s);
  }
  return res;
}

ExperimentResult run_size_correlation(const ExperimentPlan& plan, RunCache* cache) {
  const ExperimentData data = prepare_data(plan);
  const auto dims = plan.sweep.at("dims").get<std::vector<std::size_t>>();
  const auto sizes = plan.sweep.at("sizes").get<std::vector<std::size_t>>();
  ExperimentResult res{plan.name, ExperimentKind::size_correlation, {}, ojson::object()};
  std::vector<std::vector<double>> gains(dims.size());
  for (auto seed : plan.seeds) {
    for (std::size_t d = 0; d < dims.size(); ++d) {
      for (auto n : sizes) {
        double b[2] = {0.0, 0.0};
        int i = 0;
        for (const char* method : {"normal", "nsl"}) {
          Condition c = base_condition(plan, seed, method);
          c.model.dim = dims[d];
          c.model.ffn_dim = 2 * dims[d];
          c.data_size = n;
          ResultRow r = run_condition(plan, data, c, cache);
          b[i++] = r.bleu.point;
          res.rows.push_back(std::move(r));
        }
        gains[d].push_back(b[1] - b[0]);
      }
    }
  }
  auto& pairs = res.summary["pairs"] = ojson::array();
  double sum = 0.0;
  int count = 0;
  for (std::size_t a = 0; a < dims.size(); ++a)
    for (std::size_t b = a + 1; b < dims.size(); ++b) {
      ojson p;
      p["dims"] = {dims[a], dims[b]};
      try {
        const double r = pearson(gains[a], gains[b]);
        p["pearson"] = r;
        sum += r;
        ++count;
      } catch (const std::invalid_argument& e) {
        p["pearson"] = nullptr;
        p["note"] = e.what();
      }
      pairs.push_back(p);
    }
  res.summary["mean_pearson"] = count ? ojson(sum / count) : ojson(nullptr);
  return res;
}

ExperimentResult run_experiment(const ExperimentPlan& plan, RunCache* cache) {
  switch (plan.kind) {
    case ExperimentKind::compare: return run_compare(plan, cache);
    case ExperimentKind::ablation: return run_ablation(plan, cache);
    case ExperimentKind::data_efficiency: return run_data_efficiency(plan, cache);
    case ExperimentKind::alpha_sweep: return run_alpha_sweep(plan, cache);
    case ExperimentKind::ratio_sweep: return run_ratio_sweep(plan, cache);
    case ExperimentKind::size_correlation: return run_size_correlation(plan, cache);
  }
  throw std::logic_error("unhandled experiment kind");
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

ojson metric_json(const MetricReport& r) { return to_json(r); }

}  // namespace

ojson to_json(const ResultRow& r) {
  ojson j;
  j["experiment"] = r.experiment;
  j["method"] = r.method;
  j["constraints"] = r.constraints;
  j["data_size"] = r.data_size;
  j["alpha"] = r.alpha;
  j["ratio"] = r.ratio;
  j["k_min"] = r.k_min;
  j["k_max"] = r.k_max;
  j["seed"] = r.seed;
  j["model_dim"] = r.model_dim;
  j["bleu"] = metric_json(r.bleu);
  j["chrfpp"] = metric_json(r.chrfpp);
  j["comet"] = "unavailable";
  ojson l;
  l["total"] = r.final_loss.total;
  l["l_pos"] = r.final_loss.l_pos;
  l["l_neg"] = r.final_loss.l_neg;
  l["alpha"] = r.final_loss.alpha;
  l["n_pos"] = r.final_loss.n_pos;
  l["n_neg"] = r.final_loss.n_neg;
  l["mean_severity"] = r.final_loss.mean_severity;
  j["final_loss"] = l;
  j["validation_positive_loss"] = r.validation_positive_loss;
  j["heldout_violation_prob"] = r.heldout_violation_prob;
  j["heldout_violation_logprob"] = r.heldout_violation_logprob;
  j["heldout_violations"] = r.heldout_violations;
  j["realized_ratio"] = r.realized_ratio;
  j["steps"] = r.steps;
  j["runtime_seconds"] = r.runtime_seconds;
  j["manifest_hash"] = r.manifest_hash;
  return j;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream o;
  o << "experiment,method,constraints,data_size,alpha,ratio,k_min,k_max,seed,model_dim,"
       "bleu,bleu_ci_low,bleu_ci_high,bleu_max_order,chrfpp,chrfpp_ci_low,chrfpp_ci_high,comet,"
       "final_total,final_l_pos,final_l_neg,validation_positive_loss,heldout_violation_prob,"
       "heldout_violation_logprob,realized_ratio,steps,runtime_seconds,manifest_hash\n";
  for (const auto& r : rows) {
    o << r.experiment << ',' << r.method << ',' << r.constraints << ',' << r.data_size << ',' << num(r.alpha) << ','
      << r.ratio << ',' << r.k_min << ',' << r.k_max << ',' << r.seed << ',' << r.model_dim << ','
      << num(r.bleu.point) << ',' << num(r.bleu.ci_low) << ',' << num(r.bleu.ci_high) << ',' << r.bleu.max_order
      << ',' << num(r.chrfpp.point) << ',' << num(r.chrfpp.ci_low) << ',' << num(r.chrfpp.ci_high)
      << ",unavailable," << num(r.final_loss.total) << ',' << num(r.final_loss.l_pos) << ','
      << num(r.final_loss.l_neg) << ',' << num(r.validation_positive_loss) << ','
      << num(r.heldout_violation_prob) << ',' << num(r.heldout_violation_logprob) << ','
      << num(r.realized_ratio) << ',' << r.steps << ',' << num(r.runtime_seconds) << ',' << r.manifest_hash
      << '\n';
  }
  return o.str();
}

std::string figure_csv(const ExperimentResult& res) {
  std::string x;
  switch (res.kind) {
    case ExperimentKind::compare: x = "condition"; break;
    case ExperimentKind::ablation: x = "constraints"; break;
    case ExperimentKind::data_efficiency: x = "size"; break;
    case ExperimentKind::alpha_sweep: x = "alpha"; break;
    case ExperimentKind::ratio_sweep: x = "ratio"; break;
    case ExperimentKind::size_correlation: x = "dim"; break;
  }
  std::ostringstream o;
  o << x << (res.kind == ExperimentKind::size_correlation ? ",size" : "")
    << ",method,seed,bleu,bleu_ci_low,bleu_ci_high,chrfpp,chrfpp_ci_low,chrfpp_ci_high\n";
  for (const auto& r : res.rows) {
    switch (res.kind) {
      case ExperimentKind::compare: o << r.method; break;
      case ExperimentKind::ablation: o << r.constraints; break;
      case ExperimentKind::data_efficiency: o << r.data_size; break;
      case ExperimentKind::alpha_sweep: o << num(r.alpha); break;
      case ExperimentKind::ratio_sweep: o << r.ratio; break;
      case ExperimentKind::size_correlation: o << r.model_dim << ',' << r.data_size; break;
    }
    o << ',' << r.method << ',' << r.seed << ',' << num(r.bleu.point) << ',' << num(r.bleu.ci_low) << ','
      << num(r.bleu.ci_high) << ',' << num(r.chrfpp.point) << ',' << num(r.chrfpp.ci_low) << ','
      << num(r.chrfpp.ci_high) << '\n';
  }
  return o.str();
}

void emit_report(const ExperimentResult& res, const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out / "figures", ec);
  std::filesystem::create_directories(out / "manifests", ec);
  std::filesystem::create_directories(out / "hypotheses", ec);
  if (ec) throw std::runtime_error("emit_report: cannot create " + out.string() + ": " + ec.message());
  write_file(out / "results.csv", results_csv(res.rows));
  ojson j;
  j["experiment"] = res.name;
  j["kind"] = to_string(res.kind);
  j["version"] = version_string();
  auto& rows = j["rows"] = ojson::array();
  for (const auto& r : res.rows) rows.push_back(to_json(r));
  j["summary"] = res.summary;
  write_file(out / "results.json", j.dump(2) + "\n");
  write_file(out / "figures" / (to_string(res.kind) + ".csv"), figure_csv(res));
  for (const auto& r : res.rows) {
    write_file(out / "manifests" / (r.manifest_hash + ".json"), r.manifest.dump(2) + "\n");
    std::string hyp;
    for (const auto& h : r.hypotheses) hyp += h + "\n";
    write_file(out / "hypotheses" / (r.manifest_hash + ".txt"), hyp);
  }
}

}  // namespace nslmt

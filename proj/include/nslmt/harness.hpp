#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nslmt/checkpoint.hpp"
#include "nslmt/metrics.hpp"
#include "nslmt/toy_language.hpp"
#include "nslmt/trainer.hpp"

namespace nslmt {

enum class ExperimentKind { compare, ablation, data_efficiency, alpha_sweep, ratio_sweep, size_correlation };
std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);

struct CorpusSource {
  std::optional<std::filesystem::path> path;           // explicit corpus file
  std::optional<CorpusFormat> format;                  // default: from the file extension
  std::optional<std::filesystem::path> toy_language;   // toy spec file, or default language if neither is set
  std::size_t toy_size = 2000;
};

struct EvaluationConfig {
  int bootstrap_iterations = 1000;
  std::uint64_t bootstrap_seed = 11;
  std::size_t max_decode_len = 48;
  std::uint64_t violation_seed = 97;  // held-out violation stream
};

struct ExperimentPlan {
  std::string name;
  ExperimentKind kind = ExperimentKind::compare;
  std::string description;
  CorpusSource corpus;
  std::filesystem::path rules;  // empty: toy ruleset derived from the toy language
  SplitSizes splits{1500, 200, 300};
  std::uint64_t split_seed = 7;
  ModelConfig model;
  TrainConfig train;
  EvaluationConfig evaluation;
  nlohmann::json sweep = nlohmann::json::array();
  bool include_full = true;  // data efficiency: also run the full train split
  bool alpha_control = true;  // alpha sweep: add the alpha = 0 control
  std::vector<std::uint64_t> seeds{1};

  void validate() const;
};

/// Relative paths resolve against `base` (normally the repository root).
ExperimentPlan plan_from_json(const nlohmann::json& j, const std::filesystem::path& base);
ExperimentPlan load_plan(const std::filesystem::path& path, const std::filesystem::path& base = {});
std::filesystem::path default_data_root();

/// Training condition of one grid cell.
struct Condition {
  std::string method = "nsl";         // "normal" or "nsl"
  std::string constraints = "all";    // "all", "none" or a category name
  std::size_t data_size = 0;          // 0: full train split
  std::string ratio;                  // label such as "4:1"
  std::uint64_t seed = 1;
  ModelConfig model;
  TrainConfig train;
};

struct ResultRow {
  std::string experiment;
  std::string method;
  std::string constraints;
  std::size_t data_size = 0;
  double alpha = 0.0;
  std::string ratio;
  int k_min = 0;
  int k_max = 0;
  std::uint64_t seed = 0;
  std::size_t model_dim = 0;
  MetricReport bleu;
  MetricReport chrfpp;
  LossReport final_loss;
  double validation_positive_loss = 0.0;
  double heldout_violation_prob = 0.0;     // mean P(v | x) over held-out violations
  double heldout_violation_logprob = 0.0;  // mean log P(v | x)
  std::size_t heldout_violations = 0;
  double realized_ratio = 0.0;
  long long steps = 0;
  double runtime_seconds = 0.0;
  std::string manifest_hash;
  nlohmann::ordered_json manifest;
  std::vector<std::string> hypotheses;
};

struct ExperimentResult {
  std::string name;
  ExperimentKind kind = ExperimentKind::compare;
  std::vector<ResultRow> rows;
  nlohmann::ordered_json summary;
};

/// Shared corpus, splits, rules and held-out violation set of one plan.
struct ExperimentData {
  std::vector<ParallelPair> corpus;
  CorpusSplit split;
  RuleSet rules;
  std::uint64_t corpus_hash = 0;
  std::vector<ViolationRecord> heldout;  // violations of test targets
};

ExperimentData prepare_data(const ExperimentPlan& plan);

/// Trained cells keyed by manifest hash; shared conditions train once per process.
class RunCache {
 public:
  const ResultRow* find(const std::string& hash) const;
  void insert(const std::string& hash, ResultRow row);
  std::size_t size() const { return rows_.size(); }
  std::size_t hits() const { return hits_; }
  void count_hit() const { ++hits_; }

 private:
  std::map<std::string, ResultRow> rows_;
  mutable std::size_t hits_ = 0;
};

/// Cell manifest: everything needed to rerun the cell exactly.
nlohmann::ordered_json cell_manifest(const ExperimentPlan& plan, const ExperimentData& data, const Condition& c,
                                     const RuleSet& rules, const CorpusSplit& split);

ResultRow run_condition(const ExperimentPlan& plan, const ExperimentData& data, const Condition& c,
                        RunCache* cache = nullptr);

ExperimentResult run_compare(const ExperimentPlan& plan, RunCache* cache = nullptr);
ExperimentResult run_ablation(const ExperimentPlan& plan, RunCache* cache = nullptr);
ExperimentResult run_data_efficiency(const ExperimentPlan& plan, RunCache* cache = nullptr);
ExperimentResult run_alpha_sweep(const ExperimentPlan& plan, RunCache* cache = nullptr);
ExperimentResult run_ratio_sweep(const ExperimentPlan& plan, RunCache* cache = nullptr);
ExperimentResult run_size_correlation(const ExperimentPlan& plan, RunCache* cache = nullptr);
ExperimentResult run_experiment(const ExperimentPlan& plan, RunCache* cache = nullptr);

/// "2:1" -> (1, 2), "4:1" -> (3, 5), "6:1" -> (5, 7); "a-b" gives (a, b).
std::pair<int, int> ratio_to_k_range(const std::string& ratio);

nlohmann::ordered_json to_json(const ResultRow& row);
std::string results_csv(const std::vector<ResultRow>& rows);
std::string figure_csv(const ExperimentResult& result);

/// Writes results.csv, results.json, figures/<kind>.csv and manifests/<hash>.json.
void emit_report(const ExperimentResult& result, const std::filesystem::path& out_dir);

std::string version_string();

}  // namespace nslmt

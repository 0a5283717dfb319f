#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "nslmt/checkpoint.hpp"
#include "nslmt/harness.hpp"
#include "nslmt/random.hpp"
#include "nslmt/text.hpp"
#include "nslmt/toy_language.hpp"

using namespace nslmt;
using ojson = nlohmann::ordered_json;

namespace {

ToyLanguageSpec language_or_default(const std::string& path) {
  return path.empty() ? default_toy_language() : load_toy_language(path);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct TrainArgs {
  std::string corpus, rules, config, out, resume_from;
  long long stop_after = 0;
};

int cmd_train(const TrainArgs& a) {
  ojson cfg = a.config.empty() ? ojson::object() : ojson::parse(read_file(a.config));
  for (auto it = cfg.begin(); it != cfg.end(); ++it)
    if (it.key() != "model" && it.key() != "train" && it.key() != "splits")
      throw std::invalid_argument("config: unknown key '" + it.key() + "'");
  SplitSizes sizes;
  std::uint64_t split_seed = 7;
  if (cfg.contains("splits")) {
    const auto& s = cfg["splits"];
    if (s.contains("train")) sizes.train = s["train"].get<std::size_t>();
    if (s.contains("validation")) sizes.validation = s["validation"].get<std::size_t>();
    if (s.contains("test")) sizes.test = s["test"].get<std::size_t>();
    if (s.contains("seed")) split_seed = s["seed"].get<std::uint64_t>();
  }
  const auto pairs = load_corpus(a.corpus, corpus_format_for(a.corpus));
  const CorpusSplit split = make_splits(pairs, sizes, split_seed);
  const RuleSet rules = load_ruleset(a.rules);
  std::filesystem::create_directories(a.out);
  std::ofstream log(std::filesystem::path(a.out) / "metrics.jsonl", a.resume_from.empty() ? std::ios::trunc : std::ios::app);
  TrainOptions opts;
  opts.metrics_log = &log;
  opts.stop_after_step = a.stop_after;

  TrainResult result;
  Tokenizer tok = build_tokenizer(split.train, rules.output_vocabulary());
  TrainConfig train_cfg;
  std::unique_ptr<Seq2SeqModel> model;
  if (!a.resume_from.empty()) {
    Checkpoint ck = resume(a.resume_from, tok);
    train_cfg = ck.train_config;
    model = std::move(ck.model);
    result = train(*model, tok, split, rules, train_cfg, &ck.state, opts);
  } else {
    ModelConfig mc = cfg.contains("model") ? model_config_from_json(cfg["model"]) : ModelConfig{};
    if (cfg.contains("train")) train_cfg = train_config_from_json(cfg["train"]);
    mc.vocab_size = tok.size();
    model = std::make_unique<Seq2SeqModel>(mc);
    result = train(*model, tok, split, rules, train_cfg, nullptr, opts);
  }
  save_checkpoint(std::filesystem::path(a.out) / "model.ckpt", *model, tok, train_cfg, result.state);
  ojson summary;
  summary["steps"] = result.state.step;
  summary["realized_ratio"] = result.realized_ratio();
  if (!result.steps.empty()) summary["final_total"] = result.steps.back().report.total;
  if (!result.epochs.empty()) summary["validation_positive_loss"] = result.epochs.back().validation_positive_loss;
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_translate(const std::string& ckpt, const std::string& input, std::size_t max_len) {
  Checkpoint ck = load_checkpoint(ckpt);
  std::vector<TokenIds> xs;
  for (const auto& line : read_lines(input)) xs.push_back(ck.tokenizer.encode(line));
  for (const auto& ids : greedy_decode_batch(*ck.model, xs, max_len)) std::cout << ck.tokenizer.decode(ids) << "\n";
  return 0;
}

int cmd_evaluate(const std::string& hyp, const std::string& ref, const std::string& metrics, std::size_t iterations,
                 std::uint64_t seed) {
  const auto hyps = read_lines(hyp);
  const auto refs = read_lines(ref);
  ojson out = ojson::array();
  for (const auto& name : split_list(metrics))
    out.push_back(to_json(bootstrap_ci(metric_by_name(name), hyps, refs, iterations, seed)));
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_violate(const std::string& corpus, const std::string& rules_path, int k_min, int k_max, std::uint64_t seed) {
  const auto pairs = load_corpus(corpus, corpus_format_for(corpus));
  const RuleSet rules = load_ruleset(rules_path);
  for (const auto& p : pairs) {
    Rng rng(derive_seed(seed, {std::string_view(p.id)}));
    for (const auto& v : generate_violations(p, rules, k_min, k_max, rng).records) {
      ojson j;
      j["source_id"] = v.source_id;
      j["text"] = v.text;
      j["rule_id"] = v.rule_id;
      j["category"] = to_string(v.category);
      j["severity"] = v.severity;
      std::cout << j.dump() << "\n";
    }
  }
  return 0;
}

int cmd_experiment_run(const std::string& plan_path, const std::string& out) {
  const ExperimentPlan plan = load_plan(plan_path);
  RunCache cache;
  const ExperimentResult res = run_experiment(plan, &cache);
  emit_report(res, out);
  std::cout << ojson(res.summary).dump(2) << "\n";
  return 0;
}

int cmd_list_plans(const std::string& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const ExperimentPlan p = load_plan(f);
    std::cout << p.name << "\t" << to_string(p.kind) << "\t" << p.description << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Negative-space training for low-resource translation"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  std::string language, out, format = "jsonl";
  std::size_t size = 2000;
  auto* toy_lang = app.add_subcommand("toy-language", "Write the built-in toy language description");
  toy_lang->add_option("--out", out, "Output file")->required();

  auto* toy_rules = app.add_subcommand("toy-rules", "Write the violation rules derived from a toy language");
  toy_rules->add_option("--language", language, "Toy language file (default: built-in)");
  toy_rules->add_option("--out", out, "Output file")->required();

  auto* toy_corpus = app.add_subcommand("toy-corpus", "Generate a parallel corpus from a toy language");
  toy_corpus->add_option("--language", language, "Toy language file (default: built-in)");
  toy_corpus->add_option("--size", size, "Number of pairs")->check(CLI::PositiveNumber);
  toy_corpus->add_option("--format", format, "jsonl or tsv");
  toy_corpus->add_option("--out", out, "Output file")->required();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--corpus", ta.corpus, "Parallel corpus (.jsonl or .tsv)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--rules", ta.rules, "Violation rule file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", ta.config, "JSON with optional model, train and splits objects");
  train_cmd->add_option("--out", ta.out, "Output directory")->required();
  train_cmd->add_option("--resume", ta.resume_from, "Checkpoint to continue from");
  train_cmd->add_option("--stop-after", ta.stop_after, "Stop after this global step");

  std::string ckpt, input;
  std::size_t max_len = 48;
  auto* translate = app.add_subcommand("translate", "Greedy-decode source sentences, one per line");
  translate->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  translate->add_option("--input", input)->required()->check(CLI::ExistingFile);
  translate->add_option("--max-len", max_len);

  std::string hyp, ref, metrics = "bleu,chrfpp";
  std::size_t iterations = 1000;
  std::uint64_t seed = 11;
  auto* evaluate = app.add_subcommand("evaluate", "Corpus metrics with bootstrap confidence intervals");
  evaluate->add_option("--hyp", hyp)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--ref", ref)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--metrics", metrics);
  evaluate->add_option("--bootstrap", iterations);
  evaluate->add_option("--seed", seed);

  std::string corpus, rules;
  int k_min = 3, k_max = 5;
  auto* violate = app.add_subcommand("violate", "Print violations for every pair as JSON lines");
  violate->add_option("--corpus", corpus)->required()->check(CLI::ExistingFile);
  violate->add_option("--rules", rules)->required()->check(CLI::ExistingFile);
  violate->add_option("--k-min", k_min);
  violate->add_option("--k-max", k_max);
  violate->add_option("--seed", seed);

  auto* experiment = app.add_subcommand("experiment", "Run experiment plans");
  experiment->require_subcommand(1);
  std::string plan;
  auto* run = experiment->add_subcommand("run", "Run a plan and write results");
  run->add_option("plan", plan)->required()->check(CLI::ExistingFile);
  run->add_option("--out", out)->required();
  std::string plan_dir = (default_data_root() / "plans").string();
  auto* list = experiment->add_subcommand("list-plans", "List the plans in a directory");
  list->add_option("--dir", plan_dir);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*toy_lang) {
      write_file(out, toy_language_to_json(default_toy_language()));
    } else if (*toy_rules) {
      write_file(out, ruleset_to_json(make_toy_ruleset(language_or_default(language))));
    } else if (*toy_corpus) {
      write_corpus(generate_toy_corpus(language_or_default(language), size), out, parse_corpus_format(format));
    } else if (*train_cmd) {
      return cmd_train(ta);
    } else if (*translate) {
      return cmd_translate(ckpt, input, max_len);
    } else if (*evaluate) {
      return cmd_evaluate(hyp, ref, metrics, iterations, seed);
    } else if (*violate) {
      return cmd_violate(corpus, rules, k_min, k_max, seed);
    } else if (*run) {
      return cmd_experiment_run(plan, out);
    } else if (*list) {
      return cmd_list_plans(plan_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

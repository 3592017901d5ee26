// Command-line front end: prepare, stats, train, eval, sweep, gradcheck, synth.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 failed check.

#include "mrsr/analytics.hpp"
#include "mrsr/corpus.hpp"
#include "mrsr/evaluator.hpp"
#include "mrsr/gradcheck.hpp"
#include "mrsr/kvfile.hpp"
#include "mrsr/relstore.hpp"
#include "mrsr/synth.hpp"
#include "mrsr/trainer.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mrsr;

namespace {

constexpr const char* kVersion = "1.0.0";

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kCheckFailed = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int default_threads() {
  if (const char* env = std::getenv("MRSR_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring MRSR_THREADS='" << env << "'\n";
  }
  return 1;
}

/// Values from `--config` (if any) overridden by repeated `--set key=value`.
/// Bookkeeping keys of a run.kv manifest are skipped, so a manifest can be
/// passed straight back as the config of the same command.
KeyValues resolve_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  KeyValues values = config_path.empty() ? KeyValues{} : read_kv(config_path);
  for (const char* key : {"command", "mrsr_version", "eigen_version", "data"}) values.erase(key);
  for (const auto& entry : overrides) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + entry + "'");
    values[trim(entry.substr(0, eq))] = trim(entry.substr(eq + 1));
  }
  return values;
}

/// Configuration problems are usage errors, not data errors.
template <typename Fn>
auto parse_config(Fn&& fn) {
  try {
    return fn();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

/// Manifest written next to every command's outputs.
void write_manifest(const fs::path& dir, const std::string& command, KeyValues resolved) {
  resolved["command"] = command;
  resolved["mrsr_version"] = kVersion;
  resolved["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION);
  write_kv(dir / "run.kv", resolved);
}

void ensure_dir(const std::string& dir) {
  if (dir.empty()) throw UsageError("output directory must not be empty");
  fs::create_directories(dir);
}

nlohmann::ordered_json metrics_json(const MetricMeans& m) {
  nlohmann::ordered_json j;
  j["users"] = m.users;
  j["recall@5"] = m.recall5;
  j["recall@10"] = m.recall10;
  j["ndcg@5"] = m.ndcg5;
  j["ndcg@10"] = m.ndcg10;
  j["mrr"] = m.mrr;
  return j;
}

KeyValues metrics_kv(const std::string& prefix, const MetricMeans& m) {
  return {{prefix + "users", std::to_string(m.users)},      {prefix + "recall@5", format_double(m.recall5)},
          {prefix + "recall@10", format_double(m.recall10)}, {prefix + "ndcg@5", format_double(m.ndcg5)},
          {prefix + "ndcg@10", format_double(m.ndcg10)},     {prefix + "mrr", format_double(m.mrr)}};
}

std::vector<std::size_t> parse_edges(const std::string& text) {
  if (text.empty()) return default_bucket_edges();
  std::vector<std::size_t> edges;
  for (const auto& part : split(text, ',')) {
    const std::string value = trim(part);
    if (value.empty()) continue;
    try {
      std::size_t used = 0;
      const long long n = std::stoll(value, &used);
      if (used != value.size() || n < 0) throw std::invalid_argument(value);
      edges.push_back(static_cast<std::size_t>(n));
    } catch (const std::exception&) {
      throw UsageError("--edges: '" + value + "' is not a non-negative integer");
    }
  }
  return edges;
}

// ---- prepare -----------------------------------------------------------------

struct PrepareArgs {
  std::string interactions;
  std::string relations;
  std::string out;
  int max_len = 50;
  std::size_t min_count = 5;
  std::uint64_t seed = 0;
};

int run_prepare(const PrepareArgs& args) {
  const auto records = five_core_filter(load_interactions(args.interactions), args.min_count);
  const InteractionCorpus corpus = build_corpus(records, args.max_len, args.seed);

  RelationStore store({}, corpus.num_items());
  if (args.relations.empty()) {
    std::cerr << "warning: no relations file given; relation store is empty\n";
  } else if (!fs::exists(args.relations)) {
    std::cerr << "warning: relations file " << args.relations << " not found; relation store is empty\n";
  } else {
    store = load_relations(args.relations, corpus);
  }

  ensure_dir(args.out);
  save_corpus(corpus, args.out);
  save_relations(store, corpus, args.out);

  const double users = corpus.num_users();
  const double items = corpus.num_items();
  const double ratings = static_cast<double>(corpus.num_interactions());
  KeyValues report{{"users", std::to_string(corpus.num_users())},
                   {"items", std::to_string(corpus.num_items())},
                   {"ratings", std::to_string(corpus.num_interactions())},
                   {"density", format_double(ratings / (users * items))},
                   {"avg_ratings_per_user", format_double(ratings / users)},
                   {"avg_ratings_per_item", format_double(ratings / items)},
                   {"related_pairs", std::to_string(store.total_pairs())},
                   {"avg_pairs_per_item", format_double(static_cast<double>(store.total_pairs()) / items)},
                   {"relations", std::to_string(store.num_relations())},
                   {"dropped_unknown", std::to_string(store.dropped_unknown)},
                   {"dropped_self_loops", std::to_string(store.dropped_self_loops)},
                   {"dropped_duplicates", std::to_string(store.dropped_duplicates)}};
  write_kv(fs::path(args.out) / "prepare_report.kv", report);
  write_manifest(args.out, "prepare",
                 {{"interactions", args.interactions},
                  {"relations", args.relations},
                  {"max_len", std::to_string(args.max_len)},
                  {"min_count", std::to_string(args.min_count)},
                  {"seed", std::to_string(args.seed)}});
  std::cout << format_kv(report);
  return kOk;
}

// ---- stats ---------------------------------------------------------------------

struct StatsArgs {
  std::string data;
  std::string out;
  bool symmetrize = false;
  int max_order = 0;
};

int run_stats(const StatsArgs& args) {
  if (args.max_order < 0) throw UsageError("--max-order must be >= 0");
  const InteractionCorpus corpus = load_corpus(args.data);
  const RelationStore store = load_relation_dir(args.data, corpus);
  const StatsReport report = compute_stats(corpus, store, {args.symmetrize, args.max_order});
  const KeyValues kv = report.to_kv();
  std::cout << format_kv(kv);
  if (!args.out.empty()) {
    ensure_dir(args.out);
    write_kv(fs::path(args.out) / "stats.kv", kv);
    write_manifest(args.out, "stats",
                   {{"data", args.data},
                    {"symmetrize", args.symmetrize ? "true" : "false"},
                    {"max_order", std::to_string(args.max_order)}});
  }
  return kOk;
}

// ---- train ---------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<int> threads;
  bool quiet = false;
};

HyperParams resolve_hyper(const std::string& config, const std::vector<std::string>& overrides,
                          std::optional<int> threads) {
  KeyValues values = resolve_config(config, overrides);
  if (threads) values["threads"] = std::to_string(*threads);
  else if (!values.contains("threads")) values["threads"] = std::to_string(default_threads());
  HyperParams hyper = parse_config([&] { return HyperParams::from_kv(values); });
  hyper.validate();
  return hyper;
}

int run_train(const TrainArgs& args) {
  const HyperParams hyper = resolve_hyper(args.config, args.overrides, args.threads);
  const InteractionCorpus corpus = load_corpus(args.data);
  const RelationStore store = load_relation_dir(args.data, corpus);
  ensure_dir(args.out);
  const fs::path out(args.out);

  FitOptions options;
  if (!args.quiet) {
    options.on_epoch = [](const EpochRecord& e) {
      std::cerr << "epoch " << e.epoch << " loss " << e.loss.total << " valid_mrr " << e.valid_mrr << " ("
                << e.wall_seconds << " s)\n";
    };
  }
  const FitResult result = fit(corpus, store, hyper, options);

  save_checkpoint(result.best, out / "checkpoint.bin");
  write_text(out / "train_log.jsonl", result.log.to_jsonl());
  write_text(out / "timing.tsv", result.log.timing_tsv());
  KeyValues metrics = metrics_kv("valid_", result.best_valid);
  metrics.merge(metrics_kv("test_", result.test));
  metrics["best_epoch"] = std::to_string(result.log.best_epoch);
  metrics["epochs_run"] = std::to_string(result.log.epochs.size());
  metrics["stopped_early"] = result.stopped_early ? "true" : "false";
  write_kv(out / "metrics.kv", metrics);
  KeyValues manifest = hyper.to_kv();
  manifest["data"] = args.data;
  write_manifest(out, "train", manifest);

  nlohmann::ordered_json summary;
  summary["best_epoch"] = result.log.best_epoch;
  summary["valid"] = metrics_json(result.best_valid);
  summary["test"] = metrics_json(result.test);
  std::cout << summary.dump() << '\n';
  return kOk;
}

// ---- eval ------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string breakdown;
  std::string edges;
  std::string out;
  bool filter_seen = false;
  std::optional<int> threads;
};

int run_eval(const EvalArgs& args) {
  const EvalSplit split = args.split == "valid" ? EvalSplit::valid : EvalSplit::test;
  std::optional<BreakdownAxis> axis;
  if (args.breakdown == "seq_length") axis = BreakdownAxis::seq_length;
  else if (args.breakdown == "item_popularity") axis = BreakdownAxis::item_popularity;
  const auto edges = parse_edges(args.edges);

  const Checkpoint checkpoint = load_checkpoint(args.checkpoint);
  const InteractionCorpus corpus = load_corpus(args.data);
  if (checkpoint.num_items != corpus.num_items())
    throw DataError("checkpoint was trained on " + std::to_string(checkpoint.num_items) + " items, corpus has " +
                    std::to_string(corpus.num_items()));

  const RankingReport report = evaluate(checkpoint.params, checkpoint.hyper, corpus, split,
                                        {args.filter_seen, args.threads.value_or(default_threads())});
  nlohmann::ordered_json line;
  line["split"] = args.split;
  line["filter_seen"] = args.filter_seen;
  line["metrics"] = metrics_json(report.overall);
  std::cout << line.dump() << '\n';

  std::string csv;
  if (axis) {
    csv = breakdown_csv(breakdown(report, corpus, *axis, edges));
    if (args.out.empty()) std::cout << csv;
  }
  if (!args.out.empty()) {
    ensure_dir(args.out);
    const fs::path out(args.out);
    write_kv(out / "eval.kv", report.to_kv());
    if (axis) write_text(out / ("breakdown_" + args.breakdown + ".csv"), csv);
    write_manifest(out, "eval",
                   {{"checkpoint", args.checkpoint},
                    {"data", args.data},
                    {"split", args.split},
                    {"filter_seen", args.filter_seen ? "true" : "false"},
                    {"breakdown", args.breakdown},
                    {"edges", args.edges}});
  }
  return kOk;
}

// ---- sweep -----------------------------------------------------------------------

struct SweepArgs {
  std::string data;
  std::string grid;
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<int> threads;
};

int run_sweep(const SweepArgs& args) {
  const HyperParams base = resolve_hyper(args.config, args.overrides, args.threads);
  const KeyValues grid_values = read_kv(args.grid);
  const SweepGrid grid = parse_config([&] { return SweepGrid::parse(grid_values); });
  const InteractionCorpus corpus = load_corpus(args.data);
  const RelationStore store = load_relation_dir(args.data, corpus);
  ensure_dir(args.out);
  const fs::path out(args.out);

  const auto rows = sweep(corpus, store, base, grid);
  const std::string table = sweep_table(rows);
  write_text(out / "sweep.tsv", table);
  std::string jsonl;
  for (const auto& row : rows) {
    nlohmann::ordered_json line;
    line["setting"] = row.setting;
    line["valid_mrr"] = row.valid_mrr;
    line["test"] = metrics_json(row.test);
    line["best_epoch"] = row.best_epoch;
    if (!row.error.empty()) line["error"] = row.error;
    jsonl += line.dump() + "\n";
  }
  write_text(out / "sweep.jsonl", jsonl);
  KeyValues manifest = base.to_kv();
  manifest["data"] = args.data;
  for (const auto& [key, values] : grid.axes) {
    std::string joined;
    for (const auto& v : values) joined += (joined.empty() ? "" : ",") + v;
    manifest["grid." + key] = joined;
  }
  write_manifest(out, "sweep", manifest);
  std::cout << table;
  return kOk;
}

// ---- gradcheck -------------------------------------------------------------------

struct GradCheckArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::size_t> coords;
  std::string out;
};

int run_gradcheck_command(const GradCheckArgs& args) {
  KeyValues values = resolve_config(args.config, args.overrides);
  if (args.coords) values["coords"] = std::to_string(*args.coords);
  const GradCheckSpec spec = parse_config([&] { return GradCheckSpec::from_kv(values); });
  const GradCheckReport report = run_gradcheck(spec);
  const double tolerance = 1e-4;
  const bool pass = report.result.max_rel_error < tolerance;

  nlohmann::ordered_json line;
  line["max_rel_err"] = report.result.max_rel_error;
  line["tolerance"] = tolerance;
  line["worst"] = report.worst_parameter;
  line["coordinates"] = report.result.coordinates;
  line["parameters"] = report.parameters;
  line["loss"] = report.loss;
  line["pass"] = pass;
  std::cout << line.dump() << '\n';
  std::cout << "max_rel_err " << (pass ? "< " : ">= ") << "1e-4\n";
  if (!args.out.empty()) {
    ensure_dir(args.out);
    write_text(fs::path(args.out) / "gradcheck.json", line.dump() + "\n");
    write_manifest(args.out, "gradcheck", spec.to_kv());
  }
  return pass ? kOk : kCheckFailed;
}

// ---- synth -----------------------------------------------------------------------

struct SynthArgs {
  std::string spec;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int run_synth(const SynthArgs& args) {
  KeyValues values = resolve_config(args.spec, args.overrides);
  std::uint64_t seed = args.seed.value_or(0);
  if (const auto it = values.find("seed"); it != values.end()) {
    if (!args.seed) {
      try {
        seed = std::stoull(it->second);
      } catch (const std::exception&) {
        throw UsageError("synth spec: seed='" + it->second + "' is not an integer");
      }
    }
    values.erase(it);
  }
  const SynthSpec spec = parse_config([&] { return SynthSpec::from_kv(values); });
  const SyntheticData data = generate_synthetic(spec, seed);
  ensure_dir(args.out);
  save_corpus(data.corpus, args.out);
  save_relations(data.relations, data.corpus, args.out);
  KeyValues manifest = spec.to_kv();
  manifest["seed"] = std::to_string(seed);
  write_manifest(args.out, "synth", manifest);
  std::cout << "users=" << data.corpus.num_users() << "\nitems=" << data.corpus.num_items()
            << "\ninteractions=" << data.corpus.num_interactions()
            << "\nrelated_pairs=" << data.relations.total_pairs() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-relational sequential recommendation toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  PrepareArgs prepare;
  auto* prepare_cmd = app.add_subcommand("prepare", "Build a corpus directory from raw interactions and relations");
  prepare_cmd->add_option("--interactions", prepare.interactions, "user<TAB>item<TAB>timestamp file")
      ->required()
      ->check(CLI::ExistingFile);
  prepare_cmd->add_option("--relations", prepare.relations, "head<TAB>relation<TAB>tail file (optional)");
  prepare_cmd->add_option("--max-len", prepare.max_len, "Maximum sequence length L")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  prepare_cmd->add_option("--min-count", prepare.min_count, "Minimum interactions per user")->capture_default_str();
  prepare_cmd->add_option("--seed", prepare.seed, "Seed recorded in the corpus")->capture_default_str();
  prepare_cmd->add_option("--out", prepare.out, "Output directory")->required();

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Transition hit ratios and intra-sequence relation coverage");
  stats_cmd->add_option("--data", stats.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  stats_cmd->add_flag("--symmetrize", stats.symmetrize, "Treat relation pairs as undirected");
  stats_cmd->add_option("--max-order", stats.max_order, "Largest transition order pooled (0 = all)")
      ->capture_default_str();
  stats_cmd->add_option("--out", stats.out, "Also write stats.kv and run.kv here");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Fit a model with early stopping");
  train_cmd->add_option("--data", train.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--config", train.config, "key=value hyperparameter file")->check(CLI::ExistingFile);
  train_cmd->add_option("--set", train.overrides, "Override one hyperparameter (key=value), repeatable");
  train_cmd->add_option("--threads", train.threads, "Evaluation threads (default: MRSR_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_flag("--quiet", train.quiet, "No per-epoch progress on stderr");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Full-catalog ranking metrics of a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--split", eval.split, "valid or test")
      ->capture_default_str()
      ->check(CLI::IsMember({"valid", "test"}));
  eval_cmd->add_flag("--filter-seen", eval.filter_seen, "Exclude history items from the candidates");
  eval_cmd->add_option("--breakdown", eval.breakdown, "seq_length or item_popularity")
      ->check(CLI::IsMember({"seq_length", "item_popularity"}));
  eval_cmd->add_option("--edges", eval.edges, "Comma-separated inclusive bucket upper bounds (default 5,10,20)");
  eval_cmd->add_option("--threads", eval.threads, "Evaluation threads (default: MRSR_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", eval.out, "Also write eval.kv, breakdown CSV and run.kv here");

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train every point of a hyperparameter grid");
  sweep_cmd->add_option("--data", sweep_args.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  sweep_cmd->add_option("--grid", sweep_args.grid, "key=v1,v2,... file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--config", sweep_args.config, "Base hyperparameters")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--set", sweep_args.overrides, "Override one base hyperparameter (key=value), repeatable");
  sweep_cmd->add_option("--threads", sweep_args.threads, "Evaluation threads (default: MRSR_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--out", sweep_args.out, "Output directory")->required();

  GradCheckArgs gradcheck;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference loss gradients");
  gradcheck_cmd->add_option("--config", gradcheck.config, "key=value problem description")->check(CLI::ExistingFile);
  gradcheck_cmd->add_option("--set", gradcheck.overrides, "Override one key (key=value), repeatable");
  gradcheck_cmd->add_option("--coords", gradcheck.coords, "Sampled coordinates (0 = all)");
  gradcheck_cmd->add_option("--out", gradcheck.out, "Also write gradcheck.json and run.kv here");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus directory");
  synth_cmd->add_option("--spec", synth.spec, "key=value synthetic spec")->check(CLI::ExistingFile);
  synth_cmd->add_option("--set", synth.overrides, "Override one spec key (key=value), repeatable");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed (default: seed key of --spec, else 0)");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*prepare_cmd) return run_prepare(prepare);
    if (*stats_cmd) return run_stats(stats);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval);
    if (*sweep_cmd) return run_sweep(sweep_args);
    if (*gradcheck_cmd) return run_gradcheck_command(gradcheck);
    if (*synth_cmd) return run_synth(synth);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

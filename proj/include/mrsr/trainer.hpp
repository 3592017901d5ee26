#pragma once

#include "mrsr/corpus.hpp"
#include "mrsr/evaluator.hpp"
#include "mrsr/losses.hpp"
#include "mrsr/model.hpp"
#include "mrsr/relstore.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mrsr {

/// Adam moments, shaped like the parameters.
struct OptimState {
  ModelParams first_moment;
  ModelParams second_moment;
  std::int64_t step = 0;

  static OptimState zeros_for(const ModelParams& params);
  bool operator==(const OptimState&) const = default;
};

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update, then re-pins the padding embedding row.
void adam_step(ModelParams& params, const Gradients& grads, OptimState& state, double lr, const AdamSettings& adam = {});

/// Everything needed to resume or evaluate a run.
struct Checkpoint {
  HyperParams hyper;
  ItemIndex num_items = 0;
  std::vector<std::string> relation_names;
  ModelParams params;
  OptimState optimizer;
  int epoch = 0;
  double valid_mrr = 0.0;
};

/// Tagged binary container, little-endian doubles.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;  // averaged per batch
  double valid_mrr = 0.0;
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;

  /// One JSON object per epoch. Wall time is left out so logs of identical
  /// runs compare byte-for-byte; timing_tsv() carries it instead.
  [[nodiscard]] std::string to_jsonl() const;
  [[nodiscard]] std::string timing_tsv() const;
};

/// One pass over all users in an epoch-seeded shuffled order.
EpochRecord train_epoch(const InteractionCorpus& corpus, const RelationStore& store, ModelParams& params,
                        OptimState& state, const HyperParams& hyper, Rng& rng);

/// Returns the validation score of a parameter set; higher is better.
using Validator = std::function<double(const ModelParams&)>;

struct FitResult {
  Checkpoint best;
  TrainLog log;
  MetricMeans best_valid;
  MetricMeans test;
  bool stopped_early = false;
};

struct FitOptions {
  /// Defaults to validation MRR under full-catalog ranking.
  Validator validator;
  /// Called after every epoch (for streaming logs); may be empty.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains until `patience` epochs pass without a strictly better validation
/// score or `max_epochs` is reached, then reports test metrics of the best epoch.
FitResult fit(const InteractionCorpus& corpus, const RelationStore& store, const HyperParams& hyper,
              const FitOptions& options = {});

/// Cartesian grid of hyperparameter values (key -> candidate strings).
struct SweepGrid {
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;

  /// `key=v1,v2,...` lines.
  static SweepGrid parse(const KeyValues& values);
  [[nodiscard]] std::vector<KeyValues> points() const;
};

struct SweepRow {
  KeyValues setting;
  double valid_mrr = 0.0;
  MetricMeans test;
  int best_epoch = -1;
  std::string error;  // non-empty when the run failed
};

/// Runs fit at every grid point; failures are recorded and the sweep continues.
/// Rows come back sorted by validation MRR, best first (failed runs last).
std::vector<SweepRow> sweep(const InteractionCorpus& corpus, const RelationStore& store, const HyperParams& base,
                            const SweepGrid& grid);
std::string sweep_table(std::span<const SweepRow> rows);

}  // namespace mrsr

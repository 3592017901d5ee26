#pragma once

#include "mrsr/corpus.hpp"
#include "mrsr/kvfile.hpp"
#include "mrsr/model.hpp"

#include <span>
#include <string>
#include <vector>

namespace mrsr {

/// 1-based rank of `target` among items 1..|V|: one plus the number of items
/// scoring strictly higher, plus tied items with a smaller index.
std::size_t rank_of_target(std::span<const double> scores, ItemIndex target);

inline double recall_at(std::size_t rank, std::size_t n) { return rank <= n ? 1.0 : 0.0; }
double ndcg_at(std::size_t rank, std::size_t n);
inline double mrr_of(std::size_t rank) { return 1.0 / static_cast<double>(rank); }

struct MetricMeans {
  double recall5 = 0.0;
  double recall10 = 0.0;
  double ndcg5 = 0.0;
  double ndcg10 = 0.0;
  double mrr = 0.0;
  std::size_t users = 0;

  bool operator==(const MetricMeans&) const = default;
};

/// Means of the five metrics over a set of ranks. Throws DataError when empty.
MetricMeans summarize_ranks(std::span<const std::size_t> ranks);

enum class EvalSplit { valid, test };

/// Per-user outcome kept for bucketed breakdowns.
struct UserRank {
  UserIndex user = 0;
  ItemIndex target = kPaddingItem;
  std::size_t rank = 0;
  std::size_t history_length = 0;  // training-prefix length
};

struct RankingReport {
  MetricMeans overall;
  std::vector<UserRank> per_user;

  [[nodiscard]] KeyValues to_kv() const;
};

struct EvalOptions {
  bool filter_seen = false;
  int threads = 1;
};

/// Model input for a user: train prefix (valid split) or train prefix + valid item (test split).
std::vector<ItemIndex> evaluation_history(const InteractionCorpus& corpus, UserIndex user, EvalSplit split);

/// Full-catalog ranking of every user's held-out item, dropout disabled.
RankingReport evaluate(const ModelParams& params, const HyperParams& hyper, const InteractionCorpus& corpus,
                       EvalSplit split, const EvalOptions& options = {});

/// Score vector for one user's history (the row consumed by rank_of_target).
Vector score_history(const ModelParams& params, const HyperParams& hyper, std::span<const ItemIndex> history);

enum class BreakdownAxis { seq_length, item_popularity };

struct Bucket {
  std::string label;
  MetricMeans metrics;  // metrics.users == 0 for an empty bucket (all means 0)
};

/// Default edges {5, 10, 20}: buckets <=5, 6-10, 11-20, >20.
std::vector<std::size_t> default_bucket_edges();

/// Users grouped by training-prefix length or by the training popularity of
/// their target item. `edges` are inclusive upper bounds, strictly increasing.
std::vector<Bucket> breakdown(const RankingReport& report, const InteractionCorpus& corpus, BreakdownAxis axis,
                              std::span<const std::size_t> edges);

std::string breakdown_csv(std::span<const Bucket> buckets);

}  // namespace mrsr

#include "mrsr/analytics.hpp"

#include <unordered_set>
#include <vector>

namespace mrsr {
namespace {

std::uint64_t pair_key(ItemIndex a, ItemIndex b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

/// Ordered training pairs at distance in [min_gap, max_gap]; max_gap 0 = unbounded.
std::unordered_set<std::uint64_t> training_pairs(const InteractionCorpus& corpus, std::size_t min_gap,
                                                 std::size_t max_gap) {
  std::unordered_set<std::uint64_t> pairs;
  for (UserIndex u = 1; u <= corpus.num_users(); ++u) {
    const auto train = corpus.split(u).train;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const std::size_t last = max_gap == 0 ? train.size() - 1 : std::min(train.size() - 1, i + max_gap);
      for (std::size_t j = i + min_gap; j <= last; ++j) pairs.insert(pair_key(train[i], train[j]));
    }
  }
  return pairs;
}

double held_out_hit_fraction(const InteractionCorpus& corpus, const std::unordered_set<std::uint64_t>& pairs) {
  if (corpus.num_users() == 0) return 0.0;
  std::size_t hits = 0;
  for (UserIndex u = 1; u <= corpus.num_users(); ++u) {
    const auto s = corpus.split(u);
    hits += pairs.contains(pair_key(s.valid, s.test)) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(corpus.num_users());
}

}  // namespace

double transition_hit_ratio(const InteractionCorpus& corpus, int order) {
  require(order >= 1, "transition_hit_ratio: order must be at least 1");
  const auto k = static_cast<std::size_t>(order);
  return held_out_hit_fraction(corpus, training_pairs(corpus, k, k));
}

double total_transition_hit_ratio(const InteractionCorpus& corpus, int max_order) {
  require(max_order >= 0, "total_transition_hit_ratio: max_order must be non-negative");
  return held_out_hit_fraction(corpus, training_pairs(corpus, 1, static_cast<std::size_t>(max_order)));
}

double related_pair_hit_ratio(const InteractionCorpus& corpus, const RelationStore& store, bool symmetrize) {
  if (corpus.num_users() == 0) return 0.0;
  std::size_t hits = 0;
  for (UserIndex u = 1; u <= corpus.num_users(); ++u) {
    const auto s = corpus.split(u);
    const bool related = store.contains_any(s.valid, s.test) || (symmetrize && store.contains_any(s.test, s.valid));
    hits += related ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(corpus.num_users());
}

double intra_coverage(std::span<const std::span<const ItemIndex>> sequences, const RelationStore& store,
                      bool symmetrize) {
  if (sequences.empty()) return 0.0;
  double total = 0.0;
  std::unordered_set<ItemIndex> distinct;
  std::unordered_set<std::uint64_t> hits;
  for (const auto seq : sequences) {
    if (seq.empty()) continue;
    distinct.clear();
    hits.clear();
    distinct.insert(seq.begin(), seq.end());
    for (ItemIndex head : distinct) {
      for (RelationIndex r = 0; r < store.num_relations(); ++r) {
        for (ItemIndex tail : store.neighbors(head, r)) {
          if (!distinct.contains(tail)) continue;
          hits.insert(pair_key(head, tail));
          if (symmetrize) hits.insert(pair_key(tail, head));
        }
      }
    }
    const auto n = static_cast<double>(seq.size());
    total += static_cast<double>(hits.size()) / (n * n);
  }
  return total / static_cast<double>(sequences.size());
}

double intra_coverage(const InteractionCorpus& corpus, const RelationStore& store, bool symmetrize) {
  std::vector<std::span<const ItemIndex>> sequences;
  sequences.reserve(static_cast<std::size_t>(corpus.num_users()));
  for (UserIndex u = 1; u <= corpus.num_users(); ++u) sequences.push_back(corpus.sequence(u));
  return intra_coverage(sequences, store, symmetrize);
}

StatsReport compute_stats(const InteractionCorpus& corpus, const RelationStore& store, const StatsOptions& options) {
  StatsReport report;
  report.users = static_cast<std::size_t>(corpus.num_users());
  report.hit_ratio_order1 = transition_hit_ratio(corpus, 1);
  report.hit_ratio_order2 = transition_hit_ratio(corpus, 2);
  report.hit_ratio_order3 = transition_hit_ratio(corpus, 3);
  report.total_transition_hit_ratio = total_transition_hit_ratio(corpus, options.max_order);
  report.related_pair_hit_ratio = related_pair_hit_ratio(corpus, store, options.symmetrize);
  report.intra_coverage = intra_coverage(corpus, store, options.symmetrize);
  return report;
}

KeyValues StatsReport::to_kv() const {
  return {{"users", std::to_string(users)},
          {"hr_order1", format_double(hit_ratio_order1)},
          {"hr_order2", format_double(hit_ratio_order2)},
          {"hr_order3", format_double(hit_ratio_order3)},
          {"hr_total", format_double(total_transition_hit_ratio)},
          {"hr_related_pairs", format_double(related_pair_hit_ratio)},
          {"intra_coverage", format_double(intra_coverage)}};
}

}  // namespace mrsr

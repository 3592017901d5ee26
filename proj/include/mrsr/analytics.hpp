#pragma once

// Corpus statistics that motivate relation-aware attention: how often a
// user's held-out (validation, test) transition was already observed in
// training sequences, and how dense relation pairs are inside sequences.

#include "mrsr/corpus.hpp"
#include "mrsr/kvfile.hpp"
#include "mrsr/relstore.hpp"

#include <span>
#include <string>

namespace mrsr {

struct StatsOptions {
  bool symmetrize = false;
  /// Largest transition distance pooled into the total hit ratio; 0 = unlimited.
  int max_order = 0;
};

struct StatsReport {
  double hit_ratio_order1 = 0.0;
  double hit_ratio_order2 = 0.0;
  double hit_ratio_order3 = 0.0;
  double total_transition_hit_ratio = 0.0;
  double related_pair_hit_ratio = 0.0;
  double intra_coverage = 0.0;
  std::size_t users = 0;

  [[nodiscard]] KeyValues to_kv() const;
};

/// Fraction of users whose (valid, test) pair occurs as (s_t, s_{t+k}) in any
/// user's training prefix.
double transition_hit_ratio(const InteractionCorpus& corpus, int order);
/// Same, pooled over every order 1..max_order (0 = all orders).
double total_transition_hit_ratio(const InteractionCorpus& corpus, int max_order = 0);
/// Fraction of users whose (valid, test) pair is a relation pair in any relation.
double related_pair_hit_ratio(const InteractionCorpus& corpus, const RelationStore& store, bool symmetrize = false);
/// Mean over users of |I ∩ (S × S)| / |S|^2 on full sequences.
double intra_coverage(const InteractionCorpus& corpus, const RelationStore& store, bool symmetrize = false);
double intra_coverage(std::span<const std::span<const ItemIndex>> sequences, const RelationStore& store,
                      bool symmetrize = false);

StatsReport compute_stats(const InteractionCorpus& corpus, const RelationStore& store, const StatsOptions& options = {});

}  // namespace mrsr

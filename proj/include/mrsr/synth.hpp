#pragma once

#include "mrsr/corpus.hpp"
#include "mrsr/kvfile.hpp"
#include "mrsr/relstore.hpp"

#include <cstdint>

namespace mrsr {

enum class RelationGraph {
  random,  // every relation: `out_degree` distinct random tails per item
  cycle,   // relation 0 holds i -> i+1 (mod |V|); other relations stay empty
};

/// Desk-scale testbed description. Sequence lengths are uniform in
/// [min_length, max_length]; with probability `p_relation` the next item is a
/// uniformly chosen relation neighbor of the previous one, otherwise a uniform item.
struct SynthSpec {
  int users = 20;
  int items = 15;
  int relations = 2;
  int min_length = 5;
  int max_length = 10;
  int out_degree = 2;
  double p_relation = 0.0;
  RelationGraph graph = RelationGraph::random;
  int max_len = 20;  // L recorded in the corpus

  static SynthSpec from_kv(const KeyValues& values);
  [[nodiscard]] KeyValues to_kv() const;
};

struct SyntheticData {
  InteractionCorpus corpus;
  RelationStore relations;
};

/// Deterministic in (spec, seed). Throws DataError on an infeasible spec.
SyntheticData generate_synthetic(const SynthSpec& spec, std::uint64_t seed);

}  // namespace mrsr

#pragma once

#include "mrsr/corpus.hpp"
#include "mrsr/tape.hpp"
#include "mrsr/types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace mrsr {

struct RelationTriple {
  ItemIndex head = kPaddingItem;
  RelationIndex relation = 0;
  ItemIndex tail = kPaddingItem;
};

/// Thrown when every item is already related to the head, so no negative exists.
class DegenerateRelation : public DataError {
 public:
  using DataError::DataError;
};

/// Per-relation sets of ordered (head, tail) item pairs. Pairs keep insertion
/// order for enumeration; duplicates and self-loops are rejected on insert.
class RelationStore {
 public:
  using Pair = std::pair<ItemIndex, ItemIndex>;

  RelationStore() = default;
  RelationStore(std::vector<std::string> relation_names, ItemIndex num_items);

  /// Returns the index of `name`, registering it if new.
  RelationIndex add_relation(const std::string& name);
  /// False when the pair was already present or is a self-loop.
  bool insert(ItemIndex head, RelationIndex relation, ItemIndex tail);

  [[nodiscard]] RelationIndex num_relations() const { return static_cast<RelationIndex>(names_.size()); }
  [[nodiscard]] ItemIndex num_items() const { return num_items_; }
  [[nodiscard]] const std::string& relation_name(RelationIndex r) const { return names_.at(static_cast<std::size_t>(r)); }
  [[nodiscard]] const std::vector<std::string>& relation_names() const { return names_; }
  [[nodiscard]] std::size_t total_pairs() const;

  [[nodiscard]] bool contains(ItemIndex head, RelationIndex relation, ItemIndex tail) const;
  /// True when (head, tail) is in any relation.
  [[nodiscard]] bool contains_any(ItemIndex head, ItemIndex tail) const;
  /// All pairs of one relation in insertion order.
  [[nodiscard]] std::span<const Pair> pairs(RelationIndex relation) const;
  /// I_{head, relation}: tails related to `head`, insertion order.
  [[nodiscard]] std::span<const ItemIndex> neighbors(ItemIndex head, RelationIndex relation) const;

  /// Uniform draw from all items except padding, `head`, and neighbors(head, relation).
  /// Throws DegenerateRelation if that set is empty.
  ItemIndex sample_negative(ItemIndex head, RelationIndex relation, Rng& rng) const;

  // load diagnostics
  std::size_t dropped_unknown = 0;
  std::size_t dropped_self_loops = 0;
  std::size_t dropped_duplicates = 0;

 private:
  [[nodiscard]] std::uint64_t key(ItemIndex head, ItemIndex tail) const {
    return static_cast<std::uint64_t>(head) * static_cast<std::uint64_t>(num_items_ + 1) +
           static_cast<std::uint64_t>(tail);
  }
  void check_item(ItemIndex v) const;

  std::vector<std::string> names_;
  ItemIndex num_items_ = 0;
  std::vector<std::vector<Pair>> pairs_;
  std::vector<std::unordered_set<std::uint64_t>> members_;
  std::vector<std::vector<std::vector<ItemIndex>>> adjacency_;  // [relation][head]
};

/// Builds a store from `head<TAB>relation<TAB>tail` lines, mapping item ids
/// through the corpus vocabulary. Unknown items and self-loops are dropped and
/// counted; duplicates are merged. `relation_names` pre-seeds the relation order.
RelationStore parse_relations(std::istream& in, const InteractionCorpus& corpus, const std::string& source = "<stream>",
                              std::vector<std::string> relation_names = {});
RelationStore load_relations(const std::filesystem::path& path, const InteractionCorpus& corpus);

/// relation_vocab.tsv + relations.tsv (item ids, reloadable with load_relation_dir).
void save_relations(const RelationStore& store, const InteractionCorpus& corpus, const std::filesystem::path& dir);
/// Empty store (no relations) when relations.tsv is absent.
RelationStore load_relation_dir(const std::filesystem::path& dir, const InteractionCorpus& corpus);

}  // namespace mrsr

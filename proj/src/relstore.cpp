#include "mrsr/relstore.hpp"

#include "mrsr/kvfile.hpp"

#include <fstream>

namespace mrsr {

RelationStore::RelationStore(std::vector<std::string> relation_names, ItemIndex num_items) : num_items_(num_items) {
  require(num_items >= 0, "RelationStore: negative item count");
  for (const auto& name : relation_names) add_relation(name);
}

RelationIndex RelationStore::add_relation(const std::string& name) {
  for (std::size_t r = 0; r < names_.size(); ++r)
    if (names_[r] == name) return static_cast<RelationIndex>(r);
  names_.push_back(name);
  pairs_.emplace_back();
  members_.emplace_back();
  adjacency_.emplace_back(static_cast<std::size_t>(num_items_) + 1);
  return static_cast<RelationIndex>(names_.size() - 1);
}

void RelationStore::check_item(ItemIndex v) const {
  require(v >= 1 && v <= num_items_, "RelationStore: item index out of range");
}

bool RelationStore::insert(ItemIndex head, RelationIndex relation, ItemIndex tail) {
  check_item(head);
  check_item(tail);
  require(relation >= 0 && relation < num_relations(), "RelationStore: relation index out of range");
  if (head == tail) {
    ++dropped_self_loops;
    return false;
  }
  const auto r = static_cast<std::size_t>(relation);
  if (!members_[r].insert(key(head, tail)).second) {
    ++dropped_duplicates;
    return false;
  }
  pairs_[r].emplace_back(head, tail);
  adjacency_[r][static_cast<std::size_t>(head)].push_back(tail);
  return true;
}

std::size_t RelationStore::total_pairs() const {
  std::size_t total = 0;
  for (const auto& p : pairs_) total += p.size();
  return total;
}

bool RelationStore::contains(ItemIndex head, RelationIndex relation, ItemIndex tail) const {
  if (relation < 0 || relation >= num_relations()) return false;
  if (head < 1 || head > num_items_ || tail < 1 || tail > num_items_) return false;
  return members_[static_cast<std::size_t>(relation)].contains(key(head, tail));
}

bool RelationStore::contains_any(ItemIndex head, ItemIndex tail) const {
  for (RelationIndex r = 0; r < num_relations(); ++r)
    if (contains(head, r, tail)) return true;
  return false;
}

std::span<const RelationStore::Pair> RelationStore::pairs(RelationIndex relation) const {
  require(relation >= 0 && relation < num_relations(), "RelationStore::pairs: relation index out of range");
  return pairs_[static_cast<std::size_t>(relation)];
}

std::span<const ItemIndex> RelationStore::neighbors(ItemIndex head, RelationIndex relation) const {
  check_item(head);
  require(relation >= 0 && relation < num_relations(), "RelationStore::neighbors: relation index out of range");
  return adjacency_[static_cast<std::size_t>(relation)][static_cast<std::size_t>(head)];
}

ItemIndex RelationStore::sample_negative(ItemIndex head, RelationIndex relation, Rng& rng) const {
  const auto related = neighbors(head, relation);
  const auto candidates = static_cast<std::size_t>(num_items_) - 1 - related.size();
  if (candidates == 0 || num_items_ < 2)
    throw DegenerateRelation("no negative exists for item " + std::to_string(head) + " under relation " +
                             relation_name(relation));
  std::uniform_int_distribution<ItemIndex> pick(1, num_items_);
  constexpr int kMaxRejections = 64;
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const ItemIndex v = pick(rng);
    if (v != head && !contains(head, relation, v)) return v;
  }
  std::vector<ItemIndex> complement;
  complement.reserve(candidates);
  for (ItemIndex v = 1; v <= num_items_; ++v)
    if (v != head && !contains(head, relation, v)) complement.push_back(v);
  std::uniform_int_distribution<std::size_t> slot(0, complement.size() - 1);
  return complement[slot(rng)];
}

RelationStore parse_relations(std::istream& in, const InteractionCorpus& corpus, const std::string& source,
                              std::vector<std::string> relation_names) {
  RelationStore store(std::move(relation_names), corpus.num_items());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3 || trim(fields[1]).empty())
      throw DataError(source + ": line " + std::to_string(number) + ": expected head<TAB>relation<TAB>tail");
    const RelationIndex r = store.add_relation(trim(fields[1]));
    const auto head = corpus.find_item(trim(fields[0]));
    const auto tail = corpus.find_item(trim(fields[2]));
    if (!head || !tail) {
      ++store.dropped_unknown;
      continue;
    }
    store.insert(*head, r, *tail);
  }
  return store;
}

RelationStore load_relations(const std::filesystem::path& path, const InteractionCorpus& corpus) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open relations file " + path.string());
  return parse_relations(in, corpus, path.string());
}

void save_relations(const RelationStore& store, const InteractionCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream vocab(dir / "relation_vocab.tsv", std::ios::binary);
  std::ofstream triples(dir / "relations.tsv", std::ios::binary);
  if (!vocab || !triples) throw DataError("cannot write relation files in " + dir.string());
  for (RelationIndex r = 0; r < store.num_relations(); ++r) {
    vocab << r << '\t' << store.relation_name(r) << '\n';
    for (const auto& [h, t] : store.pairs(r))
      triples << corpus.item_id(h) << '\t' << store.relation_name(r) << '\t' << corpus.item_id(t) << '\n';
  }
}

RelationStore load_relation_dir(const std::filesystem::path& dir, const InteractionCorpus& corpus) {
  std::vector<std::string> names;
  if (std::ifstream vocab(dir / "relation_vocab.tsv"); vocab) {
    std::string line;
    while (std::getline(vocab, line)) {
      auto fields = split(line, '\t');
      if (fields.size() == 2) names.push_back(fields[1]);
    }
  }
  std::ifstream in(dir / "relations.tsv");
  if (!in) return RelationStore(std::move(names), corpus.num_items());
  return parse_relations(in, corpus, (dir / "relations.tsv").string(), std::move(names));
}

}  // namespace mrsr

#include "mrsr/synth.hpp"

#include <algorithm>
#include <sstream>

namespace mrsr {
namespace {

int to_int(const KeyValues& kv, const std::string& key, int fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stoi(it->second);
}

}  // namespace

SynthSpec SynthSpec::from_kv(const KeyValues& values) {
  static const std::vector<std::string> known = {"users",      "items",      "relations", "min_length", "max_length",
                                                 "out_degree", "p_relation", "graph",     "max_len"};
  for (const auto& [key, value] : values)
    if (std::find(known.begin(), known.end(), key) == known.end()) throw DataError("synth spec: unknown key " + key);
  SynthSpec spec;
  spec.users = to_int(values, "users", spec.users);
  spec.items = to_int(values, "items", spec.items);
  spec.relations = to_int(values, "relations", spec.relations);
  spec.min_length = to_int(values, "min_length", spec.min_length);
  spec.max_length = to_int(values, "max_length", spec.max_length);
  spec.out_degree = to_int(values, "out_degree", spec.out_degree);
  spec.max_len = to_int(values, "max_len", spec.max_len);
  if (auto it = values.find("p_relation"); it != values.end()) spec.p_relation = std::stod(it->second);
  if (auto it = values.find("graph"); it != values.end()) {
    if (it->second == "random") spec.graph = RelationGraph::random;
    else if (it->second == "cycle") spec.graph = RelationGraph::cycle;
    else throw DataError("synth spec: graph must be random or cycle");
  }
  return spec;
}

KeyValues SynthSpec::to_kv() const {
  return {{"users", std::to_string(users)},
          {"items", std::to_string(items)},
          {"relations", std::to_string(relations)},
          {"min_length", std::to_string(min_length)},
          {"max_length", std::to_string(max_length)},
          {"out_degree", std::to_string(out_degree)},
          {"p_relation", format_double(p_relation)},
          {"graph", graph == RelationGraph::cycle ? "cycle" : "random"},
          {"max_len", std::to_string(max_len)}};
}

SyntheticData generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.users < 1 || spec.items < 2) throw DataError("synth spec: need at least 1 user and 2 items");
  if (spec.relations < 0) throw DataError("synth spec: negative relation count");
  if (spec.min_length < 5 || spec.max_length < spec.min_length)
    throw DataError("synth spec: lengths must satisfy 5 <= min_length <= max_length");
  if (spec.p_relation < 0.0 || spec.p_relation > 1.0) throw DataError("synth spec: p_relation must lie in [0, 1]");
  if (spec.out_degree < 0 || spec.out_degree >= spec.items)
    throw DataError("synth spec: out_degree must lie in [0, items)");
  if (spec.max_len < 1) throw DataError("synth spec: max_len must be positive");

  Rng rng(seed);
  const auto item_name = [](int v) { return "i" + std::to_string(v); };

  // Relation graph over raw item numbers 1..items.
  std::vector<std::vector<std::pair<int, int>>> graph(static_cast<std::size_t>(spec.relations));
  std::vector<std::vector<int>> successors(static_cast<std::size_t>(spec.items) + 1);
  if (spec.graph == RelationGraph::cycle) {
    if (spec.relations >= 1)
      for (int v = 1; v <= spec.items; ++v) graph[0].emplace_back(v, v % spec.items + 1);
  } else {
    std::vector<int> others;
    for (int r = 0; r < spec.relations; ++r) {
      for (int v = 1; v <= spec.items; ++v) {
        others.clear();
        for (int t = 1; t <= spec.items; ++t)
          if (t != v) others.push_back(t);
        std::shuffle(others.begin(), others.end(), rng);
        for (int k = 0; k < spec.out_degree; ++k) graph[static_cast<std::size_t>(r)].emplace_back(v, others[static_cast<std::size_t>(k)]);
      }
    }
  }
  std::size_t total_pairs = 0;
  for (const auto& rel : graph) {
    total_pairs += rel.size();
    for (const auto& [h, t] : rel) successors[static_cast<std::size_t>(h)].push_back(t);
  }
  if (spec.p_relation > 0.0 && total_pairs == 0)
    throw DataError("synth spec: p_relation > 0 requires at least one relation pair");

  std::uniform_int_distribution<int> any_item(1, spec.items);
  std::uniform_int_distribution<int> length(spec.min_length, spec.max_length);
  std::bernoulli_distribution follow(spec.p_relation);
  std::vector<Interaction> records;
  for (int u = 1; u <= spec.users; ++u) {
    const int n = length(rng);
    int prev = any_item(rng);
    for (int t = 0; t < n; ++t) {
      int next = prev;
      if (t > 0) {
        const auto& succ = successors[static_cast<std::size_t>(prev)];
        if (!succ.empty() && follow(rng)) {
          std::uniform_int_distribution<std::size_t> pick(0, succ.size() - 1);
          next = succ[pick(rng)];
        } else {
          next = any_item(rng);
        }
      }
      records.push_back({"u" + std::to_string(u), item_name(next), t});
      prev = next;
    }
  }

  InteractionCorpus corpus = build_corpus(records, spec.max_len, seed);
  std::vector<std::string> names;
  for (int r = 0; r < spec.relations; ++r) names.push_back("r" + std::to_string(r));
  RelationStore store(names, corpus.num_items());
  for (std::size_t r = 0; r < graph.size(); ++r) {
    for (const auto& [h, t] : graph[r]) {
      const auto head = corpus.find_item(item_name(h));
      const auto tail = corpus.find_item(item_name(t));
      if (!head || !tail) {
        ++store.dropped_unknown;
        continue;
      }
      store.insert(*head, static_cast<RelationIndex>(r), *tail);
    }
  }
  return {std::move(corpus), std::move(store)};
}

}  // namespace mrsr

#include "mrsr/corpus.hpp"

#include "mrsr/kvfile.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mrsr {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
  if (line.find('\t') != std::string::npos) return split(line, '\t');
  std::vector<std::string> fields;
  std::istringstream in(line);
  std::string field;
  while (in >> field) fields.push_back(field);
  return fields;
}

template <typename Int>
bool parse_int(const std::string& text, Int& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace

std::vector<Interaction> parse_interactions(std::istream& in, const std::string& source) {
  std::vector<Interaction> records;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    const std::string where = source + ": line " + std::to_string(number);
    if (fields.size() != 3) throw DataError(where + ": expected 3 fields (user, item, timestamp)");
    Interaction rec{trim(fields[0]), trim(fields[1]), 0};
    if (rec.user.empty() || rec.item.empty()) throw DataError(where + ": empty user or item id");
    if (!parse_int(trim(fields[2]), rec.timestamp))
      throw DataError(where + ": timestamp '" + fields[2] + "' is not an integer");
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<Interaction> load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interactions file " + path.string());
  return parse_interactions(in, path.string());
}

std::vector<Interaction> five_core_filter(std::span<const Interaction> records, std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& rec : records) ++counts[rec.user];
  std::vector<Interaction> kept;
  kept.reserve(records.size());
  for (const auto& rec : records)
    if (counts[rec.user] >= min_count) kept.push_back(rec);
  return kept;
}

InteractionCorpus::InteractionCorpus(std::vector<std::string> user_ids, std::vector<std::string> item_ids,
                                     std::vector<std::vector<ItemIndex>> sequences, int max_len, std::uint64_t seed)
    : user_ids_(std::move(user_ids)),
      item_ids_(std::move(item_ids)),
      sequences_(std::move(sequences)),
      max_len_(max_len),
      seed_(seed) {
  require(user_ids_.size() == sequences_.size(), "InteractionCorpus: one sequence per user");
  require(max_len_ >= 1, "InteractionCorpus: max_len must be positive");
  for (std::size_t i = 0; i < item_ids_.size(); ++i) {
    if (!item_lookup_.emplace(item_ids_[i], static_cast<ItemIndex>(i + 1)).second)
      throw DataError("duplicate item id " + item_ids_[i]);
  }
  for (std::size_t u = 0; u < user_ids_.size(); ++u) {
    if (!user_lookup_.emplace(user_ids_[u], static_cast<UserIndex>(u + 1)).second)
      throw DataError("duplicate user id " + user_ids_[u]);
    const auto& seq = sequences_[u];
    if (seq.size() < 3)
      throw DataError("user " + user_ids_[u] + " has " + std::to_string(seq.size()) +
                      " interactions; leave-one-out needs at least 3");
    for (ItemIndex v : seq)
      if (v < 1 || v > num_items()) throw DataError("user " + user_ids_[u] + " references item index out of range");
    interactions_ += seq.size();
  }
}

std::optional<ItemIndex> InteractionCorpus::find_item(const std::string& id) const {
  auto it = item_lookup_.find(id);
  if (it == item_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<UserIndex> InteractionCorpus::find_user(const std::string& id) const {
  auto it = user_lookup_.find(id);
  if (it == user_lookup_.end()) return std::nullopt;
  return it->second;
}

std::span<const ItemIndex> InteractionCorpus::sequence(UserIndex u) const {
  return sequences_.at(static_cast<std::size_t>(u - 1));
}

SplitView InteractionCorpus::split(UserIndex u) const {
  const auto seq = sequence(u);
  const std::size_t n = seq.size();
  return SplitView{seq.first(n - 2), seq[n - 2], seq[n - 1]};
}

std::vector<std::size_t> InteractionCorpus::train_popularity() const {
  std::vector<std::size_t> pop(static_cast<std::size_t>(num_items()) + 1, 0);
  for (UserIndex u = 1; u <= num_users(); ++u)
    for (ItemIndex v : split(u).train) ++pop[static_cast<std::size_t>(v)];
  return pop;
}

InteractionCorpus build_corpus(std::span<const Interaction> records, int max_len, std::uint64_t seed) {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, std::size_t> user_slot;
  std::unordered_map<std::string, ItemIndex> item_slot;
  std::vector<std::vector<std::size_t>> per_user;  // record positions, file order
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    auto [uit, new_user] = user_slot.emplace(rec.user, user_ids.size());
    if (new_user) {
      user_ids.push_back(rec.user);
      per_user.emplace_back();
    }
    per_user[uit->second].push_back(i);
    if (item_slot.emplace(rec.item, static_cast<ItemIndex>(item_ids.size() + 1)).second) item_ids.push_back(rec.item);
  }
  std::vector<std::vector<ItemIndex>> sequences;
  sequences.reserve(per_user.size());
  for (auto& positions : per_user) {
    std::stable_sort(positions.begin(), positions.end(),
                     [&](std::size_t a, std::size_t b) { return records[a].timestamp < records[b].timestamp; });
    std::vector<ItemIndex> seq;
    seq.reserve(positions.size());
    for (std::size_t p : positions) seq.push_back(item_slot.at(records[p].item));
    sequences.push_back(std::move(seq));
  }
  return InteractionCorpus(std::move(user_ids), std::move(item_ids), std::move(sequences), max_len, seed);
}

PaddedSequence pad_truncate(std::span<const ItemIndex> seq, int length) {
  require(length >= 1, "pad_truncate: length must be at least 1");
  const auto len = static_cast<std::size_t>(length);
  PaddedSequence out;
  out.items.assign(len, kPaddingItem);
  const std::size_t kept = std::min(seq.size(), len);
  std::copy(seq.end() - static_cast<std::ptrdiff_t>(kept), seq.end(), out.items.end() - static_cast<std::ptrdiff_t>(kept));
  out.true_length = static_cast<int>(kept);
  return out;
}

void save_corpus(const InteractionCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("vocab_users.tsv");
    for (UserIndex u = 1; u <= corpus.num_users(); ++u) out << u << '\t' << corpus.user_id(u) << '\n';
  }
  {
    auto out = open("vocab_items.tsv");
    for (ItemIndex v = 1; v <= corpus.num_items(); ++v) out << v << '\t' << corpus.item_id(v) << '\n';
  }
  {
    auto out = open("sequences.tsv");
    for (UserIndex u = 1; u <= corpus.num_users(); ++u) {
      out << u << '\t';
      const auto seq = corpus.sequence(u);
      for (std::size_t i = 0; i < seq.size(); ++i) out << (i ? " " : "") << seq[i];
      out << '\n';
    }
  }
  write_kv(dir / "meta.kv", {{"L", std::to_string(corpus.max_len())},
                             {"num_users", std::to_string(corpus.num_users())},
                             {"num_items", std::to_string(corpus.num_items())},
                             {"num_interactions", std::to_string(corpus.num_interactions())},
                             {"seed", std::to_string(corpus.seed())}});
}

namespace {

std::vector<std::string> read_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> ids;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    std::size_t index = 0;
    if (fields.size() != 2 || !parse_int(fields[0], index) || index != ids.size() + 1)
      throw DataError(path.string() + ": line " + std::to_string(number) + ": expected '<index>\\t<id>' in order");
    ids.push_back(fields[1]);
  }
  return ids;
}

}  // namespace

InteractionCorpus load_corpus(const std::filesystem::path& dir) {
  const auto meta = read_kv(dir / "meta.kv");
  auto users = read_vocab(dir / "vocab_users.tsv");
  auto items = read_vocab(dir / "vocab_items.tsv");
  std::ifstream in(dir / "sequences.tsv");
  if (!in) throw DataError("cannot open " + (dir / "sequences.tsv").string());
  std::vector<std::vector<ItemIndex>> sequences;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    std::size_t u = 0;
    if (fields.size() != 2 || !parse_int(fields[0], u) || u != sequences.size() + 1)
      throw DataError("sequences.tsv: line " + std::to_string(number) + ": malformed");
    std::vector<ItemIndex> seq;
    for (const auto& tok : split(fields[1], ' ')) {
      ItemIndex v = 0;
      if (!parse_int(tok, v)) throw DataError("sequences.tsv: line " + std::to_string(number) + ": bad item index");
      seq.push_back(v);
    }
    sequences.push_back(std::move(seq));
  }
  int max_len = 0;
  std::uint64_t seed = 0;
  if (!meta.contains("L") || !parse_int(meta.at("L"), max_len)) throw DataError("meta.kv: missing L");
  if (meta.contains("seed")) parse_int(meta.at("seed"), seed);
  return InteractionCorpus(std::move(users), std::move(items), std::move(sequences), max_len, seed);
}

}  // namespace mrsr

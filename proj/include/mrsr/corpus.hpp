#pragma once

#include "mrsr/types.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mrsr {

struct Interaction {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;

  bool operator==(const Interaction&) const = default;
};

/// Reads `user<TAB>item<TAB>timestamp` lines. Blank lines are skipped; a line
/// without any TAB is split on whitespace instead. Throws DataError naming the
/// 1-based line number of the first malformed record.
std::vector<Interaction> load_interactions(const std::filesystem::path& path);
std::vector<Interaction> parse_interactions(std::istream& in, const std::string& source = "<stream>");

/// Keeps every record whose user has at least `min_count` records. One pass over users.
std::vector<Interaction> five_core_filter(std::span<const Interaction> records, std::size_t min_count = 5);

/// Leave-one-out view of one user's sequence.
struct SplitView {
  std::span<const ItemIndex> train;
  ItemIndex valid = kPaddingItem;
  ItemIndex test = kPaddingItem;
};

/// Users and items indexed densely from 1 in first-occurrence order, with one
/// chronologically sorted sequence per user. Immutable once built.
class InteractionCorpus {
 public:
  InteractionCorpus() = default;
  InteractionCorpus(std::vector<std::string> user_ids, std::vector<std::string> item_ids,
                    std::vector<std::vector<ItemIndex>> sequences, int max_len, std::uint64_t seed = 0);

  [[nodiscard]] UserIndex num_users() const { return static_cast<UserIndex>(user_ids_.size()); }
  [[nodiscard]] ItemIndex num_items() const { return static_cast<ItemIndex>(item_ids_.size()); }
  [[nodiscard]] std::size_t num_interactions() const { return interactions_; }
  [[nodiscard]] int max_len() const { return max_len_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  [[nodiscard]] const std::string& user_id(UserIndex u) const { return user_ids_.at(static_cast<std::size_t>(u - 1)); }
  [[nodiscard]] const std::string& item_id(ItemIndex v) const { return item_ids_.at(static_cast<std::size_t>(v - 1)); }
  [[nodiscard]] std::optional<ItemIndex> find_item(const std::string& id) const;
  [[nodiscard]] std::optional<UserIndex> find_user(const std::string& id) const;

  /// Full chronological sequence S^u.
  [[nodiscard]] std::span<const ItemIndex> sequence(UserIndex u) const;
  [[nodiscard]] SplitView split(UserIndex u) const;

  /// Interactions per item over the training prefixes only; index 0 unused.
  [[nodiscard]] std::vector<std::size_t> train_popularity() const;

  bool operator==(const InteractionCorpus&) const = default;

 private:
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::vector<std::vector<ItemIndex>> sequences_;
  std::unordered_map<std::string, ItemIndex> item_lookup_;
  std::unordered_map<std::string, UserIndex> user_lookup_;
  std::size_t interactions_ = 0;
  int max_len_ = 50;
  std::uint64_t seed_ = 0;
};

/// Sorts each user's records by timestamp (stable, so ties keep input order)
/// and assigns the leave-one-out split. Rejects users with fewer than 3 records.
InteractionCorpus build_corpus(std::span<const Interaction> records, int max_len, std::uint64_t seed = 0);

/// Fixed-length model input: padding (0) on the left, most recent item last.
struct PaddedSequence {
  std::vector<ItemIndex> items;
  int true_length = 0;

  [[nodiscard]] int length() const { return static_cast<int>(items.size()); }
  [[nodiscard]] int first_real() const { return length() - true_length; }
};

PaddedSequence pad_truncate(std::span<const ItemIndex> seq, int length);

/// Writes vocab_users.tsv, vocab_items.tsv, sequences.tsv and meta.kv into `dir`.
void save_corpus(const InteractionCorpus& corpus, const std::filesystem::path& dir);
InteractionCorpus load_corpus(const std::filesystem::path& dir);

}  // namespace mrsr

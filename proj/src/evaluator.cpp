#include "mrsr/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>
#include <unordered_set>

namespace mrsr {

std::size_t rank_of_target(std::span<const double> scores, ItemIndex target) {
  require(target >= 1 && static_cast<std::size_t>(target) < scores.size(), "rank_of_target: target out of range");
  const double t = scores[static_cast<std::size_t>(target)];
  std::size_t rank = 1;
  for (std::size_t v = 1; v < scores.size(); ++v) {
    if (scores[v] > t || (scores[v] == t && v < static_cast<std::size_t>(target))) ++rank;
  }
  return rank;
}

double ndcg_at(std::size_t rank, std::size_t n) {
  return rank <= n ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

MetricMeans summarize_ranks(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw DataError("cannot summarise an empty set of users");
  MetricMeans m;
  for (std::size_t rank : ranks) {
    m.recall5 += recall_at(rank, 5);
    m.recall10 += recall_at(rank, 10);
    m.ndcg5 += ndcg_at(rank, 5);
    m.ndcg10 += ndcg_at(rank, 10);
    m.mrr += mrr_of(rank);
  }
  const auto n = static_cast<double>(ranks.size());
  m.recall5 /= n;
  m.recall10 /= n;
  m.ndcg5 /= n;
  m.ndcg10 /= n;
  m.mrr /= n;
  m.users = ranks.size();
  return m;
}

KeyValues RankingReport::to_kv() const {
  return {{"users", std::to_string(overall.users)},   {"recall@5", format_double(overall.recall5)},
          {"recall@10", format_double(overall.recall10)}, {"ndcg@5", format_double(overall.ndcg5)},
          {"ndcg@10", format_double(overall.ndcg10)},     {"mrr", format_double(overall.mrr)}};
}

std::vector<ItemIndex> evaluation_history(const InteractionCorpus& corpus, UserIndex user, EvalSplit split) {
  const auto s = corpus.split(user);
  std::vector<ItemIndex> history(s.train.begin(), s.train.end());
  if (split == EvalSplit::test) history.push_back(s.valid);
  return history;
}

namespace {

RowVector last_output(const BoundParams& bound, const HyperParams& hyper, std::span<const ItemIndex> history) {
  const PaddedSequence seq = pad_truncate(history, hyper.max_len);
  const Var out = encode(bound, seq, ForwardContext{hyper, false, nullptr});
  return out.value().row(out.rows() - 1);
}

}  // namespace

Vector score_history(const ModelParams& params, const HyperParams& hyper, std::span<const ItemIndex> history) {
  Tape tape;
  const BoundParams bound = bind(tape, params, false);
  return next_item_scores(last_output(bound, hyper, history), params);
}

RankingReport evaluate(const ModelParams& params, const HyperParams& hyper, const InteractionCorpus& corpus,
                       EvalSplit split, const EvalOptions& options) {
  const UserIndex users = corpus.num_users();
  if (users == 0) throw DataError("evaluate: corpus has no users");
  RankingReport report;
  report.per_user.resize(static_cast<std::size_t>(users));

  auto work = [&](UserIndex first, UserIndex last) {
    Tape tape;
    const BoundParams bound = bind(tape, params, false);
    const std::size_t mark = tape.size();
    for (UserIndex u = first; u < last; ++u) {
      tape.truncate(mark);
      const auto history = evaluation_history(corpus, u, split);
      const auto s = corpus.split(u);
      const ItemIndex target = split == EvalSplit::valid ? s.valid : s.test;
      Vector scores = next_item_scores(last_output(bound, hyper, history), params);
      if (options.filter_seen) {
        for (ItemIndex v : history)
          if (v != target) scores(v) = kNegInf;
      }
      report.per_user[static_cast<std::size_t>(u - 1)] =
          UserRank{u, target, rank_of_target(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), target),
                   s.train.size()};
    }
  };

  const int threads = std::max(1, std::min<int>(options.threads, users));
  if (threads == 1) {
    work(1, users + 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    const UserIndex chunk = (users + threads - 1) / threads;
    for (int k = 0; k < threads; ++k) {
      const UserIndex first = 1 + k * chunk;
      const UserIndex last = std::min<UserIndex>(users + 1, first + chunk);
      if (first >= last) continue;
      pool.emplace_back([&, k, first, last] {
        try {
          work(first, last);
        } catch (...) {
          errors[static_cast<std::size_t>(k)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<std::size_t> ranks;
  ranks.reserve(report.per_user.size());
  for (const auto& r : report.per_user) ranks.push_back(r.rank);
  report.overall = summarize_ranks(ranks);
  return report;
}

std::vector<std::size_t> default_bucket_edges() { return {5, 10, 20}; }

std::vector<Bucket> breakdown(const RankingReport& report, const InteractionCorpus& corpus, BreakdownAxis axis,
                              std::span<const std::size_t> edges) {
  for (std::size_t i = 1; i < edges.size(); ++i)
    require(edges[i] > edges[i - 1], "breakdown: bucket edges must be strictly increasing");
  const std::vector<std::size_t> popularity =
      axis == BreakdownAxis::item_popularity ? corpus.train_popularity() : std::vector<std::size_t>{};
  std::vector<std::vector<std::size_t>> ranks(edges.size() + 1);
  for (const auto& r : report.per_user) {
    const std::size_t key =
        axis == BreakdownAxis::seq_length ? r.history_length : popularity[static_cast<std::size_t>(r.target)];
    std::size_t b = 0;
    while (b < edges.size() && key > edges[b]) ++b;
    ranks[b].push_back(r.rank);
  }
  std::vector<Bucket> buckets;
  for (std::size_t b = 0; b <= edges.size(); ++b) {
    std::string label;
    if (edges.empty()) label = "all";
    else if (b == 0) label = "<=" + std::to_string(edges[0]);
    else if (b == edges.size()) label = ">" + std::to_string(edges.back());
    else label = std::to_string(edges[b - 1] + 1) + "-" + std::to_string(edges[b]);
    buckets.push_back({label, ranks[b].empty() ? MetricMeans{} : summarize_ranks(ranks[b])});
  }
  return buckets;
}

std::string breakdown_csv(std::span<const Bucket> buckets) {
  std::ostringstream out;
  out << "bucket,count,recall@5,recall@10,ndcg@5,ndcg@10,mrr\n";
  for (const auto& b : buckets) {
    const auto& m = b.metrics;
    out << b.label << ',' << m.users << ',' << format_double(m.recall5) << ',' << format_double(m.recall10) << ','
        << format_double(m.ndcg5) << ',' << format_double(m.ndcg10) << ',' << format_double(m.mrr) << '\n';
  }
  return out.str();
}

}  // namespace mrsr

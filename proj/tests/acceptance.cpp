// Acceptance run: one PASS/FAIL/SKIP line per criterion, exit 3 if any failed.
//
//   acceptance [--cli path/to/mrsr] [--beauty prepared_corpus_dir] [--only N]
//
// The Beauty directory can also come from MRSR_BEAUTY_DIR. Without it the
// data-dependent criterion 11 is skipped.

#include "mrsr/analytics.hpp"
#include "mrsr/evaluator.hpp"
#include "mrsr/gradcheck.hpp"
#include "mrsr/losses.hpp"
#include "mrsr/model.hpp"
#include "mrsr/synth.hpp"
#include "mrsr/trainer.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

using namespace mrsr;
namespace fs = std::filesystem;

namespace {

enum class Outcome { pass, fail, skip };

struct Verdict {
  Outcome outcome = Outcome::fail;
  std::string detail;
};

Verdict fail(std::string detail) { return {Outcome::fail, std::move(detail)}; }
Verdict verdict(bool ok, std::string detail) { return {ok ? Outcome::pass : Outcome::fail, std::move(detail)}; }

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* format, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof buffer, format, args...);
  return buffer;
}

ModelParams random_params(const HyperParams& h, ItemIndex items, int relations, std::uint64_t seed, double scale) {
  Rng rng(seed);
  ModelParams p = init_params(h, items, relations, rng);
  std::normal_distribution<double> normal(0.0, scale);
  p.for_each([&](const std::string&, Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  });
  p.pin_padding_row();
  return p;
}

HyperParams tiny_hyper(int heads = 2) {
  HyperParams h;
  h.max_len = 6;
  h.dim = 8;
  h.layers = 2;
  h.heads = heads;
  h.dropout = 0.0;
  return h;
}

Matrix encode_values(const ModelParams& params, const HyperParams& h, const PaddedSequence& seq, AttentionKind kind) {
  Tape tape;
  const BoundParams bound = bind(tape, params, false);
  return encode(bound, seq, ForwardContext{h, false, nullptr, kind}).value();
}

// ---- 1: gradient integrity ----------------------------------------------------

Verdict gradient_integrity() {
  Stopwatch clock;
  GradCheckSpec spec;  // d=8, L=6, two blocks, two heads, two relations, 12 items
  spec.coordinates = 200;
  const GradCheckReport report = run_gradcheck(spec);
  const double secs = clock.seconds();
  const bool ok = report.result.coordinates >= 200 && report.result.max_rel_error < 1e-4 && secs < 60.0;
  return verdict(ok, fmt("max rel err %.3g over %zu coords (worst %s), %.1f s", report.result.max_rel_error,
                         report.result.coordinates, report.worst_parameter.c_str(), secs));
}

// ---- 2: reduction to the plain baseline ---------------------------------------

Verdict reduction_equivalence() {
  Stopwatch clock;
  int mismatches = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SynthSpec spec;
    spec.users = 6;
    spec.items = 12;
    spec.relations = 2;
    spec.p_relation = 0.5;
    spec.max_len = 6;
    const SyntheticData data = generate_synthetic(spec, seed);
    HyperParams h = tiny_hyper();
    h.alpha = 0.0;
    h.beta = 0.0;
    ModelParams p = random_params(h, data.corpus.num_items(), 2, 100 + seed, 0.5);
    for (Matrix& w : p.relation_weight) w.setZero();

    Rng rng(seed);
    for (UserIndex u = 1; u <= data.corpus.num_users(); ++u) {
      const SequenceExample ex = make_sequence_example(data.corpus, data.relations, u, h, rng);
      Tape tape;
      const BoundParams bound = bind(tape, p, false);
      const Var rel = encode(bound, ex.input, ForwardContext{h, false, nullptr, AttentionKind::relational});
      const Var plain = encode(bound, ex.input, ForwardContext{h, false, nullptr, AttentionKind::plain});
      const Matrix rel_logits = rel.value() * p.item_embedding.transpose();
      const Matrix plain_logits = plain.value() * p.item_embedding.transpose();
      if (rel_logits != plain_logits) ++mismatches;
      if (pred_loss(bound, rel, ex).scalar() != pred_loss(bound, plain, ex).scalar()) ++mismatches;
    }
  }
  const double secs = clock.seconds();
  return verdict(mismatches == 0 && secs < 10.0,
                 fmt("%d bitwise mismatches over 10 seeds (logits and L_pred), %.2f s", mismatches, secs));
}

// ---- 3: causality and padding ----------------------------------------------------

Verdict causality_and_padding() {
  Rng rng(3);
  std::uniform_int_distribution<ItemIndex> item(1, 12);
  double worst_future = 0.0;
  double worst_padding_output = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const HyperParams h = tiny_hyper(trial % 3 == 0 ? 1 : 2);
    const ModelParams p = random_params(h, 12, 2, 300 + static_cast<std::uint64_t>(trial), 0.5);
    const int len = 2 + trial % 5;
    std::vector<ItemIndex> raw(static_cast<std::size_t>(len));
    for (auto& v : raw) v = item(rng);
    const PaddedSequence seq = pad_truncate(raw, h.max_len);
    const Matrix base = encode_values(p, h, seq, AttentionKind::relational);
    for (int t = seq.first_real(); t + 1 < h.max_len; ++t) {
      PaddedSequence perturbed = seq;
      for (int s = t + 1; s < h.max_len; ++s) perturbed.items[static_cast<std::size_t>(s)] = item(rng);
      const Matrix changed = encode_values(p, h, perturbed, AttentionKind::relational);
      worst_future = std::max(worst_future, (changed.topRows(t + 1) - base.topRows(t + 1)).cwiseAbs().maxCoeff());
    }
    ModelParams q = p;
    for (int t = 0; t < seq.first_real(); ++t) q.position_embedding.row(t).setConstant(5.0 + t);
    const Matrix shifted = encode_values(q, h, seq, AttentionKind::relational);
    worst_padding_output =
        std::max(worst_padding_output, (shifted.bottomRows(len) - base.bottomRows(len)).cwiseAbs().maxCoeff());
  }

  // Loss side: a short sequence padded to L. Rewriting the padded positional
  // rows must leave every loss term unchanged.
  SynthSpec spec;
  spec.users = 5;
  spec.items = 12;
  spec.relations = 2;
  spec.p_relation = 0.5;
  spec.max_len = 12;
  const SyntheticData data = generate_synthetic(spec, 7);
  HyperParams h = tiny_hyper();
  h.max_len = 12;
  h.alpha = 0.5;
  h.beta = 0.5;
  h.lambda = 0.0;
  const ModelParams p = random_params(h, data.corpus.num_items(), 2, 77, 0.3);
  Rng rng_batch(11);
  std::vector<UserIndex> users(static_cast<std::size_t>(data.corpus.num_users()));
  std::iota(users.begin(), users.end(), UserIndex{1});
  const Batch batch = make_batch(data.corpus, data.relations, users, h, rng_batch);
  int shortest = h.max_len;
  for (const auto& ex : batch.sequences) shortest = std::min(shortest, ex.input.first_real());
  ModelParams q = p;
  for (int t = 0; t < shortest; ++t) q.position_embedding.row(t).setConstant(-4.0 + t);
  auto parts = [&](const ModelParams& params) {
    Tape tape;
    return batch_loss(bind(tape, params, false), batch, ForwardContext{h, false, nullptr}).parts;
  };
  const LossBreakdown a = parts(p);
  const LossBreakdown b = parts(q);
  const double loss_change = std::max({std::abs(a.pred - b.pred), std::abs(a.intra - b.intra),
                                       std::abs(a.inter - b.inter), std::abs(a.total - b.total)});
  Rng unused(1);
  const Gradients g = loss_and_gradients(p, h, batch, false, unused).gradients;
  const double pad_grad = g.item_embedding.row(0).cwiseAbs().maxCoeff();

  const bool ok = worst_future < 1e-12 && worst_padding_output < 1e-12 && loss_change == 0.0 && shortest > 0 &&
                  pad_grad == 0.0;
  return verdict(ok, fmt("future leak %.3g, padded-slot leak %.3g, loss change %.3g (%d padded slots), "
                         "padding-row gradient %.3g",
                         worst_future, worst_padding_output, loss_change, shortest, pad_grad));
}

// ---- 4: relation score symmetry --------------------------------------------------

Verdict relation_symmetry() {
  const HyperParams h = tiny_hyper();
  Rng rng(4);
  std::uniform_int_distribution<ItemIndex> item(1, 12);
  double worst_asym = 0.0;
  double min_diag = std::numeric_limits<double>::infinity();
  for (int draw = 0; draw < 1000; ++draw) {
    const ModelParams p = random_params(h, 12, 2, 4000 + static_cast<std::uint64_t>(draw), 0.5);
    const ItemIndex a = item(rng);
    const ItemIndex b = item(rng);
    const RelationIndex r = draw % 2;
    worst_asym = std::max(worst_asym, std::abs(relation_score(p, a, b, r) - relation_score(p, b, a, r)));
    min_diag = std::min(min_diag, relation_score(p, a, a, r));
  }
  return verdict(worst_asym <= 1e-10 && min_diag >= 0.0,
                 fmt("max |f(i,j)-f(j,i)| %.3g, min f(v,v) %.3g over 1000 draws", worst_asym, min_diag));
}

// ---- 5: metric oracles --------------------------------------------------------------

/// Rank by full sort on (score desc, index asc).
std::size_t sorted_rank(const std::vector<double>& scores, ItemIndex target) {
  std::vector<ItemIndex> order(scores.size() - 1);
  std::iota(order.begin(), order.end(), ItemIndex{1});
  std::sort(order.begin(), order.end(), [&](ItemIndex x, ItemIndex y) {
    const double sx = scores[static_cast<std::size_t>(x)];
    const double sy = scores[static_cast<std::size_t>(y)];
    return sx != sy ? sx > sy : x < y;
  });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), target) - order.begin()) + 1;
}

struct OracleMeans {
  double r5 = 0, r10 = 0, n5 = 0, n10 = 0, mrr = 0;
};

OracleMeans oracle_means(const std::vector<std::size_t>& ranks) {
  OracleMeans m;
  for (std::size_t rank : ranks) {
    m.r5 += rank <= 5 ? 1.0 : 0.0;
    m.r10 += rank <= 10 ? 1.0 : 0.0;
    m.n5 += rank <= 5 ? std::log(2.0) / std::log(rank + 1.0) : 0.0;
    m.n10 += rank <= 10 ? std::log(2.0) / std::log(rank + 1.0) : 0.0;
    m.mrr += 1.0 / static_cast<double>(rank);
  }
  const double n = static_cast<double>(ranks.size());
  return {m.r5 / n, m.r10 / n, m.n5 / n, m.n10 / n, m.mrr / n};
}

bool close(const MetricMeans& got, const OracleMeans& want) {
  const double tol = 1e-12;
  return std::abs(got.recall5 - want.r5) <= tol && std::abs(got.recall10 - want.r10) <= tol &&
         std::abs(got.ndcg5 - want.n5) <= tol && std::abs(got.ndcg10 - want.n10) <= tol &&
         std::abs(got.mrr - want.mrr) <= tol;
}

Verdict metric_oracles() {
  int rank_mismatch = 0;
  int metric_mismatch = 0;
  Rng rng(5);
  for (int m = 0; m < 50; ++m) {
    const int users = 5 + m % 20;
    const int items = 10 + (m * 7) % 60;
    std::uniform_int_distribution<int> coarse(0, 6);  // few distinct values: many ties
    std::normal_distribution<double> fine(0.0, 1.0);
    std::uniform_int_distribution<ItemIndex> pick(1, items);
    std::vector<std::size_t> ranks, oracle;
    for (int u = 0; u < users; ++u) {
      std::vector<double> scores(static_cast<std::size_t>(items) + 1);
      scores[0] = kNegInf;
      for (int v = 1; v <= items; ++v)
        scores[static_cast<std::size_t>(v)] = m % 2 ? static_cast<double>(coarse(rng)) : fine(rng);
      const ItemIndex target = pick(rng);
      ranks.push_back(rank_of_target(scores, target));
      oracle.push_back(sorted_rank(scores, target));
      rank_mismatch += ranks.back() != oracle.back();
    }
    metric_mismatch += !close(summarize_ranks(ranks), oracle_means(oracle));
  }

  // evaluate() end to end against scoring every user by hand
  int eval_mismatch = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthSpec spec;
    spec.users = 15;
    spec.items = 20;
    spec.max_len = 8;
    const SyntheticData data = generate_synthetic(spec, seed);
    HyperParams h = tiny_hyper();
    h.max_len = 8;
    const ModelParams p = random_params(h, data.corpus.num_items(), 2, 500 + seed, 0.3);
    for (EvalSplit split : {EvalSplit::valid, EvalSplit::test}) {
      std::vector<std::size_t> oracle;
      for (UserIndex u = 1; u <= data.corpus.num_users(); ++u) {
        const auto s = data.corpus.split(u);
        std::vector<ItemIndex> history(s.train.begin(), s.train.end());
        if (split == EvalSplit::test) history.push_back(s.valid);
        const Vector scores = score_history(p, h, history);
        oracle.push_back(sorted_rank(std::vector<double>(scores.data(), scores.data() + scores.size()),
                                     split == EvalSplit::valid ? s.valid : s.test));
      }
      eval_mismatch += !close(evaluate(p, h, data.corpus, split).overall, oracle_means(oracle));
    }
  }

  const double spot3 = ndcg_at(3, 10);
  const double spot7 = ndcg_at(7, 10);
  const bool spots = std::abs(spot3 - 0.5) <= 1e-12 && std::abs(spot7 - 1.0 / 3.0) <= 1e-12;
  return verdict(rank_mismatch == 0 && metric_mismatch == 0 && eval_mismatch == 0 && spots,
                 fmt("50 score matrices: %d rank / %d metric mismatches; evaluate() mismatches %d/10; "
                     "ndcg(rank 3) %.15g, ndcg@10(rank 7) %.15g",
                     rank_mismatch, metric_mismatch, eval_mismatch, spot3, spot7));
}

// ---- 6: statistics oracles --------------------------------------------------------

using PairSet = std::set<std::pair<ItemIndex, ItemIndex>>;

PairSet transitions(const InteractionCorpus& c, int k) {
  PairSet out;
  for (UserIndex u = 1; u <= c.num_users(); ++u) {
    const auto train = c.split(u).train;
    for (std::size_t t = 0; t + static_cast<std::size_t>(k) < train.size(); ++t)
      out.insert({train[t], train[t + static_cast<std::size_t>(k)]});
  }
  return out;
}

double hit_oracle(const InteractionCorpus& c, const PairSet& pool) {
  int hits = 0;
  for (UserIndex u = 1; u <= c.num_users(); ++u) {
    const auto s = c.split(u);
    hits += pool.count({s.valid, s.test}) ? 1 : 0;
  }
  return static_cast<double>(hits) / c.num_users();
}

double coverage_oracle(const std::vector<std::vector<ItemIndex>>& sequences, const PairSet& related) {
  double total = 0.0;
  for (const auto& seq : sequences) {
    PairSet square;
    for (ItemIndex a : seq)
      for (ItemIndex b : seq) square.insert({a, b});
    std::size_t hit = 0;
    for (const auto& pair : square) hit += related.count(pair);
    total += static_cast<double>(hit) / (static_cast<double>(seq.size()) * static_cast<double>(seq.size()));
  }
  return total / static_cast<double>(sequences.size());
}

Verdict statistics_oracles() {
  int mismatches = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SynthSpec spec;
    spec.users = 20 + static_cast<int>(seed * 4);  // at most 100
    spec.items = 8 + static_cast<int>(seed % 7) * 3;
    spec.relations = 1 + static_cast<int>(seed % 3);
    spec.min_length = 5;
    spec.max_length = 9;
    spec.p_relation = static_cast<double>(seed % 4) * 0.25;
    const SyntheticData data = generate_synthetic(spec, seed);
    const auto& c = data.corpus;

    PairSet pooled;
    for (int k = 1; k <= 3; ++k) mismatches += transition_hit_ratio(c, k) != hit_oracle(c, transitions(c, k));
    for (int k = 1; k <= spec.max_length; ++k) {
      const PairSet tk = transitions(c, k);
      pooled.insert(tk.begin(), tk.end());
    }
    mismatches += total_transition_hit_ratio(c) != hit_oracle(c, pooled);

    std::vector<std::vector<ItemIndex>> sequences;
    for (UserIndex u = 1; u <= c.num_users(); ++u) {
      const auto s = c.sequence(u);
      sequences.emplace_back(s.begin(), s.end());
    }
    for (bool sym : {false, true}) {
      PairSet related;
      for (RelationIndex r = 0; r < data.relations.num_relations(); ++r)
        for (const auto& [head, tail] : data.relations.pairs(r)) {
          related.insert({head, tail});
          if (sym) related.insert({tail, head});
        }
      mismatches += related_pair_hit_ratio(c, data.relations, sym) != hit_oracle(c, related);
      // Summation order differs from the oracle, so allow a few ulps.
      mismatches += std::abs(intra_coverage(c, data.relations, sym) - coverage_oracle(sequences, related)) > 1e-15;
    }
  }

  const std::vector<ItemIndex> ab = {1, 2};
  const std::vector<std::span<const ItemIndex>> single = {ab};
  RelationStore store({"r"}, 2);
  store.insert(1, 0, 2);
  const double hand = intra_coverage(single, store);
  return verdict(mismatches == 0 && hand == 0.25,
                 fmt("%d oracle mismatches over 20 corpora; S=[a,b], I={(a,b)} gives %.17g", mismatches, hand));
}

// ---- 7: overfit a tiny corpus ---------------------------------------------------------

/// Recall@1 of each user's last training transition: input train[:-1], target train[-1].
double training_recall_at_1(const ModelParams& p, const HyperParams& h, const InteractionCorpus& c) {
  int hits = 0;
  for (UserIndex u = 1; u <= c.num_users(); ++u) {
    const auto train = c.split(u).train;
    const Vector s = score_history(p, h, train.first(train.size() - 1));
    hits += rank_of_target(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), train.back()) == 1;
  }
  return static_cast<double>(hits) / c.num_users();
}

Verdict overfit() {
  Stopwatch clock;
  std::string detail;
  int reached = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SynthSpec spec;
    spec.users = 20;
    spec.items = 15;
    spec.relations = 2;
    spec.min_length = 5;
    spec.max_length = 5;
    spec.max_len = 20;
    const SyntheticData data = generate_synthetic(spec, seed);
    HyperParams h;
    h.max_len = 20;
    h.dim = 96;
    h.layers = 2;
    h.heads = 1;
    h.dropout = 0.0;
    h.alpha = 0.0;
    h.beta = 0.0;
    h.lr = 0.005;
    h.batch_size = 2;
    h.seed = seed;
    Rng rng(seed);
    ModelParams p = init_params(h, data.corpus.num_items(), spec.relations, rng);
    OptimState state = OptimState::zeros_for(p);
    int hit_epoch = -1;
    double best = 0.0;
    for (int epoch = 0; epoch < 200 && hit_epoch < 0; ++epoch) {
      train_epoch(data.corpus, data.relations, p, state, h, rng);
      const double recall = training_recall_at_1(p, h, data.corpus);
      best = std::max(best, recall);
      if (recall >= 0.9) hit_epoch = epoch + 1;
    }
    reached += hit_epoch > 0;
    detail += fmt("%sseed %d: ", seed == 1 ? "" : "; ", static_cast<int>(seed)) +
              (hit_epoch > 0 ? fmt("R@1>=0.9 at epoch %d", hit_epoch) : fmt("best R@1 %.2f", best));
  }
  const double secs = clock.seconds();
  return verdict(reached == 3 && secs < 120.0, detail + fmt(", %.1f s", secs));
}

// ---- 8: ablation ordering ---------------------------------------------------------------

Verdict ablation_ordering();  // below, with its configuration

// ---- 9: early stopping --------------------------------------------------------------------

Verdict early_stopping() {
  SynthSpec spec;
  spec.users = 10;
  spec.items = 15;
  const SyntheticData data = generate_synthetic(spec, 9);
  HyperParams h = tiny_hyper();
  h.max_len = 20;
  h.patience = 2;
  h.max_epochs = 50;
  h.lr = 0.01;
  int calls = 0;
  ModelParams first;
  FitOptions options;
  options.validator = [&](const ModelParams& params) {
    if (calls == 0) first = params;
    return 1.0 - 0.1 * ++calls;
  };
  const FitResult result = fit(data.corpus, data.relations, h, options);
  const bool ok = calls == 3 && result.stopped_early && result.best.epoch == 0 && result.log.best_epoch == 0 &&
                  result.best.params == first;
  return verdict(ok, fmt("%d validation rounds, best epoch %d, first checkpoint returned: %s", calls,
                         result.best.epoch, result.best.params == first ? "yes" : "no"));
}

// ---- 10: determinism ---------------------------------------------------------------------

Verdict determinism(const std::string& cli) {
  testing::TempDir dir("acceptance_det");
  SynthSpec spec;
  spec.users = 40;
  spec.items = 30;
  spec.p_relation = 0.6;
  spec.max_len = 12;
  const SyntheticData data = generate_synthetic(spec, 10);
  save_corpus(data.corpus, dir.path() / "data");
  save_relations(data.relations, data.corpus, dir.path() / "data");
  testing::write_file(dir / "config.kv",
                      "max_len=12\ndim=16\nlayers=2\nheads=2\ndropout=0.3\nalpha=0.5\nbeta=0.5\nlambda=0.001\n"
                      "lr=0.005\nbatch_size=8\nmax_epochs=6\npatience=3\nseed=17\n");

  std::vector<std::pair<std::string, std::string>> runs;
  std::string how;
  if (!cli.empty()) {
    how = "cli train";
    for (const char* name : {"run_a", "run_b"}) {
      const fs::path out = dir.path() / name;
      const std::string command = "\"" + cli + "\" train --quiet --data \"" + (dir.path() / "data").string() +
                                  "\" --config \"" + (dir / "config.kv").string() + "\" --out \"" + out.string() +
                                  "\" --threads 2 > \"" + (dir.path() / name).string() + ".stdout\"";
      if (std::system(command.c_str()) != 0) return fail("train command failed: " + command);
      runs.emplace_back(testing::slurp(out / "checkpoint.bin"), testing::slurp(out / "train_log.jsonl"));
    }
  } else {
    how = "library fit (no --cli given)";
    const HyperParams h = HyperParams::from_kv(read_kv(dir / "config.kv"));
    for (int k = 0; k < 2; ++k) {
      const FitResult r = fit(data.corpus, data.relations, h);
      runs.emplace_back(serialize_checkpoint(r.best), r.log.to_jsonl());
    }
  }
  const bool same_ckpt = runs[0].first == runs[1].first && !runs[0].first.empty();
  const bool same_log = runs[0].second == runs[1].second && !runs[0].second.empty();
  return verdict(same_ckpt && same_log, fmt("%s: checkpoints %s (%zu bytes), logs %s", how.c_str(),
                                            same_ckpt ? "identical" : "differ", runs[0].first.size(),
                                            same_log ? "identical" : "differ"));
}

// ---- 11: real data statistics ------------------------------------------------------------

Verdict beauty_statistics(const std::string& dir) {
  if (dir.empty()) return {Outcome::skip, "no Beauty data (pass --beauty or set MRSR_BEAUTY_DIR)"};
  const InteractionCorpus corpus = load_corpus(dir);
  const RelationStore store = load_relation_dir(dir, corpus);
  const double coverage = intra_coverage(corpus, store);
  const double hr1 = transition_hit_ratio(corpus, 1);
  const bool ok = std::abs(coverage - 0.0458) <= 0.010 && std::abs(hr1 - 0.0860) <= 0.015;
  return verdict(ok, fmt("intra coverage %.2f%% (target 4.58 +- 1.0), order-1 HR %.2f%% (target 8.60 +- 1.5)",
                         100 * coverage, 100 * hr1));
}

}  // namespace

// ---- 8, continued ------------------------------------------------------------------------

namespace {

struct AblationSetup {
  SynthSpec corpus;
  HyperParams hyper;
};

AblationSetup ablation_setup(std::uint64_t seed) {
  AblationSetup s;
  s.corpus.users = 200;
  s.corpus.items = 300;
  s.corpus.relations = 2;
  s.corpus.out_degree = 2;
  s.corpus.p_relation = 0.8;
  s.corpus.min_length = 5;
  s.corpus.max_length = 10;
  s.corpus.max_len = 10;
  HyperParams& h = s.hyper;
  h.max_len = 10;
  h.dim = 64;
  h.layers = 1;
  h.heads = 1;
  h.dropout = 0.2;
  h.alpha = 0.5;
  h.beta = 0.5;
  h.lr = 0.001;
  h.batch_size = 32;
  // Sampled relation pairs per batch. At the default (one per user in the
  // batch) an epoch sees under a fifth of the 1200 pairs.
  h.inter_budget = 1024;
  h.max_epochs = 400;
  h.patience = 30;
  h.seed = seed;
  return s;
}

Verdict ablation_ordering() {
  Stopwatch clock;
  int beats_no_inter = 0;
  int beats_no_intra = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const AblationSetup setup = ablation_setup(seed);
    const SyntheticData data = generate_synthetic(setup.corpus, seed);
    auto test_mrr = [&](double alpha, double beta) {
      HyperParams h = setup.hyper;
      h.alpha = alpha;
      h.beta = beta;
      return fit(data.corpus, data.relations, h).test.mrr;
    };
    const double full = test_mrr(setup.hyper.alpha, setup.hyper.beta);
    const double no_inter = test_mrr(setup.hyper.alpha, 0.0);
    const double no_intra = test_mrr(0.0, setup.hyper.beta);
    beats_no_inter += full > no_inter;
    beats_no_intra += full > no_intra;
    detail += fmt("%sseed %d MRR full %.4f / beta=0 %.4f / alpha=0 %.4f", seed == 1 ? "" : "; ",
                  static_cast<int>(seed), full, no_inter, no_intra);
  }
  const double secs = clock.seconds();
  const bool ok = beats_no_inter >= 2 && beats_no_intra >= 2 && secs < 600.0;
  return verdict(ok, fmt("full > beta=0 in %d/3, full > alpha=0 in %d/3 (", beats_no_inter, beats_no_intra) +
                         detail + fmt("), %.0f s", secs));
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  std::string beauty = std::getenv("MRSR_BEAUTY_DIR") ? std::getenv("MRSR_BEAUTY_DIR") : "";
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--cli" && i + 1 < argc) cli = argv[++i];
    else if (arg == "--beauty" && i + 1 < argc) beauty = argv[++i];
    else if (arg == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
    else {
      std::cerr << "usage: acceptance [--cli path] [--beauty dir] [--only N]\n";
      return 1;
    }
  }

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"reduction equivalence", reduction_equivalence},
      {"causality and padding", causality_and_padding},
      {"relation score symmetry", relation_symmetry},
      {"metric oracles", metric_oracles},
      {"statistics oracles", statistics_oracles},
      {"overfit tiny corpus", overfit},
      {"ablation ordering", ablation_ordering},
      {"early stopping", early_stopping},
      {"determinism", [&] { return determinism(cli); }},
      {"real-data statistics", [&] { return beauty_statistics(beauty); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (only != 0 && only != number) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = fail(std::string("exception: ") + e.what());
    }
    const char* tag = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::fail ? "FAIL" : "SKIP";
    failures += v.outcome == Outcome::fail;
    std::cout << tag << " " << number << " " << criteria[i].first << ": " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 3;
}

#include "mrsr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace mrsr {
namespace {

Var zero_scalar(Tape& tape) { return tape.constant(Matrix::Zero(1, 1)); }

Var accumulate_sum(Var total, Var term) { return total.valid() ? add(total, term) : term; }

}  // namespace

void fill_intra_supervision(SequenceExample& example, const RelationStore& store, int neg_cap, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(example.window.size());
  example.intra_labels.assign(static_cast<std::size_t>(store.num_relations()), Matrix::Zero(n, n));
  example.intra_weights.assign(static_cast<std::size_t>(store.num_relations()), Matrix::Zero(n, n));
  for (RelationIndex r = 0; r < store.num_relations(); ++r) {
    Matrix& labels = example.intra_labels[static_cast<std::size_t>(r)];
    Matrix& weights = example.intra_weights[static_cast<std::size_t>(r)];
    std::vector<std::pair<Eigen::Index, Eigen::Index>> negatives;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (store.contains(example.window[static_cast<std::size_t>(i)], r, example.window[static_cast<std::size_t>(j)])) {
          labels(i, j) = 1.0;
          weights(i, j) = 1.0;
        } else {
          negatives.emplace_back(i, j);
        }
      }
    }
    if (neg_cap > 0 && negatives.size() > static_cast<std::size_t>(neg_cap)) {
      std::shuffle(negatives.begin(), negatives.end(), rng);
      negatives.resize(static_cast<std::size_t>(neg_cap));
    }
    for (const auto& [i, j] : negatives) weights(i, j) = 1.0;
  }
}

SequenceExample make_sequence_example(const InteractionCorpus& corpus, const RelationStore& store, UserIndex user,
                                      const HyperParams& hyper, Rng& rng) {
  const auto train = corpus.split(user).train;
  SequenceExample ex;
  ex.user = user;
  ex.input = pad_truncate(train.first(train.size() - 1), hyper.max_len);
  const PaddedSequence targets = pad_truncate(train.subspan(1), hyper.max_len);
  const std::unordered_set<ItemIndex> seen(train.begin(), train.end());
  const bool has_negative = seen.size() < static_cast<std::size_t>(corpus.num_items());
  std::uniform_int_distribution<ItemIndex> pick(1, corpus.num_items());
  const auto length = static_cast<std::size_t>(hyper.max_len);
  ex.positives.assign(length, kPaddingItem);
  ex.negatives.assign(length, kPaddingItem);
  for (std::size_t t = 0; t < length; ++t) {
    if (ex.input.items[t] == kPaddingItem || targets.items[t] == kPaddingItem) continue;
    ex.positives[t] = targets.items[t];
    if (!has_negative) continue;
    ItemIndex negative = pick(rng);
    while (seen.contains(negative)) negative = pick(rng);
    ex.negatives[t] = negative;
  }
  const PaddedSequence window = pad_truncate(train, hyper.max_len);
  ex.window.assign(window.items.begin() + window.first_real(), window.items.end());
  fill_intra_supervision(ex, store, hyper.intra_neg_cap, rng);
  return ex;
}

std::vector<InterSample> sample_inter(const RelationStore& store, int count, Rng& rng) {
  std::vector<InterSample> samples;
  const std::size_t total = store.total_pairs();
  if (total == 0 || count <= 0) return samples;
  std::vector<std::size_t> cumulative;
  for (RelationIndex r = 0; r < store.num_relations(); ++r)
    cumulative.push_back((cumulative.empty() ? 0 : cumulative.back()) + store.pairs(r).size());
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  samples.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const std::size_t flat = pick(rng);
    const auto r = static_cast<RelationIndex>(std::upper_bound(cumulative.begin(), cumulative.end(), flat) -
                                              cumulative.begin());
    const std::size_t offset = flat - (r == 0 ? 0 : cumulative[static_cast<std::size_t>(r - 1)]);
    const auto [head, tail] = store.pairs(r)[offset];
    try {
      samples.push_back({head, r, tail, store.sample_negative(head, r, rng)});
    } catch (const DegenerateRelation&) {
      // head related to every other item: no negative to contrast with
    }
  }
  return samples;
}

Batch make_batch(const InteractionCorpus& corpus, const RelationStore& store, std::span<const UserIndex> users,
                 const HyperParams& hyper, Rng& rng) {
  Batch batch;
  batch.sequences.reserve(users.size());
  for (UserIndex u : users) batch.sequences.push_back(make_sequence_example(corpus, store, u, hyper, rng));
  batch.inter = sample_inter(store, hyper.effective_inter_budget(), rng);
  return batch;
}

Var pred_loss(const BoundParams& bound, Var output, const SequenceExample& example) {
  Tape& tape = *output.tape();
  std::vector<ItemIndex> rows;
  std::vector<ItemIndex> positives;
  std::vector<ItemIndex> negatives;
  for (std::size_t t = 0; t < example.positives.size(); ++t) {
    if (example.positives[t] == kPaddingItem) continue;
    rows.push_back(static_cast<ItemIndex>(t));
    positives.push_back(example.positives[t]);
    negatives.push_back(example.negatives[t]);
  }
  if (rows.empty()) return zero_scalar(tape);
  const auto n = static_cast<Eigen::Index>(rows.size());
  Var selected = gather_rows(output, rows);
  Var pos_scores = row_dot(selected, gather_rows(bound.item_embedding, positives));
  Var loss = binary_xent(pos_scores, Matrix::Ones(n, 1), Matrix::Ones(n, 1), BceForm::standard);
  Matrix neg_weights(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) neg_weights(i) = negatives[static_cast<std::size_t>(i)] == kPaddingItem ? 0.0 : 1.0;
  if (neg_weights.sum() > 0.0) {
    Var neg_scores = row_dot(selected, gather_rows(bound.item_embedding, negatives));
    loss = add(loss, binary_xent(neg_scores, Matrix::Zero(n, 1), neg_weights, BceForm::standard));
  }
  return loss;
}

Var intra_loss(const BoundParams& bound, const SequenceExample& example, BceForm form) {
  Tape& tape = *bound.item_embedding.tape();
  if (example.window.size() < 2 || bound.relation_proj.empty()) return zero_scalar(tape);
  require(example.intra_labels.size() == bound.relation_proj.size(), "intra_loss: supervision/relation count mismatch");
  Var items = gather_rows(bound.item_embedding, example.window);
  Var total;
  for (std::size_t r = 0; r < bound.relation_proj.size(); ++r) {
    Var projected = matmul(items, bound.relation_proj[r]);
    Var scores = matmul_nt(projected, projected);
    total = accumulate_sum(total, binary_xent(scores, example.intra_labels[r], example.intra_weights[r], form));
  }
  return total;
}

Var inter_loss(const BoundParams& bound, std::span<const InterSample> samples, BceForm form) {
  Tape& tape = *bound.item_embedding.tape();
  Var total;
  for (std::size_t r = 0; r < bound.relation_proj.size(); ++r) {
    std::vector<ItemIndex> heads, positives, negatives;
    for (const auto& s : samples) {
      if (static_cast<std::size_t>(s.relation) != r) continue;
      heads.push_back(s.head);
      positives.push_back(s.positive);
      negatives.push_back(s.negative);
    }
    if (heads.empty()) continue;
    const auto n = static_cast<Eigen::Index>(heads.size());
    const Var w = bound.relation_proj[r];
    Var h = matmul(gather_rows(bound.item_embedding, heads), w);
    Var pos = row_dot(h, matmul(gather_rows(bound.item_embedding, positives), w));
    Var neg = row_dot(h, matmul(gather_rows(bound.item_embedding, negatives), w));
    total = accumulate_sum(total, binary_xent(pos, Matrix::Ones(n, 1), Matrix::Ones(n, 1), form));
    total = add(total, binary_xent(neg, Matrix::Zero(n, 1), Matrix::Ones(n, 1), form));
  }
  return total.valid() ? total : zero_scalar(tape);
}

Var l2_penalty(const BoundParams& bound) {
  Var total = sum_squares(bound.item_embedding, 1);
  bool first = true;
  bound.for_each([&](const Var& v) {
    if (first) {
      first = false;  // item embedding handled above
      return;
    }
    total = add(total, sum_squares(v));
  });
  return total;
}

BatchLoss batch_loss(const BoundParams& bound, const Batch& batch, const ForwardContext& ctx) {
  Tape& tape = *bound.item_embedding.tape();
  Var pred, intra;
  for (const auto& example : batch.sequences) {
    Var output = encode(bound, example.input, ctx);
    pred = accumulate_sum(pred, pred_loss(bound, output, example));
    intra = accumulate_sum(intra, intra_loss(bound, example, ctx.hyper.bce_form));
  }
  if (!pred.valid()) pred = zero_scalar(tape);
  if (!intra.valid()) intra = zero_scalar(tape);
  Var inter = inter_loss(bound, batch.inter, ctx.hyper.bce_form);
  Var l2 = l2_penalty(bound);

  BatchLoss out;
  out.total = pred;
  if (ctx.hyper.alpha != 0.0) out.total = add(out.total, scale(intra, ctx.hyper.alpha));
  if (ctx.hyper.beta != 0.0) out.total = add(out.total, scale(inter, ctx.hyper.beta));
  if (ctx.hyper.lambda != 0.0) out.total = add(out.total, scale(l2, ctx.hyper.lambda));
  out.parts = {pred.scalar(), intra.scalar(), inter.scalar(), l2.scalar(), out.total.scalar()};
  return out;
}

LossAndGradients loss_and_gradients(const ModelParams& params, const HyperParams& hyper, const Batch& batch,
                                    bool training, Rng& rng) {
  Tape tape;
  const BoundParams bound = bind(tape, params, true);
  const BatchLoss loss = batch_loss(bound, batch, ForwardContext{hyper, training, &rng});
  tape.backward(loss.total);
  LossAndGradients out{loss.parts, collect_gradients(bound, params)};
  out.gradients.item_embedding.row(0).setZero();
  return out;
}

GradCheckResult check_loss_gradients(const ModelParams& params, const HyperParams& hyper, const Batch& batch,
                                     std::size_t coordinates, std::uint64_t seed, double h) {
  Rng unused(seed);
  const Vector analytic = loss_and_gradients(params, hyper, batch, false, unused).gradients.flatten();
  ModelParams probe = params;
  auto loss_at = [&](const Vector& flat) {
    probe.assign_flat(flat);
    Tape tape;
    return batch_loss(bind(tape, probe, false), batch, ForwardContext{hyper, false, nullptr}).parts.total;
  };
  // Central differences cannot resolve components much below eps * |f| / h, so
  // the absolute floor of the relative error scales with the loss.
  const Vector point = params.flatten();
  const double floor = 1e-6 * std::max(1.0, std::abs(loss_at(point)));
  return finite_diff_check(loss_at, point, analytic, h, coordinates, seed, floor);
}

}  // namespace mrsr

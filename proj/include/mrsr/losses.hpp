#pragma once

#include "mrsr/corpus.hpp"
#include "mrsr/model.hpp"
#include "mrsr/relstore.hpp"
#include "mrsr/tape.hpp"

#include <span>
#include <vector>

namespace mrsr {

/// One user's training view. `positives[t]` / `negatives[t]` are 0 where
/// position t is not supervised. Intra supervision covers the training window
/// `window` (at most L items): labels[r](i, j) = 1 iff (window[i], window[j]) is
/// in relation r, weights[r](i, j) = 1 for supervised pairs j > i.
struct SequenceExample {
  UserIndex user = 0;
  PaddedSequence input;
  std::vector<ItemIndex> positives;
  std::vector<ItemIndex> negatives;
  std::vector<ItemIndex> window;
  std::vector<Matrix> intra_labels;
  std::vector<Matrix> intra_weights;
};

/// A related pair (head, relation, positive tail) with one sampled unrelated tail.
struct InterSample {
  ItemIndex head = kPaddingItem;
  RelationIndex relation = 0;
  ItemIndex positive = kPaddingItem;
  ItemIndex negative = kPaddingItem;
};

struct Batch {
  std::vector<SequenceExample> sequences;
  std::vector<InterSample> inter;
};

/// Next-item supervision: input = train[:-1], target = train[1:], both
/// truncated to L; one negative per position drawn from items outside the
/// user's training prefix.
SequenceExample make_sequence_example(const InteractionCorpus& corpus, const RelationStore& store, UserIndex user,
                                      const HyperParams& hyper, Rng& rng);

/// Intra labels/weights for an explicit item window (all pairs j > i, every relation).
void fill_intra_supervision(SequenceExample& example, const RelationStore& store, int neg_cap, Rng& rng);

/// `count` related pairs drawn uniformly from all relation pairs, each with a fresh negative.
std::vector<InterSample> sample_inter(const RelationStore& store, int count, Rng& rng);

Batch make_batch(const InteractionCorpus& corpus, const RelationStore& store, std::span<const UserIndex> users,
                 const HyperParams& hyper, Rng& rng);

// ---- loss terms (all sums, not means) -------------------------------------------

/// -sum_t [log s(r+) + log(1 - s(r-))] over supervised positions of `output`.
Var pred_loss(const BoundParams& bound, Var output, const SequenceExample& example);
/// -sum_{i<j} sum_r [y log s(f_r) + (1 - y) neg(f_r)] over one example's window.
Var intra_loss(const BoundParams& bound, const SequenceExample& example, BceForm form);
/// -sum [log s(f_r(h, t+)) + neg(f_r(h, t-))].
Var inter_loss(const BoundParams& bound, std::span<const InterSample> samples, BceForm form);
/// Sum of squares of every parameter except the pinned padding row.
Var l2_penalty(const BoundParams& bound);

struct LossBreakdown {
  double pred = 0.0;
  double intra = 0.0;
  double inter = 0.0;
  double l2 = 0.0;
  double total = 0.0;
};

struct BatchLoss {
  Var total;
  LossBreakdown parts;
};

/// L_pred + alpha L_intra + beta L_inter + lambda ||Theta||^2 for one batch.
/// Terms with a zero weight are still evaluated so their values are reported.
BatchLoss batch_loss(const BoundParams& bound, const Batch& batch, const ForwardContext& ctx);

/// Loss and gradients of one batch. `rng` drives dropout only.
struct LossAndGradients {
  LossBreakdown loss;
  Gradients gradients;
};
LossAndGradients loss_and_gradients(const ModelParams& params, const HyperParams& hyper, const Batch& batch,
                                    bool training, Rng& rng);

/// Central-difference check of the total loss gradient on a fixed batch with
/// dropout off. `coordinates` = 0 checks every parameter.
GradCheckResult check_loss_gradients(const ModelParams& params, const HyperParams& hyper, const Batch& batch,
                                     std::size_t coordinates, std::uint64_t seed, double h = 1e-5);

}  // namespace mrsr

#include "mrsr/gradcheck.hpp"
#include "mrsr/losses.hpp"
#include "mrsr/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace mrsr;

namespace {

const double kLogSigmoidOne = -std::log(1.0 / (1.0 + std::exp(-1.0)));  // -log s(1) ~ 0.3133

HyperParams tiny_hyper() {
  HyperParams h = GradCheckSpec::default_hyper();
  h.lambda = 0.0;
  return h;
}

/// Parameters with one nonzero entry per tensor kind we care about.
ModelParams zero_params(const HyperParams& h, ItemIndex items, int relations) {
  Rng rng(0);
  return init_params(h, items, relations, rng).zeros_like();
}

SequenceExample window_example(std::vector<ItemIndex> window, const RelationStore& store) {
  SequenceExample ex;
  ex.window = std::move(window);
  Rng rng(0);
  fill_intra_supervision(ex, store, 0, rng);
  return ex;
}

std::vector<UserIndex> all_users(const InteractionCorpus& corpus) {
  std::vector<UserIndex> users(static_cast<std::size_t>(corpus.num_users()));
  std::iota(users.begin(), users.end(), UserIndex{1});
  return users;
}

}  // namespace

TEST_CASE("pred_loss hand values") {
  const HyperParams h = tiny_hyper();
  ModelParams p = zero_params(h, 4, 0);
  // output row t = e_0; M[2] = 0 so r+ = 0; M[3] = e_0 so r- = 1
  p.item_embedding(3, 0) = 1.0;
  Tape tape;
  const BoundParams bound = bind(tape, p, false);
  Matrix out = Matrix::Zero(6, 8);
  out(5, 0) = 1.0;
  SequenceExample ex;
  ex.positives.assign(6, 0);
  ex.negatives.assign(6, 0);
  ex.positives[5] = 2;
  ex.negatives[5] = 3;
  // -log s(0) - log(1 - s(1))
  const double expected = std::log(2.0) + std::log1p(std::exp(1.0));
  CHECK(pred_loss(bound, tape.constant(out), ex).scalar() == doctest::Approx(expected).epsilon(1e-14));

  ex.positives[5] = 0;
  CHECK(pred_loss(bound, tape.constant(out), ex).scalar() == 0.0);
}

TEST_CASE("pred_loss approaches zero in the perfect-fit limit") {
  const HyperParams h = tiny_hyper();
  ModelParams p = zero_params(h, 4, 0);
  p.item_embedding(2, 0) = 1e3;
  p.item_embedding(3, 0) = -1e3;
  Tape tape;
  Matrix out = Matrix::Zero(6, 8);
  out(5, 0) = 1.0;
  SequenceExample ex;
  ex.positives.assign(6, 0);
  ex.negatives.assign(6, 0);
  ex.positives[5] = 2;
  ex.negatives[5] = 3;
  const double loss = pred_loss(bind(tape, p, false), tape.constant(out), ex).scalar();
  CHECK(std::isfinite(loss));
  CHECK(loss < 1e-12);
}

TEST_CASE("intra_loss hand values") {
  const HyperParams h = tiny_hyper();
  RelationStore store({"r"}, 4);
  ModelParams p = zero_params(h, 4, 1);
  Tape tape;

  // no relation pairs, f = 0: three pairs j > i, each -log s(1 - 0)
  auto ex = window_example({1, 2, 3}, store);
  CHECK(intra_loss(bind(tape, p, false), ex, BceForm::literal).scalar() ==
        doctest::Approx(3.0 * kLogSigmoidOne).epsilon(1e-14));

  // single positive pair with f = 1
  store.insert(1, 0, 2);
  p.item_embedding(1, 0) = 1.0;
  p.item_embedding(2, 0) = 1.0;
  p.relation_proj[0](0, 0) = 1.0;
  ex = window_example({1, 2}, store);
  CHECK(intra_loss(bind(tape, p, false), ex, BceForm::literal).scalar() == doctest::Approx(kLogSigmoidOne).epsilon(1e-14));

  ex = window_example({1}, store);
  CHECK(intra_loss(bind(tape, p, false), ex, BceForm::literal).scalar() == 0.0);
  ex = window_example({}, store);
  CHECK(intra_loss(bind(tape, p, false), ex, BceForm::literal).scalar() == 0.0);
}

TEST_CASE("intra supervision enumerates ordered pairs with store labels") {
  RelationStore store({"a", "b"}, 6);
  store.insert(1, 0, 3);
  store.insert(3, 0, 1);
  store.insert(2, 1, 5);
  const auto ex = window_example({3, 2, 1, 5}, store);
  REQUIRE(ex.intra_labels.size() == 2);
  for (int r = 0; r < 2; ++r)
    for (Eigen::Index i = 0; i < 4; ++i)
      for (Eigen::Index j = 0; j < 4; ++j) {
        CHECK(ex.intra_weights[static_cast<std::size_t>(r)](i, j) == (j > i ? 1.0 : 0.0));
        const bool related = j > i && store.contains(ex.window[static_cast<std::size_t>(i)], r, ex.window[static_cast<std::size_t>(j)]);
        CHECK(ex.intra_labels[static_cast<std::size_t>(r)](i, j) == (related ? 1.0 : 0.0));
      }
  CHECK(ex.intra_labels[0](0, 2) == 1.0);
  CHECK(ex.intra_labels[1](1, 3) == 1.0);

  RelationStore sparse({"a"}, 6);
  Rng rng(1);
  SequenceExample capped;
  capped.window = {1, 2, 3, 4, 5, 6};
  fill_intra_supervision(capped, sparse, 4, rng);
  CHECK(capped.intra_weights[0].sum() == 4.0);
}

TEST_CASE("intra_loss over a batch is the sum over its sequences") {
  SynthSpec spec;
  spec.users = 6;
  spec.items = 12;
  spec.p_relation = 0.5;
  const auto data = generate_synthetic(spec, 3);
  const HyperParams h = tiny_hyper();
  Rng rng(4);
  ModelParams p = init_params(h, data.corpus.num_items(), 2, rng);
  const auto users = all_users(data.corpus);
  const Batch batch = make_batch(data.corpus, data.relations, users, h, rng);
  Tape tape;
  const BoundParams bound = bind(tape, p, false);
  double separate = 0.0;
  for (const auto& ex : batch.sequences) separate += intra_loss(bound, ex, BceForm::literal).scalar();
  const BatchLoss whole = batch_loss(bound, batch, ForwardContext{h, false, nullptr});
  CHECK(whole.parts.intra == doctest::Approx(separate).epsilon(1e-13));
}

TEST_CASE("inter_loss hand values") {
  const HyperParams h = tiny_hyper();
  ModelParams p = zero_params(h, 5, 2);
  Tape tape;
  const std::vector<InterSample> samples = {{1, 0, 2, 3}, {4, 1, 5, 1}};
  // W_r = 0: each sample is -log s(0) - log s(1)
  CHECK(inter_loss(bind(tape, p, false), samples, BceForm::literal).scalar() ==
        doctest::Approx(2.0 * (std::log(2.0) + kLogSigmoidOne)).epsilon(1e-14));
  CHECK(inter_loss(bind(tape, p, false), {}, BceForm::literal).scalar() == 0.0);
}

TEST_CASE("sample_inter draws related positives and unrelated negatives") {
  SynthSpec spec;
  spec.relations = 3;
  const auto data = generate_synthetic(spec, 5);
  Rng rng(6);
  const auto samples = sample_inter(data.relations, 500, rng);
  CHECK(samples.size() == 500);
  for (const auto& s : samples) {
    CHECK(data.relations.contains(s.head, s.relation, s.positive));
    CHECK_FALSE(data.relations.contains(s.head, s.relation, s.negative));
    CHECK(s.negative != s.head);
    CHECK(s.negative != 0);
  }
  CHECK(sample_inter(RelationStore({"r"}, 4), 10, rng).empty());
}

TEST_CASE("sequence examples follow the shifted next-item layout") {
  SynthSpec spec;
  spec.users = 5;
  spec.items = 30;
  const auto data = generate_synthetic(spec, 7);
  HyperParams h = tiny_hyper();
  h.max_len = 4;
  Rng rng(8);
  for (UserIndex u = 1; u <= data.corpus.num_users(); ++u) {
    const auto train = data.corpus.split(u).train;
    const auto ex = make_sequence_example(data.corpus, data.relations, u, h, rng);
    const std::vector<ItemIndex> prefix(train.begin(), train.end() - 1);
    CHECK(ex.input.items == pad_truncate(prefix, 4).items);
    const std::vector<ItemIndex> shifted(train.begin() + 1, train.end());
    const auto targets = pad_truncate(shifted, 4);
    for (std::size_t t = 0; t < 4; ++t) {
      CHECK(ex.positives[t] == (ex.input.items[t] == 0 ? 0 : targets.items[t]));
      if (ex.positives[t] != 0)
        CHECK(std::find(train.begin(), train.end(), ex.negatives[t]) == train.end());
    }
    CHECK(ex.window.size() == std::min<std::size_t>(train.size(), 4));
    CHECK(std::equal(ex.window.begin(), ex.window.end(), train.end() - static_cast<std::ptrdiff_t>(ex.window.size())));
  }
}

TEST_CASE("total loss composition") {
  SynthSpec spec;
  spec.users = 5;
  spec.p_relation = 0.5;
  const auto data = generate_synthetic(spec, 9);
  HyperParams h = tiny_hyper();
  Rng rng(10);
  const ModelParams p = init_params(h, data.corpus.num_items(), 2, rng);
  const auto users = all_users(data.corpus);
  const Batch batch = make_batch(data.corpus, data.relations, users, h, rng);
  auto evaluate = [&](double alpha, double beta, double lambda) {
    HyperParams hh = h;
    hh.alpha = alpha;
    hh.beta = beta;
    hh.lambda = lambda;
    Tape tape;
    return batch_loss(bind(tape, p, false), batch, ForwardContext{hh, false, nullptr}).parts;
  };
  const auto base = evaluate(0, 0, 0);
  CHECK(base.total == base.pred);
  const auto two = evaluate(2, 0, 0);
  CHECK(std::abs((two.total - base.total) - 2.0 * base.intra) < 1e-12);
  const auto all = evaluate(0.5, 0.25, 0.1);
  CHECK(all.total == doctest::Approx(base.pred + 0.5 * base.intra + 0.25 * base.inter + 0.1 * base.l2).epsilon(1e-13));
}

TEST_CASE("l2 penalty excludes the padding row") {
  const HyperParams h = tiny_hyper();
  ModelParams p = zero_params(h, 5, 2);
  for (auto& b : p.blocks) {
    b.ln1_gamma.setZero();
    b.ln2_gamma.setZero();
  }
  p.blocks[1].w_key(2, 3) = 2.0;
  p.item_embedding.row(0).setConstant(5.0);
  Tape tape;
  CHECK(l2_penalty(bind(tape, p, false)).scalar() == 4.0);
  p.relation_weight[1](0, 0) = 1.0;
  CHECK(l2_penalty(bind(tape, p, false)).scalar() == 5.0);
}

TEST_CASE("padding positions contribute nothing and the padding row gets no gradient") {
  SynthSpec spec;
  spec.users = 6;
  spec.p_relation = 0.5;
  const auto data = generate_synthetic(spec, 11);
  HyperParams h = tiny_hyper();
  h.max_len = 12;  // longer than any training prefix: every input is padded
  h.lambda = 0.1;
  Rng rng(12);
  ModelParams p = init_params(h, data.corpus.num_items(), 2, rng);
  const auto users = all_users(data.corpus);
  const Batch batch = make_batch(data.corpus, data.relations, users, h, rng);
  const auto grads = loss_and_gradients(p, h, batch, false, rng).gradients;
  CHECK(grads.item_embedding.row(0).isZero(0.0));

  ModelParams moved = p;
  moved.item_embedding.row(0).setConstant(0.7);
  Tape t1, t2;
  const auto a = batch_loss(bind(t1, p, false), batch, ForwardContext{h, false, nullptr}).parts;
  const auto b = batch_loss(bind(t2, moved, false), batch, ForwardContext{h, false, nullptr}).parts;
  CHECK(a.pred == b.pred);
  CHECK(a.intra == b.intra);
  CHECK(a.inter == b.inter);
  CHECK(a.l2 == b.l2);
}

TEST_CASE("relation projections learn only through attention when alpha = beta = 0") {
  SynthSpec spec;
  spec.users = 5;
  spec.p_relation = 0.5;
  const auto data = generate_synthetic(spec, 13);
  HyperParams h = tiny_hyper();
  h.alpha = 0.0;
  h.beta = 0.0;
  Rng rng(14);
  ModelParams p = init_params(h, data.corpus.num_items(), 2, rng);
  const Batch batch = make_batch(data.corpus, data.relations, all_users(data.corpus), h, rng);

  // w_r = 0: the attention path scales dW_r by w_r, so W_r gets nothing, while w_r itself does
  auto g = loss_and_gradients(p, h, batch, false, rng).gradients;
  for (int r = 0; r < 2; ++r) {
    CHECK(g.relation_proj[static_cast<std::size_t>(r)].isZero(0.0));
    CHECK(g.relation_weight[static_cast<std::size_t>(r)](0, 0) != 0.0);
  }
  p.relation_weight[0](0, 0) = 0.3;
  g = loss_and_gradients(p, h, batch, false, rng).gradients;
  CHECK(g.relation_proj[0].norm() > 0.0);
  CHECK(g.relation_proj[1].isZero(0.0));
}

TEST_CASE("the full weighted loss passes the finite-difference check") {
  for (BceForm form : {BceForm::literal, BceForm::standard}) {
    for (ResidualMode mode : {ResidualMode::standard, ResidualMode::self_sum}) {
      GradCheckSpec spec;
      spec.hyper.bce_form = form;
      spec.hyper.residual_mode = mode;
      spec.coordinates = 0;
      const GradCheckReport report = run_gradcheck(spec);
      INFO("worst ", report.worst_parameter, " analytic ", report.result.analytic_at_worst, " numeric ",
           report.result.numeric_at_worst);
      CHECK(report.result.coordinates == static_cast<std::size_t>(report.parameters));
      CHECK(report.result.max_rel_error < 1e-4);
      CHECK(std::isfinite(report.loss));
    }
  }
}

TEST_CASE("corrupting one gradient coordinate is detected") {
  GradCheckSpec spec;
  const GradCheckProblem problem = make_gradcheck_problem(spec);
  Rng rng(0);
  Vector analytic = loss_and_gradients(problem.params, spec.hyper, problem.batch, false, rng).gradients.flatten();
  Eigen::Index idx = 0;
  analytic.cwiseAbs().maxCoeff(&idx);
  analytic(idx) *= 1.5;
  ModelParams probe = problem.params;
  auto f = [&](const Vector& flat) {
    probe.assign_flat(flat);
    Tape tape;
    return batch_loss(bind(tape, probe, false), problem.batch, ForwardContext{spec.hyper, false, nullptr}).parts.total;
  };
  const auto result = finite_diff_check(f, problem.params.flatten(), analytic);
  CHECK(result.max_rel_error > 1e-2);
  CHECK(static_cast<Eigen::Index>(result.worst_coordinate) == idx);
}

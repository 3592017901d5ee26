#include "mrsr/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mrsr {

OptimState OptimState::zeros_for(const ModelParams& params) {
  return OptimState{params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(ModelParams& params, const Gradients& grads, OptimState& state, double lr, const AdamSettings& adam) {
  std::vector<Matrix*> p, m, v;
  std::vector<const Matrix*> g;
  params.for_each([&](const std::string&, Matrix& x) { p.push_back(&x); });
  state.first_moment.for_each([&](const std::string&, Matrix& x) { m.push_back(&x); });
  state.second_moment.for_each([&](const std::string&, Matrix& x) { v.push_back(&x); });
  grads.for_each([&](const std::string&, const Matrix& x) { g.push_back(&x); });
  require(p.size() == g.size() && p.size() == m.size() && p.size() == v.size(), "adam_step: structure mismatch");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(adam.beta1, t);
  const double correction2 = 1.0 - std::pow(adam.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    require(p[i]->rows() == g[i]->rows() && p[i]->cols() == g[i]->cols(), "adam_step: gradient shape mismatch");
    *m[i] = adam.beta1 * *m[i] + (1.0 - adam.beta1) * *g[i];
    *v[i] = adam.beta2 * *v[i] + (1.0 - adam.beta2) * g[i]->cwiseAbs2();
    const auto m_hat = m[i]->array() / correction1;
    const auto v_hat = v[i]->array() / correction2;
    p[i]->array() -= lr * m_hat / (v_hat.sqrt() + adam.eps);
  }
  params.pin_padding_row();
}

// ---- training ------------------------------------------------------------------

namespace {

double parameter_norm(const ModelParams& params) {
  double total = 0.0;
  params.for_each([&](const std::string&, const Matrix& m) { total += m.squaredNorm(); });
  return std::sqrt(total);
}

Rng epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  return Rng(seq);
}

}  // namespace

EpochRecord train_epoch(const InteractionCorpus& corpus, const RelationStore& store, ModelParams& params,
                        OptimState& state, const HyperParams& hyper, Rng& rng) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<UserIndex> order(static_cast<std::size_t>(corpus.num_users()));
  std::iota(order.begin(), order.end(), UserIndex{1});
  std::shuffle(order.begin(), order.end(), rng);

  EpochRecord record;
  std::size_t batches = 0;
  const auto batch_size = static_cast<std::size_t>(hyper.batch_size);
  for (std::size_t first = 0; first < order.size(); first += batch_size) {
    const auto users = std::span<const UserIndex>(order).subspan(first, std::min(batch_size, order.size() - first));
    const Batch batch = make_batch(corpus, store, users, hyper, rng);
    LossAndGradients step = loss_and_gradients(params, hyper, batch, true, rng);
    if (!std::isfinite(step.loss.total)) {
      std::ostringstream msg;
      msg << "non-finite loss in batch " << batches << " (pred=" << step.loss.pred << " intra=" << step.loss.intra
          << " inter=" << step.loss.inter << " l2=" << step.loss.l2 << ", parameter norm "
          << parameter_norm(params) << ", first user " << users.front() << ")";
      throw TrainingDiverged(msg.str());
    }
    adam_step(params, step.gradients, state, hyper.lr);
    record.loss.pred += step.loss.pred;
    record.loss.intra += step.loss.intra;
    record.loss.inter += step.loss.inter;
    record.loss.l2 += step.loss.l2;
    record.loss.total += step.loss.total;
    ++batches;
  }
  if (batches > 0) {
    const auto n = static_cast<double>(batches);
    record.loss = {record.loss.pred / n, record.loss.intra / n, record.loss.inter / n, record.loss.l2 / n,
                   record.loss.total / n};
  }
  record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

FitResult fit(const InteractionCorpus& corpus, const RelationStore& store, const HyperParams& hyper,
              const FitOptions& options) {
  hyper.validate();
  require(corpus.max_len() > 0, "fit: corpus without max_len");
  Rng init_rng(hyper.seed);
  Checkpoint current;
  current.hyper = hyper;
  current.num_items = corpus.num_items();
  current.relation_names = store.relation_names();
  current.params = init_params(hyper, corpus.num_items(), store.num_relations(), init_rng);
  current.optimizer = OptimState::zeros_for(current.params);

  const Validator validator = options.validator ? options.validator : [&](const ModelParams& params) {
    return evaluate(params, hyper, corpus, EvalSplit::valid, {hyper.filter_seen, hyper.threads}).overall.mrr;
  };

  FitResult result;
  double best = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    Rng rng = epoch_rng(hyper.seed, epoch);
    EpochRecord record = train_epoch(corpus, store, current.params, current.optimizer, hyper, rng);
    record.epoch = epoch;
    record.valid_mrr = validator(current.params);
    result.log.epochs.push_back(record);
    if (options.on_epoch) options.on_epoch(record);
    if (result.log.best_epoch < 0 || record.valid_mrr > best) {
      best = record.valid_mrr;
      since_best = 0;
      current.epoch = epoch;
      current.valid_mrr = record.valid_mrr;
      result.best = current;
      result.log.best_epoch = epoch;
    } else if (++since_best >= hyper.patience) {
      result.stopped_early = true;
      break;
    }
  }
  const EvalOptions eval{hyper.filter_seen, hyper.threads};
  result.best_valid = evaluate(result.best.params, hyper, corpus, EvalSplit::valid, eval).overall;
  result.test = evaluate(result.best.params, hyper, corpus, EvalSplit::test, eval).overall;
  return result;
}

std::string TrainLog::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json line;
    line["epoch"] = e.epoch;
    line["loss_total"] = e.loss.total;
    line["loss_pred"] = e.loss.pred;
    line["loss_intra"] = e.loss.intra;
    line["loss_inter"] = e.loss.inter;
    line["loss_l2"] = e.loss.l2;
    line["valid_mrr"] = e.valid_mrr;
    line["best"] = e.epoch == best_epoch;
    out += line.dump() + "\n";
  }
  return out;
}

std::string TrainLog::timing_tsv() const {
  std::ostringstream out;
  out << "epoch\twall_seconds\n";
  for (const auto& e : epochs) out << e.epoch << '\t' << e.wall_seconds << '\n';
  return out.str();
}

// ---- sweep ------------------------------------------------------------------------

SweepGrid SweepGrid::parse(const KeyValues& values) {
  SweepGrid grid;
  const auto& known = HyperParams::keys();
  for (const auto& [key, list] : values) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw DataError("grid: unknown key " + key);
    std::vector<std::string> candidates;
    for (const auto& v : split(list, ',')) {
      const std::string value = trim(v);
      if (!value.empty()) candidates.push_back(value);
    }
    if (candidates.empty()) throw DataError("grid: no values for " + key);
    grid.axes.emplace_back(key, std::move(candidates));
  }
  if (grid.axes.empty()) throw DataError("grid: no axes");
  return grid;
}

std::vector<KeyValues> SweepGrid::points() const {
  std::vector<KeyValues> points{KeyValues{}};
  for (const auto& [key, values] : axes) {
    std::vector<KeyValues> next;
    for (const auto& partial : points) {
      for (const auto& value : values) {
        KeyValues p = partial;
        p[key] = value;
        next.push_back(std::move(p));
      }
    }
    points = std::move(next);
  }
  return points;
}

std::vector<SweepRow> sweep(const InteractionCorpus& corpus, const RelationStore& store, const HyperParams& base,
                            const SweepGrid& grid) {
  std::vector<SweepRow> rows;
  for (const auto& point : grid.points()) {
    SweepRow row;
    row.setting = point;
    try {
      const HyperParams hyper = HyperParams::from_kv(point, base);
      const FitResult result = fit(corpus, store, hyper);
      row.valid_mrr = result.best.valid_mrr;
      row.test = result.test;
      row.best_epoch = result.log.best_epoch;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.error.empty() != b.error.empty()) return a.error.empty();
    return a.valid_mrr > b.valid_mrr;
  });
  return rows;
}

std::string sweep_table(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "setting\tvalid_mrr\ttest_recall@5\ttest_recall@10\ttest_ndcg@5\ttest_ndcg@10\ttest_mrr\tbest_epoch\terror\n";
  for (const auto& row : rows) {
    std::string setting;
    for (const auto& [k, v] : row.setting) setting += (setting.empty() ? "" : ",") + k + "=" + v;
    out << setting << '\t' << format_double(row.valid_mrr) << '\t' << format_double(row.test.recall5) << '\t'
        << format_double(row.test.recall10) << '\t' << format_double(row.test.ndcg5) << '\t'
        << format_double(row.test.ndcg10) << '\t' << format_double(row.test.mrr) << '\t' << row.best_epoch << '\t'
        << row.error << '\n';
  }
  return out.str();
}

}  // namespace mrsr

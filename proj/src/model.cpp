#include "mrsr/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace mrsr {

// ---- hyperparameters ---------------------------------------------------------

const std::vector<std::string>& HyperParams::keys() {
  static const std::vector<std::string> all = {
      "max_len", "dim",        "ffn_dim",    "layers",        "heads",         "dropout",     "alpha",
      "beta",    "lambda",     "lr",         "batch_size",    "patience",      "max_epochs",  "seed",
      "residual_mode",         "bce_form",   "inter_budget",  "intra_neg_cap", "filter_seen", "threads"};
  return all;
}

void HyperParams::validate() const {
  std::vector<std::string> problems;
  auto check = [&](bool ok, const char* what) {
    if (!ok) problems.emplace_back(what);
  };
  check(max_len >= 1, "max_len must be >= 1");
  check(dim >= 1, "dim must be >= 1");
  check(ffn_dim >= 0, "ffn_dim must be >= 0");
  check(layers >= 0, "layers must be >= 0");
  check(heads >= 1 && dim % std::max(heads, 1) == 0, "dim must be divisible by heads");
  check(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  check(std::isfinite(alpha) && alpha >= 0.0, "alpha must be finite and >= 0");
  check(std::isfinite(beta) && beta >= 0.0, "beta must be finite and >= 0");
  check(std::isfinite(lambda) && lambda >= 0.0, "lambda must be finite and >= 0");
  check(std::isfinite(lr) && lr >= 0.0, "lr must be finite and >= 0");
  check(batch_size >= 1, "batch_size must be >= 1");
  check(patience >= 1, "patience must be >= 1");
  check(max_epochs >= 1, "max_epochs must be >= 1");
  check(inter_budget >= 0, "inter_budget must be >= 0");
  check(intra_neg_cap >= 0, "intra_neg_cap must be >= 0");
  check(threads >= 1, "threads must be >= 1");
  if (problems.empty()) return;
  std::string message = "invalid hyperparameters:";
  for (const auto& p : problems) message += "\n  " + p;
  throw ContractViolation(message);
}

KeyValues HyperParams::to_kv() const {
  return {{"max_len", std::to_string(max_len)},
          {"dim", std::to_string(dim)},
          {"ffn_dim", std::to_string(ffn_dim)},
          {"layers", std::to_string(layers)},
          {"heads", std::to_string(heads)},
          {"dropout", format_double(dropout)},
          {"alpha", format_double(alpha)},
          {"beta", format_double(beta)},
          {"lambda", format_double(lambda)},
          {"lr", format_double(lr)},
          {"batch_size", std::to_string(batch_size)},
          {"patience", std::to_string(patience)},
          {"max_epochs", std::to_string(max_epochs)},
          {"seed", std::to_string(seed)},
          {"residual_mode", residual_mode == ResidualMode::self_sum ? "self_sum" : "standard"},
          {"bce_form", bce_form == BceForm::standard ? "standard" : "literal"},
          {"inter_budget", std::to_string(inter_budget)},
          {"intra_neg_cap", std::to_string(intra_neg_cap)},
          {"filter_seen", filter_seen ? "true" : "false"},
          {"threads", std::to_string(threads)}};
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw DataError("config: " + key + "='" + text + "' is not a valid number");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw DataError("config: " + key + "='" + text + "' is not a boolean");
}

}  // namespace

HyperParams HyperParams::from_kv(const KeyValues& values, HyperParams base) {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : values) {
    if (key == "max_len") base.max_len = parse_number<int>(key, value);
    else if (key == "dim") base.dim = parse_number<int>(key, value);
    else if (key == "ffn_dim") base.ffn_dim = parse_number<int>(key, value);
    else if (key == "layers") base.layers = parse_number<int>(key, value);
    else if (key == "heads") base.heads = parse_number<int>(key, value);
    else if (key == "dropout") base.dropout = parse_number<double>(key, value);
    else if (key == "alpha") base.alpha = parse_number<double>(key, value);
    else if (key == "beta") base.beta = parse_number<double>(key, value);
    else if (key == "lambda") base.lambda = parse_number<double>(key, value);
    else if (key == "lr") base.lr = parse_number<double>(key, value);
    else if (key == "batch_size") base.batch_size = parse_number<int>(key, value);
    else if (key == "patience") base.patience = parse_number<int>(key, value);
    else if (key == "max_epochs") base.max_epochs = parse_number<int>(key, value);
    else if (key == "seed") base.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "inter_budget") base.inter_budget = parse_number<int>(key, value);
    else if (key == "intra_neg_cap") base.intra_neg_cap = parse_number<int>(key, value);
    else if (key == "threads") base.threads = parse_number<int>(key, value);
    else if (key == "filter_seen") base.filter_seen = parse_bool(key, value);
    else if (key == "residual_mode") {
      if (value == "standard") base.residual_mode = ResidualMode::standard;
      else if (value == "self_sum") base.residual_mode = ResidualMode::self_sum;
      else throw DataError("config: residual_mode must be standard or self_sum");
    } else if (key == "bce_form") {
      if (value == "literal") base.bce_form = BceForm::literal;
      else if (value == "standard") base.bce_form = BceForm::standard;
      else throw DataError("config: bce_form must be literal or standard");
    } else {
      unknown.push_back(key);
    }
  }
  if (!unknown.empty()) {
    std::string message = "config: unknown keys:";
    for (const auto& k : unknown) message += " " + k;
    throw DataError(message);
  }
  return base;
}

HyperParams HyperParams::from_kv(const KeyValues& values) { return from_kv(values, HyperParams{}); }

// ---- parameters --------------------------------------------------------------

ModelParams ModelParams::zeros_like() const {
  ModelParams out = *this;
  out.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  return out;
}

Eigen::Index ModelParams::size() const {
  Eigen::Index total = 0;
  for_each([&](const std::string&, const Matrix& m) { total += m.size(); });
  return total;
}

Vector ModelParams::flatten() const {
  Vector flat(size());
  Eigen::Index offset = 0;
  for_each([&](const std::string&, const Matrix& m) {
    flat.segment(offset, m.size()) = m.reshaped<Eigen::RowMajor>();
    offset += m.size();
  });
  return flat;
}

void ModelParams::assign_flat(const Vector& flat) {
  require(flat.size() == size(), "ModelParams::assign_flat: size mismatch");
  Eigen::Index offset = 0;
  for_each([&](const std::string&, Matrix& m) {
    m.reshaped<Eigen::RowMajor>() = flat.segment(offset, m.size());
    offset += m.size();
  });
}

std::string ModelParams::coordinate_name(Eigen::Index flat) const {
  std::string name = "out of range";
  Eigen::Index offset = 0;
  for_each([&](const std::string& tensor, const Matrix& m) {
    if (flat >= offset && flat < offset + m.size()) {
      const Eigen::Index local = flat - offset;
      name = tensor + "[" + std::to_string(local / m.cols()) + "," + std::to_string(local % m.cols()) + "]";
    }
    offset += m.size();
  });
  return name;
}

void ModelParams::pin_padding_row() {
  if (item_embedding.rows() > 0) item_embedding.row(0).setZero();
}

bool ModelParams::operator==(const ModelParams& other) const {
  std::vector<const Matrix*> mine;
  std::vector<const Matrix*> theirs;
  for_each([&](const std::string&, const Matrix& m) { mine.push_back(&m); });
  other.for_each([&](const std::string&, const Matrix& m) { theirs.push_back(&m); });
  if (mine.size() != theirs.size()) return false;
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i]->rows() != theirs[i]->rows() || mine[i]->cols() != theirs[i]->cols()) return false;
    if (*mine[i] != *theirs[i]) return false;
  }
  return true;
}

ModelParams init_params(const HyperParams& hyper, ItemIndex num_items, int num_relations, Rng& rng) {
  hyper.validate();
  const Eigen::Index d = hyper.dim;
  const Eigen::Index ff = hyper.effective_ffn_dim();
  std::normal_distribution<double> normal(0.0, 0.02);
  auto random = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };
  ModelParams p;
  p.item_embedding = random(num_items + 1, d);
  p.pin_padding_row();
  p.position_embedding = random(hyper.max_len, d);
  for (int l = 0; l < hyper.layers; ++l) {
    BlockParams b;
    b.w_query = random(d, d);
    b.w_key = random(d, d);
    b.w_value = random(d, d);
    b.ffn_w1 = random(d, ff);
    b.ffn_b1 = Matrix::Zero(1, ff);
    b.ffn_w2 = random(ff, d);
    b.ffn_b2 = Matrix::Zero(1, d);
    b.ln1_gamma = Matrix::Ones(1, d);
    b.ln1_beta = Matrix::Zero(1, d);
    b.ln2_gamma = Matrix::Ones(1, d);
    b.ln2_beta = Matrix::Zero(1, d);
    p.blocks.push_back(std::move(b));
  }
  for (int r = 0; r < num_relations; ++r) {
    p.relation_proj.push_back(random(d, d));
    p.relation_weight.push_back(Matrix::Zero(1, 1));
  }
  return p;
}

// ---- binding -----------------------------------------------------------------

BoundParams bind(Tape& tape, const ModelParams& params, bool trainable) {
  auto put = [&](const Matrix& m) { return trainable ? tape.variable(m) : tape.constant(m); };
  BoundParams b;
  b.item_embedding = put(params.item_embedding);
  b.position_embedding = put(params.position_embedding);
  for (const auto& block : params.blocks) {
    b.blocks.push_back(BoundBlock{put(block.w_query), put(block.w_key), put(block.w_value), put(block.ffn_w1),
                                  put(block.ffn_b1), put(block.ffn_w2), put(block.ffn_b2), put(block.ln1_gamma),
                                  put(block.ln1_beta), put(block.ln2_gamma), put(block.ln2_beta)});
  }
  for (std::size_t r = 0; r < params.relation_proj.size(); ++r) {
    b.relation_proj.push_back(put(params.relation_proj[r]));
    b.relation_weight.push_back(put(params.relation_weight[r]));
  }
  return b;
}

Gradients collect_gradients(const BoundParams& bound, const ModelParams& params) {
  Gradients grads = params.zeros_like();
  std::vector<Matrix*> slots;
  grads.for_each([&](const std::string&, Matrix& m) { slots.push_back(&m); });
  std::size_t i = 0;
  bound.for_each([&](const Var& v) {
    const Matrix& g = v.grad();
    if (g.size() != 0) *slots[i] = g;
    ++i;
  });
  return grads;
}

// ---- forward -----------------------------------------------------------------

Var embed_sequence(const BoundParams& bound, const PaddedSequence& seq) {
  require(seq.length() == bound.position_embedding.rows(), "embed_sequence: sequence length differs from L");
  for (ItemIndex v : seq.items)
    require(v >= 0 && v < bound.item_embedding.rows(), "embed_sequence: item index out of range");
  return add(gather_rows(bound.item_embedding, seq.items), bound.position_embedding);
}

Var relation_term(const BoundParams& bound, Var x) {
  Var total;
  for (std::size_t r = 0; r < bound.relation_proj.size(); ++r) {
    Var projected = matmul(x, bound.relation_proj[r]);
    Var weighted = scale_by(matmul_nt(projected, projected), bound.relation_weight[r]);
    total = total.valid() ? add(total, weighted) : weighted;
  }
  return total;
}

namespace {

struct Projections {
  Var query, key, value, relations;
};

Projections project(const BoundBlock& block, const BoundParams& bound, Var x, AttentionKind kind) {
  Projections p{matmul(x, block.w_query), matmul(x, block.w_key), matmul(x, block.w_value), {}};
  if (kind == AttentionKind::relational) p.relations = relation_term(bound, x);
  return p;
}

Var head_logits(const Projections& p, int heads, int head) {
  const Eigen::Index width = p.query.cols() / heads;
  Var q = heads == 1 ? p.query : slice_cols(p.query, head * width, width);
  Var k = heads == 1 ? p.key : slice_cols(p.key, head * width, width);
  Var logits = matmul_nt(q, k);
  if (p.relations.valid()) logits = add(logits, p.relations);
  return scale(logits, 1.0 / std::sqrt(static_cast<double>(p.query.cols())));
}

Var feed_forward(const BoundBlock& block, Var x) {
  Var hidden = relu(add_row(matmul(x, block.ffn_w1), block.ffn_b1));
  return add_row(matmul(hidden, block.ffn_w2), block.ffn_b2);
}

}  // namespace

Var mrsa(const BoundBlock& block, const BoundParams& bound, Var x, const MaskMatrix& mask, const ForwardContext& ctx) {
  const int heads = ctx.hyper.heads;
  require(x.cols() % heads == 0, "mrsa: dim not divisible by heads");
  const Projections p = project(block, bound, x, ctx.attention);
  const Eigen::Index width = x.cols() / heads;
  std::vector<Var> outputs;
  outputs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var probs = softmax_masked(head_logits(p, heads, h), mask);
    if (ctx.training) probs = dropout(probs, ctx.hyper.dropout, *ctx.rng, true);
    Var v = heads == 1 ? p.value : slice_cols(p.value, h * width, width);
    outputs.push_back(matmul(probs, v));
  }
  return heads == 1 ? outputs.front() : concat_cols(outputs);
}

Var encode(const BoundParams& bound, const PaddedSequence& seq, const ForwardContext& ctx) {
  require(!ctx.training || ctx.rng != nullptr, "encode: training mode needs an rng");
  const MaskMatrix mask = causal_padding_mask(seq.length(), seq.true_length);
  Rng unused;
  Rng& rng = ctx.rng ? *ctx.rng : unused;
  auto drop = [&](Var v) { return dropout(v, ctx.hyper.dropout, rng, ctx.training); };
  Var x = embed_sequence(bound, seq);
  for (const BoundBlock& block : bound.blocks) {
    if (ctx.hyper.residual_mode == ResidualMode::standard) {
      Var attended = mrsa(block, bound, layer_norm(x, block.ln1_gamma, block.ln1_beta), mask, ctx);
      Var mid = add(x, drop(attended));
      Var ffn = feed_forward(block, layer_norm(mid, block.ln2_gamma, block.ln2_beta));
      x = add(mid, drop(ffn));
    } else {
      Var ffn = feed_forward(block, layer_norm(mrsa(block, bound, x, mask, ctx), block.ln1_gamma, block.ln1_beta));
      x = add(ffn, drop(ffn));
    }
  }
  return x;
}

Matrix attention_logits(const BlockParams& block, const ModelParams& params, const Matrix& x, int heads, int head,
                        bool with_relations) {
  require(heads >= 1 && head >= 0 && head < heads, "attention_logits: bad head index");
  Tape tape;
  ModelParams single = params;
  single.blocks = {block};
  const BoundParams bound = bind(tape, single, false);
  const Projections p =
      project(bound.blocks.front(), bound, tape.constant(x), with_relations ? AttentionKind::relational : AttentionKind::plain);
  return head_logits(p, heads, head).value();
}

double relation_score(const ModelParams& params, ItemIndex head, ItemIndex tail, RelationIndex relation) {
  require(relation >= 0 && relation < params.num_relations(), "relation_score: relation index out of range");
  require(head >= 1 && head < params.item_embedding.rows() && tail >= 1 && tail < params.item_embedding.rows(),
          "relation_score: item index out of range");
  const Matrix& w = params.relation_proj[static_cast<std::size_t>(relation)];
  return bilinear_score(params.item_embedding.row(head), w * w.transpose(), params.item_embedding.row(tail));
}

Vector next_item_scores(const RowVector& output, const ModelParams& params) {
  require(output.size() == params.item_embedding.cols(), "next_item_scores: output width differs from d");
  Vector scores = params.item_embedding * output.transpose();
  scores(0) = kNegInf;
  return scores;
}

}  // namespace mrsr

#pragma once

#include "mrsr/corpus.hpp"
#include "mrsr/kvfile.hpp"
#include "mrsr/tape.hpp"
#include "mrsr/types.hpp"

#include <string>
#include <vector>

namespace mrsr {

enum class ResidualMode {
  standard,  // pre-norm block: E' = E + Drop(MRSA(LN1 E)); out = E' + Drop(FFN(LN2 E'))
  self_sum,  // F = FFN(LN1(MRSA(E))); out = F + Drop(F)
};

struct HyperParams {
  int max_len = 50;
  int dim = 64;
  int ffn_dim = 0;  // 0 means "same as dim"
  int layers = 2;
  int heads = 1;
  double dropout = 0.5;
  double alpha = 0.5;
  double beta = 0.5;
  double lambda = 0.0;
  double lr = 1e-3;
  int batch_size = 128;
  int patience = 50;
  int max_epochs = 500;
  std::uint64_t seed = 42;
  ResidualMode residual_mode = ResidualMode::standard;
  BceForm bce_form = BceForm::literal;
  int inter_budget = 0;    // 0 means "batch_size"
  int intra_neg_cap = 0;   // 0 disables negative-pair subsampling
  bool filter_seen = false;
  int threads = 1;

  [[nodiscard]] int effective_ffn_dim() const { return ffn_dim > 0 ? ffn_dim : dim; }
  [[nodiscard]] int effective_inter_budget() const { return inter_budget > 0 ? inter_budget : batch_size; }

  /// Throws ContractViolation listing every violated constraint.
  void validate() const;
  [[nodiscard]] KeyValues to_kv() const;
  /// Applies `values` on top of `base`; unknown keys are rejected.
  static HyperParams from_kv(const KeyValues& values, HyperParams base);
  static HyperParams from_kv(const KeyValues& values);
  static const std::vector<std::string>& keys();
};

struct BlockParams {
  Matrix w_query, w_key, w_value;
  Matrix ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Matrix ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

/// Every learnable tensor. The same type doubles as the gradient container.
struct ModelParams {
  Matrix item_embedding;      // (|V|+1) x d, row 0 pinned to zero
  Matrix position_embedding;  // L x d
  std::vector<BlockParams> blocks;
  std::vector<Matrix> relation_proj;    // W_r, d x d
  std::vector<Matrix> relation_weight;  // w_r, 1 x 1

  [[nodiscard]] int num_relations() const { return static_cast<int>(relation_proj.size()); }
  [[nodiscard]] int dim() const { return static_cast<int>(item_embedding.cols()); }

  /// Visits (name, tensor) in a fixed order.
  template <typename Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

  [[nodiscard]] ModelParams zeros_like() const;
  [[nodiscard]] Eigen::Index size() const;
  [[nodiscard]] Vector flatten() const;
  void assign_flat(const Vector& flat);
  void pin_padding_row();
  /// "name[row,col]" of a flat coordinate, in flatten() order.
  [[nodiscard]] std::string coordinate_name(Eigen::Index flat) const;
  bool operator==(const ModelParams&) const;

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn& fn) {
    fn(std::string("item_embedding"), self.item_embedding);
    fn(std::string("position_embedding"), self.position_embedding);
    for (std::size_t l = 0; l < self.blocks.size(); ++l) {
      auto& b = self.blocks[l];
      const std::string p = "block" + std::to_string(l) + ".";
      fn(p + "w_query", b.w_query);
      fn(p + "w_key", b.w_key);
      fn(p + "w_value", b.w_value);
      fn(p + "ffn_w1", b.ffn_w1);
      fn(p + "ffn_b1", b.ffn_b1);
      fn(p + "ffn_w2", b.ffn_w2);
      fn(p + "ffn_b2", b.ffn_b2);
      fn(p + "ln1_gamma", b.ln1_gamma);
      fn(p + "ln1_beta", b.ln1_beta);
      fn(p + "ln2_gamma", b.ln2_gamma);
      fn(p + "ln2_beta", b.ln2_beta);
    }
    for (std::size_t r = 0; r < self.relation_proj.size(); ++r) {
      fn("relation" + std::to_string(r) + ".proj", self.relation_proj[r]);
      fn("relation" + std::to_string(r) + ".weight", self.relation_weight[r]);
    }
  }
};

using Gradients = ModelParams;

/// Normal(0, 0.02^2) weights, unit layer-norm gains, zero biases, w_r = 0.
ModelParams init_params(const HyperParams& hyper, ItemIndex num_items, int num_relations, Rng& rng);

// ---- tape binding ------------------------------------------------------------

struct BoundBlock {
  Var w_query, w_key, w_value;
  Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Var ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

/// ModelParams placed on a tape, as variables (training) or constants (inference).
struct BoundParams {
  Var item_embedding;
  Var position_embedding;
  std::vector<BoundBlock> blocks;
  std::vector<Var> relation_proj;
  std::vector<Var> relation_weight;

  template <typename Fn>
  void for_each(Fn&& fn) const;
};

BoundParams bind(Tape& tape, const ModelParams& params, bool trainable);
/// Gradients of the last backward() sweep, shaped like `params`.
Gradients collect_gradients(const BoundParams& bound, const ModelParams& params);

// ---- forward pass -------------------------------------------------------------

/// plain drops the relation term from every attention block (SASRec-style baseline).
enum class AttentionKind { relational, plain };

struct ForwardContext {
  const HyperParams& hyper;
  bool training = false;
  Rng* rng = nullptr;
  AttentionKind attention = AttentionKind::relational;
};

/// E[t] = M[s_t] + P[t].
Var embed_sequence(const BoundParams& bound, const PaddedSequence& seq);
/// sum_r w_r (X W_r)(X W_r)^T, or an invalid Var when there are no relations.
Var relation_term(const BoundParams& bound, Var x);
/// Multi-relational self-attention over one block input.
Var mrsa(const BoundBlock& block, const BoundParams& bound, Var x, const MaskMatrix& mask, const ForwardContext& ctx);
/// Stacked blocks; returns the L x d output sequence.
Var encode(const BoundParams& bound, const PaddedSequence& seq, const ForwardContext& ctx);

/// Pre-softmax attention logits of one head of one block, as the block sees them.
/// Used to verify the relation-term decomposition against a dense recomputation.
Matrix attention_logits(const BlockParams& block, const ModelParams& params, const Matrix& x, int heads, int head,
                        bool with_relations);

/// f_r(v_i, v_j) = M[v_i] W_r W_r^T M[v_j]^T.
double relation_score(const ModelParams& params, ItemIndex head, ItemIndex tail, RelationIndex relation);
/// score[v] = output . M[v]; score[0] = -inf.
Vector next_item_scores(const RowVector& output, const ModelParams& params);

// ---- inline ----------------------------------------------------------------

template <typename Fn>
void BoundParams::for_each(Fn&& fn) const {
  fn(item_embedding);
  fn(position_embedding);
  for (const auto& b : blocks) {
    for (const Var* v : {&b.w_query, &b.w_key, &b.w_value, &b.ffn_w1, &b.ffn_b1, &b.ffn_w2, &b.ffn_b2, &b.ln1_gamma,
                         &b.ln1_beta, &b.ln2_gamma, &b.ln2_beta})
      fn(*v);
  }
  for (std::size_t r = 0; r < relation_proj.size(); ++r) {
    fn(relation_proj[r]);
    fn(relation_weight[r]);
  }
}

}  // namespace mrsr

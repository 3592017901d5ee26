#include "mrsr/tape.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

namespace mrsr {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  require(rows() == 1 && cols() == 1, "Var::scalar on non-scalar node");
  return value()(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardFn backward) {
  assert(value.allFinite() && "non-finite value produced by a kernel");
  bool needs = false;
  for (const Var& p : parents) {
    require(p.tape() == this, "Tape::record: parent lives on another tape");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, needs});
  return {this, nodes_.size() - 1};
}

Matrix* Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return nullptr;
  if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  return &node.grad;
}

void Tape::backward(Var loss) {
  require(loss.tape() == this, "Tape::backward: loss lives on another tape");
  require(loss.rows() == 1 && loss.cols() == 1, "Tape::backward: loss must be a scalar");
  for (Node& node : nodes_) node.grad.resize(0, 0);
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward && node.grad.size() != 0) node.backward(*this, i);
  }
}

// ---- kernels --------------------------------------------------------------

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Tape& tape = *a.tape();
  return tape.record(a.value() * b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a.id())) t.accumulate(a.id(), g * b.value().transpose());
    if (t.requires_grad(b.id())) t.accumulate(b.id(), a.value().transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Tape& tape = *a.tape();
  return tape.record(a.value() * b.value().transpose(), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a.id())) t.accumulate(a.id(), g * b.value());
    if (t.requires_grad(b.id())) t.accumulate(b.id(), g.transpose() * a.value());
  });
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    t.accumulate(a.id(), t.grad(self));
    t.accumulate(b.id(), t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    t.accumulate(a.id(), t.grad(self));
    t.accumulate(b.id(), -t.grad(self));
  });
}

Var scale(Var a, double factor) {
  return a.tape()->record(a.value() * factor, {a}, [a, factor](Tape& t, std::size_t self) {
    t.accumulate(a.id(), t.grad(self) * factor);
  });
}

Var scale_by(Var a, Var s) {
  require(s.rows() == 1 && s.cols() == 1, "scale_by: factor must be 1x1");
  return a.tape()->record(a.value() * s.scalar(), {a, s}, [a, s](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a.id())) t.accumulate(a.id(), g * s.scalar());
    if (t.requires_grad(s.id())) t.accumulate(s.id(), Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
  });
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: row shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(a.id(), g);
    if (t.requires_grad(row.id())) t.accumulate(row.id(), g.colwise().sum());
  });
}

Var relu(Var a) {
  return a.tape()->record(a.value().cwiseMax(0.0), {a}, [a](Tape& t, std::size_t self) {
    t.accumulate(a.id(), (a.value().array() > 0.0).cast<double>().matrix().cwiseProduct(t.grad(self)));
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d,
          "layer_norm: gamma/beta must be 1 x d");
  Matrix normalized(n, d);
  Vector inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.value().row(i).mean();
    const double var = (x.value().row(i).array() - mean).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    normalized.row(i) = (x.value().row(i).array() - mean) * inv_std(i);
  }
  Matrix out = (normalized.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return x.tape()->record(std::move(out), {x, gamma, beta},
                          [x, gamma, beta, normalized, inv_std](Tape& t, std::size_t self) {
                            const Matrix& g = t.grad(self);
                            if (t.requires_grad(gamma.id()))
                              t.accumulate(gamma.id(), g.cwiseProduct(normalized).colwise().sum());
                            if (t.requires_grad(beta.id())) t.accumulate(beta.id(), g.colwise().sum());
                            if (!t.requires_grad(x.id())) return;
                            const Matrix dnorm = g.array().rowwise() * gamma.value().row(0).array();
                            Matrix dx(dnorm.rows(), dnorm.cols());
                            for (Eigen::Index i = 0; i < dnorm.rows(); ++i) {
                              const double mean_d = dnorm.row(i).mean();
                              const double mean_dn = dnorm.row(i).cwiseProduct(normalized.row(i)).mean();
                              dx.row(i) = inv_std(i) * (dnorm.row(i).array() - mean_d -
                                                        normalized.row(i).array() * mean_dn);
                            }
                            t.accumulate(x.id(), dx);
                          });
}

Var softmax_masked(Var logits, const MaskMatrix& allowed) {
  Matrix probs = masked_softmax_rows(logits.value(), allowed);
  return logits.tape()->record(probs, {logits}, [logits, probs](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Vector inner = probs.cwiseProduct(g).rowwise().sum();
    t.accumulate(logits.id(), probs.cwiseProduct(g.colwise() - inner));
  });
}

Var dropout(Var x, double p, Rng& rng, bool training) {
  require(p >= 0.0 && p < 1.0, "dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double kept_scale = 1.0 / (1.0 - p);
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? kept_scale : 0.0;
  return x.tape()->record(x.value().cwiseProduct(mask), {x}, [x, mask](Tape& t, std::size_t self) {
    t.accumulate(x.id(), t.grad(self).cwiseProduct(mask));
  });
}

Var gather_rows(Var table, std::span<const ItemIndex> indices) {
  Matrix out(static_cast<Eigen::Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] >= 0 && indices[i] < table.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(indices[i]);
  }
  std::vector<ItemIndex> rows(indices.begin(), indices.end());
  return table.tape()->record(std::move(out), {table}, [table, rows](Tape& t, std::size_t self) {
    Matrix* buffer = t.grad_buffer(table.id());
    const Matrix& g = t.grad(self);
    for (std::size_t i = 0; i < rows.size(); ++i) buffer->row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: range out of bounds");
  return a.tape()->record(a.value().middleCols(start, count), {a}, [a, start, count](Tape& t, std::size_t self) {
    Matrix* buffer = t.grad_buffer(a.id());
    buffer->middleCols(start, count) += t.grad(self);
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  Eigen::Index total = 0;
  for (const Var& p : parts) {
    require(p.rows() == parts.front().rows(), "concat_cols: row count mismatch");
    total += p.cols();
  }
  Matrix out(parts.front().rows(), total);
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  std::vector<Var> kept(parts.begin(), parts.end());
  return parts.front().tape()->record(std::move(out), parts, [kept](Tape& t, std::size_t self) {
    Eigen::Index off = 0;
    for (const Var& p : kept) {
      t.accumulate(p.id(), t.grad(self).middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var row_dot(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "row_dot: shape mismatch");
  Matrix out = a.value().cwiseProduct(b.value()).rowwise().sum();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a.id())) t.accumulate(a.id(), (b.value().array().colwise() * g.col(0).array()).matrix());
    if (t.requires_grad(b.id())) t.accumulate(b.id(), (a.value().array().colwise() * g.col(0).array()).matrix());
  });
}

Var sum(Var a) {
  return a.tape()->record(Matrix::Constant(1, 1, a.value().sum()), {a}, [a](Tape& t, std::size_t self) {
    t.accumulate(a.id(), Matrix::Constant(a.rows(), a.cols(), t.grad(self)(0, 0)));
  });
}

Var sum_squares(Var a, Eigen::Index skip_rows) {
  require(skip_rows >= 0 && skip_rows <= a.rows(), "sum_squares: bad skip_rows");
  const Eigen::Index kept = a.rows() - skip_rows;
  const double total = a.value().bottomRows(kept).squaredNorm();
  return a.tape()->record(Matrix::Constant(1, 1, total), {a}, [a, kept](Tape& t, std::size_t self) {
    Matrix* buffer = t.grad_buffer(a.id());
    buffer->bottomRows(kept) += 2.0 * t.grad(self)(0, 0) * a.value().bottomRows(kept);
  });
}

Var binary_xent(Var scores, const Matrix& labels, const Matrix& weights, BceForm form) {
  require(labels.rows() == scores.rows() && labels.cols() == scores.cols() && weights.rows() == scores.rows() &&
              weights.cols() == scores.cols(),
          "binary_xent: labels/weights shape mismatch");
  const Matrix& x = scores.value();
  // d(loss)/dx per entry, filled alongside the forward value.
  Matrix local(x.rows(), x.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double w = weights.data()[i];
    local.data()[i] = 0.0;
    if (w == 0.0) continue;
    const double y = labels.data()[i];
    const double xi = x.data()[i];
    if (y != 0.0) {
      const double z = clamp_score(xi);
      total -= w * y * log_sigmoid(z);
      if (std::abs(xi) < kScoreClamp) local.data()[i] -= w * y * sigmoid(-z);
    }
    if (y != 1.0) {
      const double raw = form == BceForm::literal ? 1.0 - xi : -xi;
      const double z = clamp_score(raw);
      total -= w * (1.0 - y) * log_sigmoid(z);
      // dz/dx = -1 in both forms
      if (std::abs(raw) < kScoreClamp) local.data()[i] += w * (1.0 - y) * sigmoid(-z);
    }
  }
  return scores.tape()->record(Matrix::Constant(1, 1, total), {scores}, [scores, local](Tape& t, std::size_t self) {
    t.accumulate(scores.id(), local * t.grad(self)(0, 0));
  });
}

// ---- gradient verification --------------------------------------------------

GradCheckResult finite_diff_check(const std::function<double(const Vector&)>& f, const Vector& point,
                                  const Vector& analytic, double h, std::size_t max_coords, std::uint64_t seed,
                                  double abs_floor) {
  require(point.size() == analytic.size(), "finite_diff_check: gradient size mismatch");
  std::vector<std::size_t> coords(static_cast<std::size_t>(point.size()));
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (max_coords != 0 && max_coords < coords.size()) {
    Rng rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
    std::sort(coords.begin(), coords.end());
  }
  GradCheckResult result;
  Vector probe = point;
  for (std::size_t c : coords) {
    const auto i = static_cast<Eigen::Index>(c);
    probe(i) = point(i) + h;
    const double up = f(probe);
    probe(i) = point(i) - h;
    const double down = f(probe);
    probe(i) = point(i);
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic(i);
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), abs_floor});
    if (result.coordinates == 0 || rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_coordinate = c;
      result.analytic_at_worst = a;
      result.numeric_at_worst = numeric;
    }
    ++result.coordinates;
  }
  return result;
}

}  // namespace mrsr

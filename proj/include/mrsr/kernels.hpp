#pragma once

// Scalar-generic forward math shared by the tape ops and by the
// reference scorers. Everything here is a pure function of its inputs.

#include "mrsr/types.hpp"

#include <algorithm>
#include <cmath>

namespace mrsr {

using MaskMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kScoreClamp = 30.0;

template <typename Scalar>
Scalar clamp_score(Scalar x) {
  return std::clamp(x, Scalar(-kScoreClamp), Scalar(kScoreClamp));
}

/// log(sigmoid(x)) without overflow for large |x|.
template <typename Scalar>
Scalar log_sigmoid(Scalar x) {
  using std::exp;
  using std::log1p;
  return x >= Scalar(0) ? -log1p(exp(-x)) : x - log1p(exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  return x >= Scalar(0) ? Scalar(1) / (Scalar(1) + exp(-x)) : exp(x) / (Scalar(1) + exp(x));
}

/// Row-wise softmax restricted to entries where `allowed` is true. Rows with
/// no allowed entry come out all-zero.
template <typename Derived>
MatrixT<typename Derived::Scalar> masked_softmax_rows(const Eigen::MatrixBase<Derived>& logits,
                                                      const MaskMatrix& allowed) {
  using Scalar = typename Derived::Scalar;
  require(logits.rows() == allowed.rows() && logits.cols() == allowed.cols(),
          "masked_softmax_rows: mask shape mismatch");
  MatrixT<Scalar> out = MatrixT<Scalar>::Zero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Scalar row_max = Scalar(0);
    bool any = false;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (allowed(i, j) && (!any || logits(i, j) > row_max)) {
        row_max = logits(i, j);
        any = true;
      }
    }
    if (!any) continue;
    Scalar total = Scalar(0);
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (allowed(i, j)) {
        out(i, j) = std::exp(logits(i, j) - row_max);
        total += out(i, j);
      }
    }
    out.row(i) /= total;
  }
  return out;
}

/// h * W * t^T for row-vector embeddings. With W = W_Q W_K^T this is an
/// attention logit, with W diagonal it is DistMult, with a normal W it is ANALOGY.
template <typename H, typename W, typename T>
typename H::Scalar bilinear_score(const Eigen::MatrixBase<H>& head, const Eigen::MatrixBase<W>& relation,
                                  const Eigen::MatrixBase<T>& tail) {
  require(head.size() == relation.rows() && tail.size() == relation.cols(),
          "bilinear_score: shape mismatch");
  return (head.derived().reshaped().transpose() * relation * tail.derived().reshaped()).value();
}

/// Causal + padding mask for a left-padded sequence of length L whose last
/// `true_length` slots are real: query i may attend key j iff j <= i and both are real.
inline MaskMatrix causal_padding_mask(Eigen::Index length, Eigen::Index true_length) {
  MaskMatrix mask = MaskMatrix::Constant(length, length, false);
  const Eigen::Index first_real = length - true_length;
  for (Eigen::Index i = first_real; i < length; ++i)
    for (Eigen::Index j = first_real; j <= i; ++j) mask(i, j) = true;
  return mask;
}

}  // namespace mrsr

#pragma once
// End-to-end gradient verification of the weighted training loss on a tiny
// random model and a synthetic batch.

#include "mrsr/kvfile.hpp"
#include "mrsr/losses.hpp"
#include "mrsr/model.hpp"
#include "mrsr/synth.hpp"

#include <string>

namespace mrsr {

struct GradCheckSpec {
  HyperParams hyper = default_hyper();
  int items = 12;
  int relations = 2;
  int users = 4;
  std::size_t coordinates = 200;  // 0 = every coordinate
  double step = 1e-5;
  /// Standard deviation of the random parameters. Far above the training init
  /// so that no loss term is flat at the probe point.
  double param_scale = 0.3;

  /// d=8, L=6, two blocks, two heads, dropout off, alpha = beta = lambda nonzero.
  static HyperParams default_hyper();
  /// Hyperparameter keys plus items, relations, users, coords, step, param_scale.
  static GradCheckSpec from_kv(const KeyValues& values);
  [[nodiscard]] KeyValues to_kv() const;
};

struct GradCheckProblem {
  SyntheticData data;
  ModelParams params;
  Batch batch;
};

/// Random parameters (every w_r nonzero) and one batch over all users.
GradCheckProblem make_gradcheck_problem(const GradCheckSpec& spec);

struct GradCheckReport {
  GradCheckResult result;
  std::string worst_parameter;
  Eigen::Index parameters = 0;
  double loss = 0.0;
};

GradCheckReport run_gradcheck(const GradCheckSpec& spec);

}  // namespace mrsr
